//! Byte-oriented binary range coder. Carries are resolved with the classic
//! cache plus pending-0xFF scheme; renormalization keeps the range at or
//! above 2^24 between symbols.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

/// Adaptive probability state for one regular-coded bin class.
/// `p1` is the probability of a 1 bin in 1/4096 units.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Context {
    p1: u16,
}

impl Context {
    pub fn new() -> Context {
        Context { p1: 2048 }
    }

    pub fn p1(&self) -> u16 {
        self.p1
    }

    #[inline]
    fn update(&mut self, bin: bool) {
        if bin {
            self.p1 += (4096 - self.p1) >> 5;
        } else {
            self.p1 -= self.p1 >> 5;
        }
        self.p1 = self.p1.clamp(1, 4095);
    }
}

impl Default for Context {
    fn default() -> Context {
        Context::new()
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    finished: bool,
}

impl RangeEncoder {
    pub fn new() -> RangeEncoder {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
            finished: false,
        }
    }

    /// Codes one context-modelled bin and adapts the context.
    pub fn encode_regular(&mut self, ctx: &mut Context, bin: bool) {
        debug_assert!(!self.finished);
        let split = (self.range >> 12) * ctx.p1 as u32;
        if bin {
            self.range = split;
        } else {
            self.low += split as u64;
            self.range -= split;
        }
        ctx.update(bin);
        self.renorm();
    }

    /// Codes one equiprobable bin. The range halves no matter the value,
    /// and no context is read or written.
    pub fn encode_bypass(&mut self, bin: bool) {
        debug_assert!(!self.finished);
        let half = self.range >> 1;
        if bin {
            self.low += half as u64;
        }
        self.range = half;
        self.renorm();
    }

    #[inline]
    fn renorm(&mut self) {
        while self.range < TOP {
            self.shift_low();
            self.range <<= 8;
        }
    }

    fn shift_low(&mut self) {
        let low32 = self.low as u32;
        if low32 < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut b = self.cache;
            loop {
                self.out.push(b.wrapping_add(carry));
                b = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (low32 >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((low32 & 0x00FF_FFFF) as u64) << 8;
    }

    /// Flushes the window so every committed bin is decodable. Appends at
    /// most five bytes beyond the data already attributable to coded bins;
    /// a second flush is an error.
    pub fn finish(&mut self) -> Result<()> {
        if self.finished {
            return Err(Error::format("range encoder already flushed"));
        }
        self.finished = true;
        for _ in 0..5 {
            self.shift_low();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        debug_assert!(self.finished, "into_bytes before finish loses bins");
        self.out
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

pub struct RangeDecoder<'a> {
    buf: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<RangeDecoder<'a>> {
        if buf.len() < 5 {
            return Err(Error::format("payload shorter than coder preamble"));
        }
        // The first byte is the encoder's initial cache placeholder.
        let code = u32::from_be_bytes(buf[1..5].try_into().unwrap());
        Ok(RangeDecoder { buf, pos: 5, code, range: u32::MAX })
    }

    #[inline]
    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| Error::format("truncated arithmetic payload"))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode_regular(&mut self, ctx: &mut Context) -> Result<bool> {
        let split = (self.range >> 12) * ctx.p1 as u32;
        let bin = self.code < split;
        if bin {
            self.range = split;
        } else {
            self.code -= split;
            self.range -= split;
        }
        ctx.update(bin);
        self.renorm()?;
        Ok(bin)
    }

    pub fn decode_bypass(&mut self) -> Result<bool> {
        let half = self.range >> 1;
        let bin = self.code >= half;
        if bin {
            self.code -= half;
        }
        self.range = half;
        self.renorm()?;
        Ok(bin)
    }

    #[inline]
    fn renorm(&mut self) -> Result<()> {
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    /// Bytes consumed so far, including the five-byte preamble.
    pub fn consumed(&self) -> usize {
        self.pos
    }
}
