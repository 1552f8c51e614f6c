//! Frame-level syntax model and its arithmetic-coded wire form.
//!
//! A frame payload is one range-coded bin string covering all macroblocks
//! in raster order. Sign bins are the only encryptable elements. Keystream
//! bits are consumed one per *slot* — every MVD component and every scan
//! position of every transform block owns a slot whether or not a sign bin
//! is actually present — so the slot-to-bit mapping depends only on frame
//! geometry and survives requantization unchanged.

use crate::cipher::Keystream;
use crate::entropy::{
    binarize_level, binarize_mvd_component, read_exp_golomb, sig_ctx_class, zigzag_scan, Bin,
    BinKind, Context, CtxId, RangeDecoder, RangeEncoder,
};
use crate::error::{Error, Result};

pub const MB_SIZE: usize = 16;
const MAX_LEVEL: u64 = 1 << 30;
const MAX_MVD: u64 = 1 << 20;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FrameKind {
    Intra,
    Inter,
}

impl FrameKind {
    pub fn to_u8(self) -> u8 {
        match self {
            FrameKind::Intra => 0,
            FrameKind::Inter => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<FrameKind> {
        match v {
            0 => Ok(FrameKind::Intra),
            1 => Ok(FrameKind::Inter),
            _ => Err(Error::format(format!("unknown frame type {v}"))),
        }
    }
}

/// Quantized levels of one transform block, raster order, n*n entries.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ResidualBlock {
    pub levels: Vec<i32>,
}

impl ResidualBlock {
    pub fn zeros(n: usize) -> ResidualBlock {
        ResidualBlock { levels: vec![0; n * n] }
    }

    pub fn is_coded(&self) -> bool {
        self.levels.iter().any(|&l| l != 0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MacroblockSyntax {
    /// Present exactly on inter macroblocks.
    pub mvd: Option<(i32, i32)>,
    pub luma: Vec<ResidualBlock>,
    pub cb: Vec<ResidualBlock>,
    pub cr: Vec<ResidualBlock>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FrameSyntax {
    pub kind: FrameKind,
    pub qp: u8,
    pub mbs: Vec<MacroblockSyntax>,
}

/// Fixed per-stream geometry: dimensions, transform size, scan order.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub mb_cols: usize,
    pub mb_rows: usize,
    scan: Vec<(usize, usize)>,
}

impl Geometry {
    pub fn new(width: usize, height: usize, block: usize) -> Geometry {
        assert!(width.is_multiple_of(MB_SIZE) && height.is_multiple_of(MB_SIZE));
        assert!(block == 4 || block == 8);
        Geometry {
            width,
            height,
            block,
            mb_cols: width / MB_SIZE,
            mb_rows: height / MB_SIZE,
            scan: zigzag_scan(block),
        }
    }

    pub fn mb_count(&self) -> usize {
        self.mb_cols * self.mb_rows
    }

    /// Transform blocks covering the 16x16 luma area of one macroblock.
    pub fn luma_blocks(&self) -> usize {
        (MB_SIZE / self.block) * (MB_SIZE / self.block)
    }

    /// Transform blocks covering one 8x8 chroma area.
    pub fn chroma_blocks(&self) -> usize {
        (8 / self.block) * (8 / self.block)
    }

    pub fn scan(&self) -> &[(usize, usize)] {
        &self.scan
    }
}

struct Contexts {
    mb_type: Context,
    mvd_nz: [Context; 2],
    cbf: [Context; 2],
    sig: [Context; 4],
    gt1: Context,
}

impl Contexts {
    fn new() -> Contexts {
        Contexts {
            mb_type: Context::new(),
            mvd_nz: [Context::new(); 2],
            cbf: [Context::new(); 2],
            sig: [Context::new(); 4],
            gt1: Context::new(),
        }
    }

    fn get(&mut self, id: CtxId) -> &mut Context {
        match id {
            CtxId::MbType => &mut self.mb_type,
            CtxId::MvdNonzero(c) => &mut self.mvd_nz[c as usize],
            CtxId::CodedBlock(p) => &mut self.cbf[p as usize],
            CtxId::Sig(c) => &mut self.sig[c as usize],
            CtxId::Gt1 => &mut self.gt1,
        }
    }
}

/// Raw bin log of one frame payload, as written to or read from the wire
/// (sign bins appear in their encrypted form).
pub type BinTrace = Vec<Bin>;

struct FrameWriter<'a> {
    rc: RangeEncoder,
    ctx: Contexts,
    ks: Option<&'a mut Keystream>,
    trace: Option<&'a mut BinTrace>,
}

impl<'a> FrameWriter<'a> {
    fn key_bit(&mut self) -> bool {
        match self.ks.as_mut() {
            Some(ks) => ks.next_bit(),
            None => false,
        }
    }

    /// Burns the keystream bit of a slot whose sign bin is absent.
    fn skip_sign_slot(&mut self) {
        let _ = self.key_bit();
    }

    fn put(&mut self, bin: Bin) {
        let wire = match bin.kind {
            BinKind::Regular(id) => {
                self.rc.encode_regular(self.ctx.get(id), bin.value);
                bin
            }
            BinKind::Bypass => {
                self.rc.encode_bypass(bin.value);
                bin
            }
            BinKind::Sign => {
                let v = bin.value ^ self.key_bit();
                self.rc.encode_bypass(v);
                Bin::sign(v)
            }
        };
        if let Some(tr) = self.trace.as_mut() {
            tr.push(wire);
        }
    }

    fn put_block(&mut self, blk: &ResidualBlock, plane: u8, geo: &Geometry) -> Result<()> {
        let n = geo.block;
        debug_assert_eq!(blk.levels.len(), n * n);
        let coded = blk.is_coded();
        self.put(Bin::regular(CtxId::CodedBlock(plane), coded));
        if coded {
            for (s, &(i, j)) in geo.scan().iter().enumerate() {
                let level = blk.levels[i * n + j];
                self.put(Bin::regular(CtxId::Sig(sig_ctx_class(s)), level != 0));
                if level != 0 {
                    for b in binarize_level(level)? {
                        self.put(b);
                    }
                } else {
                    self.skip_sign_slot();
                }
            }
        } else {
            for _ in 0..n * n {
                self.skip_sign_slot();
            }
        }
        Ok(())
    }
}

/// Encodes one frame's syntax into a payload. Pass a keystream to encrypt
/// the sign bins; pass a trace to capture the wire bins.
pub fn encode_frame(
    fs: &FrameSyntax,
    geo: &Geometry,
    ks: Option<&mut Keystream>,
    trace: Option<&mut BinTrace>,
) -> Result<Vec<u8>> {
    if fs.mbs.len() != geo.mb_count() {
        return Err(Error::format("macroblock count does not match geometry"));
    }
    let mut w = FrameWriter { rc: RangeEncoder::new(), ctx: Contexts::new(), ks, trace };
    for mb in &fs.mbs {
        let inter = fs.kind == FrameKind::Inter;
        w.put(Bin::regular(CtxId::MbType, inter));
        debug_assert_eq!(inter, mb.mvd.is_some(), "mvd presence must match frame kind");
        if let Some((dx, dy)) = mb.mvd {
            for (comp, d) in [(0u8, dx), (1u8, dy)] {
                for b in binarize_mvd_component(d, comp) {
                    w.put(b);
                }
                if d == 0 {
                    w.skip_sign_slot();
                }
            }
        }
        for blk in &mb.luma {
            w.put_block(blk, 0, geo)?;
        }
        for blk in mb.cb.iter().chain(mb.cr.iter()) {
            w.put_block(blk, 1, geo)?;
        }
    }
    w.rc.finish()?;
    Ok(w.rc.into_bytes())
}

struct FrameReader<'a, 'b> {
    rc: RangeDecoder<'b>,
    ctx: Contexts,
    ks: Option<&'a mut Keystream>,
    trace: Option<&'a mut BinTrace>,
}

impl<'a, 'b> FrameReader<'a, 'b> {
    fn key_bit(&mut self) -> bool {
        match self.ks.as_mut() {
            Some(ks) => ks.next_bit(),
            None => false,
        }
    }

    fn skip_sign_slot(&mut self) {
        let _ = self.key_bit();
    }

    fn regular(&mut self, id: CtxId) -> Result<bool> {
        let v = self.rc.decode_regular(self.ctx.get(id))?;
        if let Some(tr) = self.trace.as_mut() {
            tr.push(Bin::regular(id, v));
        }
        Ok(v)
    }

    /// Reads a sign bin and decrypts it with the slot's keystream bit.
    fn sign(&mut self) -> Result<bool> {
        let wire = self.rc.decode_bypass()?;
        if let Some(tr) = self.trace.as_mut() {
            tr.push(Bin::sign(wire));
        }
        Ok(wire ^ self.key_bit())
    }

    fn exp_golomb(&mut self, k: u32) -> Result<u64> {
        read_exp_golomb(
            || {
                let v = self.rc.decode_bypass()?;
                if let Some(tr) = self.trace.as_mut() {
                    tr.push(Bin::bypass(v));
                }
                Ok(v)
            },
            k,
        )
    }

    fn read_level(&mut self) -> Result<i32> {
        let gt1 = self.regular(CtxId::Gt1)?;
        let mag = if gt1 { 2 + self.exp_golomb(0)? } else { 1 };
        if mag > MAX_LEVEL {
            return Err(Error::format("coefficient level out of range"));
        }
        let neg = self.sign()?;
        Ok(if neg { -(mag as i32) } else { mag as i32 })
    }

    fn read_mvd_component(&mut self, comp: u8) -> Result<i32> {
        if !self.regular(CtxId::MvdNonzero(comp))? {
            self.skip_sign_slot();
            return Ok(0);
        }
        let mag = 1 + self.exp_golomb(1)?;
        if mag > MAX_MVD {
            return Err(Error::format("mvd magnitude out of range"));
        }
        let neg = self.sign()?;
        Ok(if neg { -(mag as i32) } else { mag as i32 })
    }

    fn read_block(&mut self, plane: u8, geo: &Geometry) -> Result<ResidualBlock> {
        let n = geo.block;
        let mut blk = ResidualBlock::zeros(n);
        if self.regular(CtxId::CodedBlock(plane))? {
            for (s, &(i, j)) in geo.scan().iter().enumerate() {
                if self.regular(CtxId::Sig(sig_ctx_class(s)))? {
                    blk.levels[i * n + j] = self.read_level()?;
                } else {
                    self.skip_sign_slot();
                }
            }
        } else {
            for _ in 0..n * n {
                self.skip_sign_slot();
            }
        }
        Ok(blk)
    }
}

/// Decodes one frame payload. With a keystream the sign bins come back
/// decrypted; without one they are taken as they sit in the stream, which
/// is the keyless (scrambled) decode.
pub fn decode_frame(
    payload: &[u8],
    kind: FrameKind,
    qp: u8,
    geo: &Geometry,
    ks: Option<&mut Keystream>,
    trace: Option<&mut BinTrace>,
) -> Result<FrameSyntax> {
    let mut r = FrameReader { rc: RangeDecoder::new(payload)?, ctx: Contexts::new(), ks, trace };
    let mut mbs = Vec::with_capacity(geo.mb_count());
    for _ in 0..geo.mb_count() {
        let inter = r.regular(CtxId::MbType)?;
        if inter != (kind == FrameKind::Inter) {
            return Err(Error::format("macroblock type contradicts frame type"));
        }
        let mvd = if inter {
            let dx = r.read_mvd_component(0)?;
            let dy = r.read_mvd_component(1)?;
            Some((dx, dy))
        } else {
            None
        };
        let luma = (0..geo.luma_blocks())
            .map(|_| r.read_block(0, geo))
            .collect::<Result<Vec<_>>>()?;
        let cb = (0..geo.chroma_blocks())
            .map(|_| r.read_block(1, geo))
            .collect::<Result<Vec<_>>>()?;
        let cr = (0..geo.chroma_blocks())
            .map(|_| r.read_block(1, geo))
            .collect::<Result<Vec<_>>>()?;
        mbs.push(MacroblockSyntax { mvd, luma, cb, cr });
    }
    Ok(FrameSyntax { kind, qp, mbs })
}
