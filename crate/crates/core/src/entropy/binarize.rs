//! Binarization of syntax elements into labelled bins, the zigzag scan,
//! and exp-Golomb codes.

use crate::error::{Error, Result};

/// Identity of an adaptive context. One instance of each lives per frame.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CtxId {
    MbType,
    /// 0 = horizontal component, 1 = vertical.
    MvdNonzero(u8),
    /// 0 = luma, 1 = chroma.
    CodedBlock(u8),
    /// Significance, by scan-position class.
    Sig(u8),
    Gt1,
}

/// How a bin is coded. `Sign` bins are bypass-coded and are the only
/// encryptable elements in the stream.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinKind {
    Regular(CtxId),
    Bypass,
    Sign,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Bin {
    pub kind: BinKind,
    pub value: bool,
}

impl Bin {
    pub fn regular(id: CtxId, value: bool) -> Bin {
        Bin { kind: BinKind::Regular(id), value }
    }

    pub fn bypass(value: bool) -> Bin {
        Bin { kind: BinKind::Bypass, value }
    }

    pub fn sign(value: bool) -> Bin {
        Bin { kind: BinKind::Sign, value }
    }
}

/// Significance context class by zigzag scan position: {0}, {1,2}, {3..6},
/// and everything after.
pub fn sig_ctx_class(scan_pos: usize) -> u8 {
    match scan_pos {
        0 => 0,
        1..=2 => 1,
        3..=6 => 2,
        _ => 3,
    }
}

/// Diagonal scan order for an n x n block: ascending antidiagonals with
/// alternating direction, starting at the DC position.
pub fn zigzag_scan(n: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 0 {
            for i in (lo..=hi).rev() {
                order.push((i, s - i));
            }
        } else {
            for i in lo..=hi {
                order.push((i, s - i));
            }
        }
    }
    order
}

/// Appends the order-k exp-Golomb code of `value` as bypass bins.
pub fn exp_golomb_bins(value: u64, k: u32, out: &mut Vec<Bin>) {
    let m = value + (1u64 << k);
    let bits = 64 - m.leading_zeros();
    for _ in 0..(bits - 1 - k) {
        out.push(Bin::bypass(false));
    }
    for b in (0..bits).rev() {
        out.push(Bin::bypass(m >> b & 1 == 1));
    }
}

/// Reads an order-k exp-Golomb value through a bin source. The prefix is
/// capped so corrupt input fails instead of spinning.
pub fn read_exp_golomb<F: FnMut() -> Result<bool>>(mut next: F, k: u32) -> Result<u64> {
    let mut zeros = 0u32;
    while !next()? {
        zeros += 1;
        if zeros > 40 {
            return Err(Error::format("exp-golomb prefix too long"));
        }
    }
    let mut m = 1u64;
    for _ in 0..(zeros + k) {
        m = (m << 1) | next()? as u64;
    }
    Ok(m - (1u64 << k))
}

/// Bins of one nonzero quantized level: a gt1 flag, the remaining
/// magnitude `|l| - 2` as order-0 exp-Golomb when `|l| >= 2`, then the
/// sign (1 = negative).
pub fn binarize_level(level: i32) -> Result<Vec<Bin>> {
    if level == 0 {
        return Err(Error::format("cannot binarize a zero level"));
    }
    let mag = level.unsigned_abs() as u64;
    let mut bins = vec![Bin::regular(CtxId::Gt1, mag >= 2)];
    if mag >= 2 {
        exp_golomb_bins(mag - 2, 0, &mut bins);
    }
    bins.push(Bin::sign(level < 0));
    Ok(bins)
}

/// Bins of one MVD component: a nonzero flag, then `|d| - 1` as order-1
/// exp-Golomb and the sign when nonzero. Zero has no sign bin.
pub fn binarize_mvd_component(d: i32, component: u8) -> Vec<Bin> {
    let mut bins = vec![Bin::regular(CtxId::MvdNonzero(component), d != 0)];
    if d != 0 {
        exp_golomb_bins(d.unsigned_abs() as u64 - 1, 1, &mut bins);
        bins.push(Bin::sign(d < 0));
    }
    bins
}
