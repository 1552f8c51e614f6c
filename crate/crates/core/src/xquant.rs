//! Integer block transform and dead-zone quantizer.
//!
//! The basis matrix is a rounding of the orthonormal DCT-II scaled by 128,
//! built at runtime so there are no memorized constant tables. Everything
//! downstream of the rounding is exact integer arithmetic, and the whole
//! quantizer chain is odd in its input: `q(-w) == -q(w)` at every stage.
//! That oddness is what lets sign-encrypted coefficients be requantized
//! without the key.

use std::f64::consts::PI;

/// Fixed-point scale of the basis matrix.
pub const BASIS_SCALE: i64 = 128;

/// Step-size numerators in 1/16 units; the step doubles every 6 QP.
const DELTA16_BASE: [i64; 6] = [10, 11, 13, 14, 16, 18];

pub const QP_MAX: u8 = 51;

fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// `base[qp mod 6] << (qp div 6)`: quantizer step in 1/16 units.
pub fn delta16_for_qp(qp: u8) -> i64 {
    assert!(qp <= QP_MAX, "qp out of range");
    DELTA16_BASE[(qp % 6) as usize] << (qp / 6)
}

/// Integer transform basis for a block size of 4 or 8.
#[derive(Clone, Debug)]
pub struct TransformSpec {
    n: usize,
    c: Vec<i64>,
    rownorm: Vec<i64>,
}

impl TransformSpec {
    pub fn new(n: usize) -> TransformSpec {
        assert!(n == 4 || n == 8, "block size must be 4 or 8");
        let mut c = vec![0i64; n * n];
        for i in 0..n {
            let b = if i == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for j in 0..n {
                let angle = (2 * j + 1) as f64 * i as f64 * PI / (2.0 * n as f64);
                c[i * n + j] = round_half_away(BASIS_SCALE as f64 * b * angle.cos());
            }
        }
        let rownorm = (0..n)
            .map(|i| c[i * n..(i + 1) * n].iter().map(|&v| v * v).sum())
            .collect();
        TransformSpec { n, c, rownorm }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize) -> i64 {
        self.c[i * self.n + j]
    }

    pub fn rownorm(&self, i: usize) -> i64 {
        self.rownorm[i]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QuantMode {
    Intra,
    Inter,
}

/// Per-position effective step table for one (qp, mode, block size).
#[derive(Clone, Debug)]
pub struct QuantSpec {
    qp: u8,
    mode: QuantMode,
    n: usize,
    delta16: i64,
    eff: Vec<i64>,
    dz16: Vec<i64>,
}

impl QuantSpec {
    pub fn new(ts: &TransformSpec, qp: u8, mode: QuantMode) -> QuantSpec {
        let n = ts.n();
        let delta16 = delta16_for_qp(qp);
        let mut eff = vec![0i64; n * n];
        let mut dz16 = vec![0i64; n * n];
        let dz_div = match mode {
            QuantMode::Intra => 3,
            QuantMode::Inter => 6,
        };
        for i in 0..n {
            for j in 0..n {
                // round_half_away(delta16 * sqrt(Ni*Nj) / 128), computed
                // exactly: floor((sqrt(4*d^2*Ni*Nj) + 128) / 256).
                let num = (4 * delta16 * delta16) as u64
                    * ts.rownorm(i) as u64
                    * ts.rownorm(j) as u64;
                let e = ((num.isqrt() + BASIS_SCALE as u64) / (2 * BASIS_SCALE as u64)) as i64;
                assert!(e >= 1, "effective step must be at least 1");
                eff[i * n + j] = e;
                dz16[i * n + j] = 16 * e / dz_div;
            }
        }
        QuantSpec { qp, mode, n, delta16, eff, dz16 }
    }

    pub fn qp(&self) -> u8 {
        self.qp
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta16(&self) -> i64 {
        self.delta16
    }

    #[inline]
    pub fn eff(&self, i: usize, j: usize) -> i64 {
        self.eff[i * self.n + j]
    }

    #[inline]
    pub fn dz16(&self, i: usize, j: usize) -> i64 {
        self.dz16[i * self.n + j]
    }
}

/// An n x n integer coefficient block. Depending on the pipeline stage the
/// values are raw-transform scale, quantized indices, or the 16x raw scale
/// produced by dequantization.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CoefBlock {
    n: usize,
    data: Vec<i64>,
}

impl CoefBlock {
    pub fn zeros(n: usize) -> CoefBlock {
        CoefBlock { n, data: vec![0; n * n] }
    }

    pub fn from_vec(n: usize, data: Vec<i64>) -> CoefBlock {
        assert_eq!(data.len(), n * n);
        CoefBlock { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn negated(&self) -> CoefBlock {
        CoefBlock { n: self.n, data: self.data.iter().map(|&v| -v).collect() }
    }
}

/// Forward transform `W = C * X * C^T`, exact in integers.
pub fn forward(x: &[i32], ts: &TransformSpec) -> CoefBlock {
    let n = ts.n();
    assert_eq!(x.len(), n * n, "input block size mismatch");
    let mut tmp = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += ts.coeff(i, k) * x[k * n + j] as i64;
            }
            tmp[i * n + j] = acc;
        }
    }
    let mut w = CoefBlock::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += tmp[i * n + k] * ts.coeff(j, k);
            }
            w.set(i, j, acc);
        }
    }
    w
}

/// Dead-zone quantization of a single raw-scale coefficient.
#[inline]
pub fn quantize_coeff(w: i64, eff: i64, dz16: i64) -> i64 {
    let q = (16 * w.abs() + dz16) / (16 * eff);
    if w < 0 {
        -q
    } else {
        q
    }
}

pub fn quantize(w: &CoefBlock, q: &QuantSpec) -> CoefBlock {
    let n = w.n();
    assert_eq!(n, q.n());
    let mut out = CoefBlock::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, quantize_coeff(w.get(i, j), q.eff(i, j), q.dz16(i, j)));
        }
    }
    out
}

/// Dequantization to 16x raw scale: `w16 = q * 16 * eff`.
pub fn dequantize(qb: &CoefBlock, q: &QuantSpec) -> CoefBlock {
    let n = qb.n();
    assert_eq!(n, q.n());
    let mut out = CoefBlock::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, qb.get(i, j) * 16 * q.eff(i, j));
        }
    }
    out
}

/// Dequantization to raw scale: `w = q * eff` (closed-loop working scale).
pub fn dequantize_raw(qb: &CoefBlock, q: &QuantSpec) -> CoefBlock {
    let n = qb.n();
    assert_eq!(n, q.n());
    let mut out = CoefBlock::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, qb.get(i, j) * q.eff(i, j));
        }
    }
    out
}

/// Requantizes one quantized magnitude from step `eff1` to step `eff2`
/// without touching the sign; the sign rides along verbatim, encrypted
/// or not.
#[inline]
pub fn requant_coeff(q_in: i64, eff1: i64, eff2: i64, dz16_2: i64) -> i64 {
    let mag = (16 * q_in.abs() * eff1 + dz16_2) / (16 * eff2);
    if q_in < 0 {
        -mag
    } else {
        mag
    }
}

/// Inverse transform of a 16x-raw-scale block, output clipped to
/// `[-255, 255]` residual range.
pub fn inverse(w16: &CoefBlock, ts: &TransformSpec) -> Vec<i32> {
    let n = ts.n();
    assert_eq!(w16.n(), n);
    // Normalize each coefficient by its row-norm product, rounding half
    // away from zero, keeping 10 fractional bits for the basis product.
    let mut v = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = w16.get(i, j);
            let den = 16 * ts.rownorm(i) * ts.rownorm(j);
            let mag = (w.abs() * 1024 + den / 2) / den;
            v[i * n + j] = if w < 0 { -mag } else { mag };
        }
    }
    let mut tmp = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += ts.coeff(k, i) * v[k * n + j];
            }
            tmp[i * n + j] = acc;
        }
    }
    let mut out = vec![0i32; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += tmp[i * n + k] * ts.coeff(k, j);
            }
            // 10-bit descale, rounding half away from zero so the whole
            // transform chain stays an odd function up to the clip.
            let mag = (acc.abs() + 512) >> 10;
            let v = if acc < 0 { -mag } else { mag };
            out[i * n + j] = v.clamp(-255, 255) as i32;
        }
    }
    out
}
