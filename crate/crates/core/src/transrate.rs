//! Keyless requantization of a (possibly encrypted) bitstream to higher
//! QPs. None of the transrating entry points accepts a key: the open and
//! closed loops work directly on the quantized coefficient values, signs
//! included, encrypted or not. The cascaded decode/re-encode path is the
//! quality benchmark and is the only routine here that can take a key.

use crate::cipher::CipherKind;
use crate::codec::{
    decode_sequence, decode_syntax, encode_with, reconstruct_mvs, CodedBitstream, EncoderConfig,
    FrameRecord, ReusePlan,
};
use crate::error::{Error, Result};
use crate::motion::{clamp_mv, MotionVector, MvSidecar};
use crate::syntax::{encode_frame, FrameKind, FrameSyntax, ResidualBlock};
use crate::xquant::{
    dequantize, dequantize_raw, forward, inverse, quantize, requant_coeff, CoefBlock, QuantMode,
    QuantSpec, TransformSpec,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TransrateMode {
    Open,
    Closed,
}

/// A keyless transrating request. There is deliberately no key field:
/// middleboxes running this never hold one.
pub struct TransrateJob {
    pub input: CodedBitstream,
    pub targets: Vec<u8>,
    pub mode: TransrateMode,
    /// Informational only; the vectors are also in the stream itself.
    pub mv_sidecar: Option<MvSidecar>,
}

/// Drift-buffer bookkeeping from a closed-loop run.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct DriftStats {
    pub saturated: u64,
    pub max_abs: i32,
}

fn check_target(bs: &CodedBitstream, q2: u8) -> Result<()> {
    if q2 > crate::xquant::QP_MAX {
        return Err(Error::format("target qp out of range"));
    }
    if q2 <= bs.header.qp {
        return Err(Error::format(format!(
            "target qp {} must exceed source qp {}",
            q2, bs.header.qp
        )));
    }
    Ok(())
}

fn quant_pair(ts: &TransformSpec, qp: u8) -> (QuantSpec, QuantSpec) {
    (QuantSpec::new(ts, qp, QuantMode::Intra), QuantSpec::new(ts, qp, QuantMode::Inter))
}

fn rebuild_stream(
    bs: &CodedBitstream,
    q2: u8,
    syntaxes: Vec<FrameSyntax>,
) -> Result<CodedBitstream> {
    let geo = bs.header.geometry();
    let mut header = bs.header.clone();
    header.qp = q2;
    let mut frames = Vec::with_capacity(syntaxes.len());
    for fs in &syntaxes {
        // Signs are re-emitted verbatim (possibly ciphertext), so no
        // keystream is involved anywhere in transrating.
        let payload = encode_frame(fs, &geo, None, None)?;
        frames.push(FrameRecord { kind: fs.kind, qp: q2, payload });
    }
    Ok(CodedBitstream { header, frames })
}

fn open_loop_syntax(bs: &CodedBitstream, input: &[FrameSyntax], q2: u8) -> Vec<FrameSyntax> {
    let ts = TransformSpec::new(bs.header.profile.block_size());
    let n = ts.n();
    let (q2_intra, q2_inter) = quant_pair(&ts, q2);
    input
        .iter()
        .map(|fs| {
            let mode = match fs.kind {
                FrameKind::Intra => QuantMode::Intra,
                FrameKind::Inter => QuantMode::Inter,
            };
            let q1 = QuantSpec::new(&ts, fs.qp, mode);
            let qs2 = match fs.kind {
                FrameKind::Intra => &q2_intra,
                FrameKind::Inter => &q2_inter,
            };
            let mbs = fs
                .mbs
                .iter()
                .map(|mb| {
                    let map_block = |blk: &ResidualBlock| ResidualBlock {
                        levels: blk
                            .levels
                            .iter()
                            .enumerate()
                            .map(|(idx, &l)| {
                                let (i, j) = (idx / n, idx % n);
                                requant_coeff(l as i64, q1.eff(i, j), qs2.eff(i, j), qs2.dz16(i, j))
                                    as i32
                            })
                            .collect(),
                    };
                    crate::syntax::MacroblockSyntax {
                        mvd: mb.mvd,
                        luma: mb.luma.iter().map(map_block).collect(),
                        cb: mb.cb.iter().map(map_block).collect(),
                        cr: mb.cr.iter().map(map_block).collect(),
                    }
                })
                .collect();
            FrameSyntax { kind: fs.kind, qp: q2, mbs }
        })
        .collect()
}

/// Open-loop transrating: per coefficient, dequantize the magnitude at q1
/// and requantize at q2, carrying the sign verbatim. Flags, MVDs, and the
/// macroblock structure are copied as-is.
pub fn transrate_open(bs: &CodedBitstream, q2: u8) -> Result<CodedBitstream> {
    check_target(bs, q2)?;
    let input = decode_syntax(bs, None)?;
    rebuild_stream(bs, q2, open_loop_syntax(bs, &input, q2))
}

/// Signed 16-bit error planes accumulated by the closed loop.
struct DriftBuffer {
    y: Vec<i16>,
    u: Vec<i16>,
    v: Vec<i16>,
    w: usize,
}

impl DriftBuffer {
    fn zero(w: usize, h: usize) -> DriftBuffer {
        DriftBuffer { y: vec![0; w * h], u: vec![0; w * h / 4], v: vec![0; w * h / 4], w }
    }

    fn plane(&self, p: usize) -> (&[i16], usize) {
        match p {
            0 => (&self.y, self.w),
            1 => (&self.u, self.w / 2),
            _ => (&self.v, self.w / 2),
        }
    }

    fn plane_mut(&mut self, p: usize) -> (&mut Vec<i16>, usize) {
        match p {
            0 => (&mut self.y, self.w),
            1 => (&mut self.u, self.w / 2),
            _ => (&mut self.v, self.w / 2),
        }
    }
}

/// Copies a motion-compensated block out of a drift plane.
fn drift_pred(buf: &DriftBuffer, p: usize, x0: i32, y0: i32, size: usize) -> Vec<i32> {
    let (plane, stride) = buf.plane(p);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let sx = (x0 + x as i32) as usize;
            let sy = (y0 + y as i32) as usize;
            out.push(plane[sy * stride + sx] as i32);
        }
    }
    out
}

struct ClosedLoop {
    ts: TransformSpec,
    q2_intra: QuantSpec,
    q2_inter: QuantSpec,
    stats: DriftStats,
}

impl ClosedLoop {
    fn new(ts: TransformSpec, q2: u8) -> ClosedLoop {
        let (q2_intra, q2_inter) = quant_pair(&ts, q2);
        ClosedLoop { ts, q2_intra, q2_inter, stats: DriftStats::default() }
    }

    /// Requantizes one block with the drift prediction `e_pred` folded into
    /// the transform domain, and returns (new levels, new drift block).
    fn step_block(
        &mut self,
        levels_in: &[i32],
        q1: &QuantSpec,
        qs2_mode: QuantMode,
        e_pred: &[i32],
    ) -> (Vec<i32>, Vec<i16>) {
        let n = self.ts.n();
        let qs2 = match qs2_mode {
            QuantMode::Intra => &self.q2_intra,
            QuantMode::Inter => &self.q2_inter,
        };
        let q_in = CoefBlock::from_vec(n, levels_in.iter().map(|&v| v as i64).collect());
        let w_raw = dequantize_raw(&q_in, q1);
        let e_fwd = forward(e_pred, &self.ts);
        let mut w_prime = CoefBlock::zeros(n);
        for i in 0..n {
            for j in 0..n {
                w_prime.set(i, j, w_raw.get(i, j) + e_fwd.get(i, j));
            }
        }
        let q_out = quantize(&w_prime, qs2);
        let rec_in = inverse(&dequantize(&q_in, q1), &self.ts);
        let rec_out = inverse(&dequantize(&q_out, qs2), &self.ts);
        let mut drift = Vec::with_capacity(n * n);
        for idx in 0..n * n {
            let d = rec_in[idx] + e_pred[idx] - rec_out[idx];
            let clipped = d.clamp(i16::MIN as i32, i16::MAX as i32);
            if clipped != d {
                self.stats.saturated += 1;
            }
            self.stats.max_abs = self.stats.max_abs.max(clipped.abs());
            drift.push(clipped as i16);
        }
        debug_assert!(q_out.data().iter().all(|v| v.unsigned_abs() < i32::MAX as u64));
        (q_out.data().iter().map(|&v| v as i32).collect(), drift)
    }
}

fn closed_loop_syntax(
    bs: &CodedBitstream,
    input: &[FrameSyntax],
    q2: u8,
) -> (Vec<FrameSyntax>, DriftStats) {
    let geo = bs.header.geometry();
    let width = bs.header.width as usize;
    let height = bs.header.height as usize;
    let ts = TransformSpec::new(bs.header.profile.block_size());
    let n = ts.n();
    let mut loop_state = ClosedLoop::new(ts.clone(), q2);
    let mut prev = DriftBuffer::zero(width, height);
    let mut out = Vec::with_capacity(input.len());

    for fs in input {
        let mode = match fs.kind {
            FrameKind::Intra => QuantMode::Intra,
            FrameKind::Inter => QuantMode::Inter,
        };
        let q1 = QuantSpec::new(&ts, fs.qp, mode);
        let mut cur = DriftBuffer::zero(width, height);
        let mvs = match fs.kind {
            // Vectors as a keyless decoder sees them, clamped in-bounds.
            FrameKind::Inter => reconstruct_mvs(fs, geo.mb_cols),
            FrameKind::Intra => Vec::new(),
        };
        let mut mbs = Vec::with_capacity(fs.mbs.len());
        for (mb_i, mb) in fs.mbs.iter().enumerate() {
            let (mb_x, mb_y) = (mb_i % geo.mb_cols, mb_i / geo.mb_cols);
            let mv = match fs.kind {
                FrameKind::Inter => clamp_mv(mvs[mb_i], mb_x, mb_y, width, height),
                FrameKind::Intra => MotionVector::ZERO,
            };
            let requant_plane = |p: usize,
                                     blocks: &[ResidualBlock],
                                     region: usize,
                                     loop_state: &mut ClosedLoop,
                                     cur: &mut DriftBuffer|
             -> Vec<ResidualBlock> {
                let per_row = region / n;
                let (ox, oy) = if p == 0 {
                    (mb_x * 16, mb_y * 16)
                } else {
                    (mb_x * 8, mb_y * 8)
                };
                let (mvx, mvy) = if p == 0 { (mv.x, mv.y) } else { (mv.x / 2, mv.y / 2) };
                blocks
                    .iter()
                    .enumerate()
                    .map(|(bi, blk)| {
                        let bx = (bi % per_row) * n;
                        let by = (bi / per_row) * n;
                        let e_pred = match fs.kind {
                            FrameKind::Intra => vec![0i32; n * n],
                            FrameKind::Inter => drift_pred(
                                &prev,
                                p,
                                (ox + bx) as i32 + mvx,
                                (oy + by) as i32 + mvy,
                                n,
                            ),
                        };
                        let (levels, drift) =
                            loop_state.step_block(&blk.levels, &q1, mode, &e_pred);
                        let (plane, stride) = cur.plane_mut(p);
                        for y in 0..n {
                            for x in 0..n {
                                plane[(oy + by + y) * stride + ox + bx + x] = drift[y * n + x];
                            }
                        }
                        ResidualBlock { levels }
                    })
                    .collect()
            };
            let luma = requant_plane(0, &mb.luma, 16, &mut loop_state, &mut cur);
            let cb = requant_plane(1, &mb.cb, 8, &mut loop_state, &mut cur);
            let cr = requant_plane(2, &mb.cr, 8, &mut loop_state, &mut cur);
            mbs.push(crate::syntax::MacroblockSyntax { mvd: mb.mvd, luma, cb, cr });
        }
        out.push(FrameSyntax { kind: fs.kind, qp: q2, mbs });
        prev = cur;
    }
    (out, loop_state.stats)
}

/// Closed-loop transrating (drift-compensated): the requantization error
/// is motion-compensated and fed back so the output tracks what a cascaded
/// transcoder would produce, at a fraction of the work and with no key.
pub fn transrate_closed(bs: &CodedBitstream, q2: u8) -> Result<CodedBitstream> {
    Ok(transrate_closed_with_stats(bs, q2)?.0)
}

pub fn transrate_closed_with_stats(
    bs: &CodedBitstream,
    q2: u8,
) -> Result<(CodedBitstream, DriftStats)> {
    check_target(bs, q2)?;
    let input = decode_syntax(bs, None)?;
    let (syntaxes, stats) = closed_loop_syntax(bs, &input, q2);
    Ok((rebuild_stream(bs, q2, syntaxes)?, stats))
}

/// Fans one entropy decode out to several targets. Outputs are
/// byte-identical to independent single-target runs.
pub fn transrate_many(job: &TransrateJob) -> Result<Vec<CodedBitstream>> {
    Ok(transrate_many_with_stats(job)?.0)
}

/// Like [`transrate_many`], also surfacing the pooled drift-buffer stats
/// of closed-loop runs (zero for open loop).
pub fn transrate_many_with_stats(
    job: &TransrateJob,
) -> Result<(Vec<CodedBitstream>, DriftStats)> {
    for &q2 in &job.targets {
        check_target(&job.input, q2)?;
    }
    if job.targets.is_empty() {
        return Ok((Vec::new(), DriftStats::default()));
    }
    let input = decode_syntax(&job.input, None)?;
    let mut pooled = DriftStats::default();
    let streams = job
        .targets
        .iter()
        .map(|&q2| {
            let syntaxes = match job.mode {
                TransrateMode::Open => open_loop_syntax(&job.input, &input, q2),
                TransrateMode::Closed => {
                    let (syntaxes, stats) = closed_loop_syntax(&job.input, &input, q2);
                    pooled.saturated += stats.saturated;
                    pooled.max_abs = pooled.max_abs.max(stats.max_abs);
                    syntaxes
                }
            };
            rebuild_stream(&job.input, q2, syntaxes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((streams, pooled))
}

/// The classical benchmark: full decode to pixels, re-encode at q2 with
/// motion re-estimation disabled (the decoded vectors are reused), and
/// re-encryption under the same cipher spec. The only transrater entry
/// point that can take a key, and the CLI never routes one here.
pub fn cascade_reference(
    bs: &CodedBitstream,
    q2: u8,
    key: Option<&[u8; 16]>,
) -> Result<CodedBitstream> {
    check_target(bs, q2)?;
    if bs.header.cipher_kind != CipherKind::Null && key.is_none() {
        return Err(Error::crypto("cascade of an encrypted stream requires the key"));
    }
    let video = decode_sequence(bs, key)?;
    let syntaxes = decode_syntax(bs, key)?;
    let geo = bs.header.geometry();
    let kinds: Vec<FrameKind> = syntaxes.iter().map(|f| f.kind).collect();
    let mvs: Vec<Vec<MotionVector>> = syntaxes
        .iter()
        .map(|f| match f.kind {
            FrameKind::Inter => reconstruct_mvs(f, geo.mb_cols),
            FrameKind::Intra => Vec::new(),
        })
        .collect();
    let cfg = EncoderConfig {
        profile: bs.header.profile,
        qp: q2,
        gop: bs.header.gop,
        search_range: 16,
        cipher: crate::cipher::CipherSpec::new(
            bs.header.cipher_kind,
            key.copied().unwrap_or([0; 16]),
            bs.header.nonce,
        ),
    };
    encode_with(&video, &cfg, Some(&ReusePlan { kinds, mvs }))
}
