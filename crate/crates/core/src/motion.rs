//! Full-search motion estimation over 16x16 macroblocks, motion
//! compensation, median MV prediction, and the MV sidecar file format.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::frame_io::Frame;

pub const MB_SIZE: usize = 16;
pub const DEFAULT_SEARCH_RANGE: i32 = 16;

/// Full-pel displacement applied to a macroblock; the compensated block
/// always lies fully inside the reference frame.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct MotionVector {
    pub x: i32,
    pub y: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { x: 0, y: 0 };
}

/// Sum of absolute luma differences between the current macroblock and the
/// displaced reference block.
fn sad_luma(cur: &Frame, px: usize, py: usize, reff: &Frame, rx: usize, ry: usize) -> u32 {
    let mut sad = 0u32;
    for row in 0..MB_SIZE {
        let a = &cur.y.row(py + row)[px..px + MB_SIZE];
        let b = &reff.y.row(ry + row)[rx..rx + MB_SIZE];
        for (s, t) in a.iter().zip(b.iter()) {
            sad += (*s as i32 - *t as i32).unsigned_abs();
        }
    }
    sad
}

/// Exhaustive search over every in-bounds displacement in
/// `[-range, range]^2`. Ties go to the smaller `|x|+|y|`, then the smaller
/// `y`, then the smaller `x`, so a flat region always yields (0,0).
pub fn estimate(
    cur: &Frame,
    reff: &Frame,
    mb_x: usize,
    mb_y: usize,
    range: i32,
) -> (MotionVector, u32) {
    let px = mb_x * MB_SIZE;
    let py = mb_y * MB_SIZE;
    let w = cur.width() as i32;
    let h = cur.height() as i32;
    let mut best = (u32::MAX, i32::MAX, i32::MAX, i32::MAX);
    let mut best_mv = MotionVector::ZERO;
    for dy in -range..=range {
        let ry = py as i32 + dy;
        if ry < 0 || ry + MB_SIZE as i32 > h {
            continue;
        }
        for dx in -range..=range {
            let rx = px as i32 + dx;
            if rx < 0 || rx + MB_SIZE as i32 > w {
                continue;
            }
            let sad = sad_luma(cur, px, py, reff, rx as usize, ry as usize);
            let key = (sad, dx.abs() + dy.abs(), dy, dx);
            if key < best {
                best = key;
                best_mv = MotionVector { x: dx, y: dy };
            }
        }
    }
    (best_mv, best.0)
}

/// Prediction samples for one macroblock: 16x16 luma plus two 8x8 chroma
/// blocks, all copied from the displaced reference position. Chroma uses
/// `mv/2` with round-toward-zero.
pub struct MbPred {
    pub y: [u8; 256],
    pub u: [u8; 64],
    pub v: [u8; 64],
}

pub fn compensate(reff: &Frame, mb_x: usize, mb_y: usize, mv: MotionVector) -> MbPred {
    let px = mb_x as i32 * 16 + mv.x;
    let py = mb_y as i32 * 16 + mv.y;
    assert!(
        px >= 0
            && py >= 0
            && px + 16 <= reff.width() as i32
            && py + 16 <= reff.height() as i32,
        "motion vector out of bounds"
    );
    let (px, py) = (px as usize, py as usize);
    let mut pred = MbPred { y: [0; 256], u: [0; 64], v: [0; 64] };
    for row in 0..16 {
        pred.y[row * 16..(row + 1) * 16].copy_from_slice(&reff.y.row(py + row)[px..px + 16]);
    }
    let cx = (mb_x as i32 * 8 + mv.x / 2) as usize;
    let cy = (mb_y as i32 * 8 + mv.y / 2) as usize;
    for row in 0..8 {
        pred.u[row * 8..(row + 1) * 8].copy_from_slice(&reff.u.row(cy + row)[cx..cx + 8]);
        pred.v[row * 8..(row + 1) * 8].copy_from_slice(&reff.v.row(cy + row)[cx..cx + 8]);
    }
    pred
}

fn median3(a: i32, b: i32, c: i32) -> i32 {
    a + b + c - a.min(b).min(c) - a.max(b).max(c)
}

/// Componentwise median of the left, top, and top-right neighbor vectors;
/// an absent neighbor counts as (0,0).
pub fn predict_mv(
    left: Option<MotionVector>,
    top: Option<MotionVector>,
    top_right: Option<MotionVector>,
) -> MotionVector {
    let l = left.unwrap_or(MotionVector::ZERO);
    let t = top.unwrap_or(MotionVector::ZERO);
    let r = top_right.unwrap_or(MotionVector::ZERO);
    MotionVector { x: median3(l.x, t.x, r.x), y: median3(l.y, t.y, r.y) }
}

/// Clamps a (possibly sign-scrambled) decoded vector so the compensated
/// block stays inside the frame. A no-op for vectors the encoder produced.
pub fn clamp_mv(mv: MotionVector, mb_x: usize, mb_y: usize, width: usize, height: usize) -> MotionVector {
    let px = mb_x as i32 * 16;
    let py = mb_y as i32 * 16;
    MotionVector {
        x: mv.x.clamp(-px, width as i32 - 16 - px),
        y: mv.y.clamp(-py, height as i32 - 16 - py),
    }
}

/// One inter macroblock's motion data as extracted from a bitstream.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MvRecord {
    pub frame_index: u32,
    pub mb_x: u16,
    pub mb_y: u16,
    pub mv: MotionVector,
    pub ref_index: u8,
}

/// Standalone motion-vector file ("MVS1"), ordered by (frame, mb_y, mb_x).
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MvSidecar {
    pub records: Vec<MvRecord>,
}

pub const MVS_MAGIC: [u8; 4] = *b"MVS1";

impl MvSidecar {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MVS_MAGIC)?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for rec in &self.records {
            w.write_all(&rec.frame_index.to_le_bytes())?;
            w.write_all(&rec.mb_x.to_le_bytes())?;
            w.write_all(&rec.mb_y.to_le_bytes())?;
            w.write_all(&(rec.mv.x as i16).to_le_bytes())?;
            w.write_all(&(rec.mv.y as i16).to_le_bytes())?;
            w.write_all(&[rec.ref_index])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<MvSidecar> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::format("truncated sidecar"))?;
        if magic != MVS_MAGIC {
            return Err(Error::format("bad sidecar magic"));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(|_| Error::format("truncated sidecar"))?;
        let count = u32::from_le_bytes(buf4);
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut rec = [0u8; 13];
            r.read_exact(&mut rec).map_err(|_| Error::format("truncated sidecar record"))?;
            records.push(MvRecord {
                frame_index: u32::from_le_bytes(rec[0..4].try_into().unwrap()),
                mb_x: u16::from_le_bytes(rec[4..6].try_into().unwrap()),
                mb_y: u16::from_le_bytes(rec[6..8].try_into().unwrap()),
                mv: MotionVector {
                    x: i16::from_le_bytes(rec[8..10].try_into().unwrap()) as i32,
                    y: i16::from_le_bytes(rec[10..12].try_into().unwrap()) as i32,
                },
                ref_index: rec[12],
            });
        }
        Ok(MvSidecar { records })
    }
}
