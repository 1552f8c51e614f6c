//! Seeded synthetic test clips: textured backgrounds with moving textured
//! rectangles, plus a panning variant. Everything is derived from the seed
//! alone, so test runs are reproducible without any external downloads.

use crate::frame_io::{Frame, Plane, VideoSequence};
use crate::rng::SplitMix64;

struct Rect {
    x: i32,
    y: i32,
    w: i32,
    h: i32,
    vx: i32,
    vy: i32,
    texture_seed: u64,
    chroma: (u8, u8),
}

fn smooth_noise_plane(rng: &mut SplitMix64, w: usize, h: usize, base: u8, amp: i32) -> Plane {
    let mut raw = vec![0i32; w * h];
    for v in raw.iter_mut() {
        *v = rng.range_i64(-amp as i64, amp as i64) as i32;
    }
    let mut plane = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // 2x2 box smoothing concentrates energy in lower frequencies a
            // little, like camera content, while keeping plenty of texture.
            let mut acc = 0i32;
            let mut cnt = 0i32;
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let sx = (x + dx).min(w - 1);
                    let sy = (y + dy).min(h - 1);
                    acc += raw[sy * w + sx];
                    cnt += 1;
                }
            }
            plane.set(x, y, (base as i32 + acc / cnt).clamp(0, 255) as u8);
        }
    }
    plane
}

/// One deterministic clip: a static textured background with 2-3 textured
/// rectangles translating at integer velocities and bouncing off edges.
pub fn synth_clip(seed: u64, width: usize, height: usize, frames: usize) -> VideoSequence {
    assert!(width.is_multiple_of(16) && height.is_multiple_of(16));
    let mut rng = SplitMix64::new(seed ^ 0xC11F_5EED);
    let bg_y = smooth_noise_plane(&mut rng, width, height, 120, 36);
    let bg_u = smooth_noise_plane(&mut rng, width / 2, height / 2, 118, 24);
    let bg_v = smooth_noise_plane(&mut rng, width / 2, height / 2, 138, 24);

    let nrects = 2 + rng.below(2) as usize;
    let mut rects = Vec::new();
    for _ in 0..nrects {
        let w = (16 + rng.below(24) as i32) & !1;
        let h = (16 + rng.below(24) as i32) & !1;
        let mut vx = rng.range_i64(-3, 3) as i32;
        let mut vy = rng.range_i64(-3, 3) as i32;
        if vx == 0 && vy == 0 {
            vx = 2;
            vy = -1;
        }
        rects.push(Rect {
            x: rng.below((width as i32 - w).max(1) as u64) as i32 & !1,
            y: rng.below((height as i32 - h).max(1) as u64) as i32 & !1,
            w,
            h,
            vx,
            vy,
            texture_seed: rng.next_u64(),
            chroma: (rng.below(256) as u8, rng.below(256) as u8),
        });
    }

    let mut seq = VideoSequence::new(width, height, 30, 1);
    for t in 0..frames {
        let mut frame = Frame::new(width, height, t);
        frame.y = bg_y.clone();
        frame.u = bg_u.clone();
        frame.v = bg_v.clone();
        for r in &mut rects {
            // fixed texture translates with the rectangle so motion search
            // can recover the displacement exactly
            let mut tex = SplitMix64::new(r.texture_seed);
            let tex_vals: Vec<u8> =
                (0..(r.w * r.h) as usize).map(|_| (64 + tex.below(128)) as u8).collect();
            for yy in 0..r.h {
                for xx in 0..r.w {
                    let px = r.x + xx;
                    let py = r.y + yy;
                    if px < 0 || py < 0 || px >= width as i32 || py >= height as i32 {
                        continue;
                    }
                    frame.y.set(px as usize, py as usize, tex_vals[(yy * r.w + xx) as usize]);
                    if px % 2 == 0 && py % 2 == 0 {
                        frame.u.set(px as usize / 2, py as usize / 2, r.chroma.0);
                        frame.v.set(px as usize / 2, py as usize / 2, r.chroma.1);
                    }
                }
            }
            // advance with reflection at the borders
            r.x += r.vx;
            r.y += r.vy;
            if r.x < 0 || r.x + r.w > width as i32 {
                r.vx = -r.vx;
                r.x += 2 * r.vx;
            }
            if r.y < 0 || r.y + r.h > height as i32 {
                r.vy = -r.vy;
                r.y += 2 * r.vy;
            }
        }
        seq.frames.push(frame);
    }
    seq
}

/// A globally panning clip: a window slides over an oversized static
/// texture at a constant integer velocity.
pub fn pan_clip(
    seed: u64,
    width: usize,
    height: usize,
    frames: usize,
    vx: i32,
    vy: i32,
) -> VideoSequence {
    assert!(width.is_multiple_of(16) && height.is_multiple_of(16));
    let mut rng = SplitMix64::new(seed ^ 0x9A11_0C11);
    let big_w = width * 3;
    let big_h = height * 3;
    let tex_y = smooth_noise_plane(&mut rng, big_w, big_h, 120, 60);
    let tex_u = smooth_noise_plane(&mut rng, big_w / 2, big_h / 2, 120, 30);
    let tex_v = smooth_noise_plane(&mut rng, big_w / 2, big_h / 2, 136, 30);

    let mut seq = VideoSequence::new(width, height, 30, 1);
    for t in 0..frames {
        let ox = (width as i32 + vx * t as i32).clamp(0, (big_w - width) as i32) as usize;
        let oy = (height as i32 + vy * t as i32).clamp(0, (big_h - height) as i32) as usize;
        let mut frame = Frame::new(width, height, t);
        for y in 0..height {
            for x in 0..width {
                frame.y.set(x, y, tex_y.get(ox + x, oy + y));
            }
        }
        for y in 0..height / 2 {
            for x in 0..width / 2 {
                frame.u.set(x, y, tex_u.get(ox / 2 + x, oy / 2 + y));
                frame.v.set(x, y, tex_v.get(ox / 2 + x, oy / 2 + y));
            }
        }
        seq.frames.push(frame);
    }
    seq
}

/// The standard corpus used by the test harness: mostly rectangle clips,
/// one pan, one fully static clip.
pub fn standard_corpus(
    seed: u64,
    clips: usize,
    width: usize,
    height: usize,
    frames: usize,
) -> Vec<(String, VideoSequence)> {
    let mut out = Vec::with_capacity(clips);
    for i in 0..clips {
        let name = format!("clip-{i:02}");
        let clip_seed = seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9);
        let seq = match i % 5 {
            3 => pan_clip(clip_seed, width, height, frames, 2, 1),
            4 => {
                // static clip: one frame repeated
                let first = synth_clip(clip_seed, width, height, 1);
                let mut seq = VideoSequence::new(width, height, 30, 1);
                for t in 0..frames {
                    let mut f = first.frames[0].clone();
                    f.index = t;
                    seq.frames.push(f);
                }
                seq
            }
            _ => synth_clip(clip_seed, width, height, frames),
        };
        out.push((name, seq));
    }
    out
}
