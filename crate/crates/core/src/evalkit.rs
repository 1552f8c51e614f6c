//! Objective quality metrics, histogram/entropy analysis, structural
//! distortion probes (Laplacian edges, pixelation), the delta formulas,
//! and the corpus experiment sweep.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::cipher::{CipherKind, CipherSpec};
use crate::codec::{decode_sequence, encode_sequence, EncoderConfig, Profile};
use crate::error::{Error, Result};
use crate::frame_io::{frame_to_rgb, write_ppm, write_ppm_gray, Frame, Plane, VideoSequence};
use crate::transrate::{transrate_many, TransrateJob, TransrateMode};

/// PSNR result: identical planes are reported as a distinguished infinite
/// marker, never as a number.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum PsnrValue {
    Infinite,
    Db(f64),
}

impl PsnrValue {
    /// For ordering and thresholds; the infinite marker compares above
    /// every finite value.
    pub fn as_db(&self) -> f64 {
        match self {
            PsnrValue::Infinite => f64::INFINITY,
            PsnrValue::Db(v) => *v,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, PsnrValue::Infinite)
    }

    pub fn display(&self) -> String {
        match self {
            PsnrValue::Infinite => "inf".to_string(),
            PsnrValue::Db(v) => format!("{v:.4}"),
        }
    }
}

impl Serialize for PsnrValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PsnrValue::Infinite => s.serialize_str("inf"),
            PsnrValue::Db(v) => s.serialize_f64(*v),
        }
    }
}

fn plane_sse(a: &Plane, b: &Plane) -> Result<(u64, usize)> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::format("plane dimensions differ"));
    }
    let sse = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok((sse, a.data().len()))
}

fn psnr_from_sse(sse: u64, samples: usize) -> PsnrValue {
    if sse == 0 {
        PsnrValue::Infinite
    } else {
        let mse = sse as f64 / samples as f64;
        PsnrValue::Db(10.0 * (255.0f64 * 255.0 / mse).log10())
    }
}

/// PSNR of one plane pair: `10*log10(255^2 / MSE)`.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<PsnrValue> {
    let (sse, n) = plane_sse(reference, test)?;
    Ok(psnr_from_sse(sse, n))
}

/// Mean SSIM over all 8x8 uniform windows at stride 1 (population
/// statistics, c1 = (0.01*255)^2, c2 = (0.03*255)^2).
pub fn ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(Error::format("plane dimensions differ"));
    }
    let (w, h) = (reference.width(), reference.height());
    if w < 8 || h < 8 {
        return Err(Error::format("plane smaller than the 8x8 ssim window"));
    }
    const C1: f64 = 6.5025;
    const C2: f64 = 58.5225;
    let mut total = 0.0f64;
    let mut windows = 0u64;
    for wy in 0..=(h - 8) {
        for wx in 0..=(w - 8) {
            let mut sa = 0u32;
            let mut sb = 0u32;
            let mut saa = 0u64;
            let mut sbb = 0u64;
            let mut sab = 0u64;
            for y in 0..8 {
                let ra = &reference.row(wy + y)[wx..wx + 8];
                let rb = &test.row(wy + y)[wx..wx + 8];
                for x in 0..8 {
                    let a = ra[x] as u32;
                    let b = rb[x] as u32;
                    sa += a;
                    sb += b;
                    saa += (a * a) as u64;
                    sbb += (b * b) as u64;
                    sab += (a * b) as u64;
                }
            }
            let n = 64.0f64;
            let ma = sa as f64 / n;
            let mb = sb as f64 / n;
            let va = saa as f64 / n - ma * ma;
            let vb = sbb as f64 / n - mb * mb;
            let cov = sab as f64 / n - ma * mb;
            total += (2.0 * ma * mb + C1) * (2.0 * cov + C2)
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// `(b - a) / a * 100`. Rounding to two decimals happens at display only.
pub fn delta_percent(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(Error::format("delta denominator must be positive"));
    }
    Ok((b - a) / a * 100.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FramePsnr {
    pub y: PsnrValue,
    pub u: PsnrValue,
    pub v: PsnrValue,
}

/// Full quality report for one decoded stream against the original.
/// Sequence PSNR pools MSE over all frames (the headline number); the
/// per-frame mean is emitted alongside. Timings are quarantined in
/// optional fields excluded from deterministic outputs.
#[derive(Clone, Debug, Serialize)]
pub struct QualityReport {
    pub psnr_y: PsnrValue,
    pub psnr_u: PsnrValue,
    pub psnr_v: PsnrValue,
    pub mean_frame_psnr_y: PsnrValue,
    pub frame_psnr: Vec<FramePsnr>,
    pub ssim_y_mean: f64,
    pub frame_ssim_y: Vec<f64>,
    pub bitrate_bps: Option<f64>,
    pub enc_time_ms: Option<f64>,
    pub transrate_time_ms: Option<f64>,
}

/// Compares two sequences frame by frame. `coded_bytes`, when given,
/// yields the bitrate from the sequence duration.
pub fn quality_report(
    original: &VideoSequence,
    test: &VideoSequence,
    coded_bytes: Option<usize>,
) -> Result<QualityReport> {
    if original.frames.len() != test.frames.len() {
        return Err(Error::format("sequence lengths differ"));
    }
    if original.frames.is_empty() {
        return Err(Error::format("empty sequence"));
    }
    let mut pooled = [(0u64, 0usize); 3];
    let mut frame_psnr = Vec::with_capacity(original.frames.len());
    let mut frame_ssim = Vec::with_capacity(original.frames.len());
    for (a, b) in original.frames.iter().zip(test.frames.iter()) {
        let planes = [(&a.y, &b.y), (&a.u, &b.u), (&a.v, &b.v)];
        let mut per = [PsnrValue::Infinite; 3];
        for (i, (pa, pb)) in planes.iter().enumerate() {
            let (sse, n) = plane_sse(pa, pb)?;
            pooled[i].0 += sse;
            pooled[i].1 += n;
            per[i] = psnr_from_sse(sse, n);
        }
        frame_psnr.push(FramePsnr { y: per[0], u: per[1], v: per[2] });
        frame_ssim.push(ssim(&a.y, &b.y)?);
    }
    // A mean over a set containing an infinite frame is infinite.
    let mean_frame_psnr_y = if frame_psnr.iter().any(|p| p.y.is_infinite()) {
        PsnrValue::Infinite
    } else {
        PsnrValue::Db(
            frame_psnr.iter().map(|p| p.y.as_db()).sum::<f64>() / frame_psnr.len() as f64,
        )
    };
    let duration = original.duration_secs();
    Ok(QualityReport {
        psnr_y: psnr_from_sse(pooled[0].0, pooled[0].1),
        psnr_u: psnr_from_sse(pooled[1].0, pooled[1].1),
        psnr_v: psnr_from_sse(pooled[2].0, pooled[2].1),
        mean_frame_psnr_y,
        frame_psnr,
        ssim_y_mean: frame_ssim.iter().sum::<f64>() / frame_ssim.len() as f64,
        frame_ssim_y: frame_ssim,
        bitrate_bps: coded_bytes.map(|b| b as f64 * 8.0 / duration),
        enc_time_ms: None,
        transrate_time_ms: None,
    })
}

/// 256-bin histograms of the R, G, B and raw-luma channels plus their
/// Shannon entropies in bits.
#[derive(Clone, Debug, Serialize)]
pub struct HistogramReport {
    pub r: Vec<u64>,
    pub g: Vec<u64>,
    pub b: Vec<u64>,
    pub y: Vec<u64>,
    pub entropy_bits: [f64; 4],
}

pub fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

pub fn histogram(frame: &Frame) -> HistogramReport {
    let mut report = HistogramReport {
        r: vec![0; 256],
        g: vec![0; 256],
        b: vec![0; 256],
        y: vec![0; 256],
        entropy_bits: [0.0; 4],
    };
    accumulate_histogram(frame, &mut report);
    finish_histogram(&mut report);
    report
}

pub(crate) fn accumulate_histogram(frame: &Frame, report: &mut HistogramReport) {
    let rgb = frame_to_rgb(frame);
    for px in rgb.chunks_exact(3) {
        report.r[px[0] as usize] += 1;
        report.g[px[1] as usize] += 1;
        report.b[px[2] as usize] += 1;
    }
    for &s in frame.y.data() {
        report.y[s as usize] += 1;
    }
}

pub(crate) fn finish_histogram(report: &mut HistogramReport) {
    report.entropy_bits = [
        entropy_bits(&report.r),
        entropy_bits(&report.g),
        entropy_bits(&report.b),
        entropy_bits(&report.y),
    ];
}

/// Pooled histogram over every frame of a sequence.
pub fn histogram_sequence(seq: &VideoSequence) -> HistogramReport {
    let mut report = HistogramReport {
        r: vec![0; 256],
        g: vec![0; 256],
        b: vec![0; 256],
        y: vec![0; 256],
        entropy_bits: [0.0; 4],
    };
    for f in &seq.frames {
        accumulate_histogram(f, &mut report);
    }
    finish_histogram(&mut report);
    report
}

/// Luma convolved with the 3x3 Laplacian kernel (replicated borders);
/// output is the clipped absolute response.
pub fn laplacian_edges(frame: &Frame) -> Plane {
    let (w, h) = (frame.width(), frame.height());
    let mut out = Plane::new(w, h);
    let sample = |x: i32, y: i32| -> i32 {
        let cx = x.clamp(0, w as i32 - 1) as usize;
        let cy = y.clamp(0, h as i32 - 1) as usize;
        frame.y.get(cx, cy) as i32
    };
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let response = sample(x, y - 1) + sample(x - 1, y) + sample(x + 1, y)
                + sample(x, y + 1)
                - 4 * sample(x, y);
            out.set(x as usize, y as usize, response.abs().min(255) as u8);
        }
    }
    out
}

fn pixelate_plane(plane: &Plane, block: usize) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let mut out = Plane::new(w, h);
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let mut sum = 0u32;
            for y in 0..block {
                for x in 0..block {
                    sum += plane.get(bx + x, by + y) as u32;
                }
            }
            let cells = (block * block) as u32;
            let mean = ((sum + cells / 2) / cells) as u8;
            for y in 0..block {
                for x in 0..block {
                    out.set(bx + x, by + y, mean);
                }
            }
        }
    }
    out
}

/// Replaces each 8x8 luma block (4x4 chroma) with its rounded mean.
pub fn pixelate(frame: &Frame) -> Frame {
    Frame {
        y: pixelate_plane(&frame.y, 8),
        u: pixelate_plane(&frame.u, 4),
        v: pixelate_plane(&frame.v, 4),
        index: frame.index,
    }
}

// ---------------------------------------------------------------------------
// Experiment sweep
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct ExperimentConfig {
    pub base_qp: u8,
    pub targets: Vec<u8>,
    pub gop: u8,
    pub mode: TransrateMode,
    /// Main cipher of the sweep (the encode of every clip/profile).
    pub cipher: CipherSpec,
    /// Weak fixed-XOR baseline for the cipher comparison.
    pub weak_xor: CipherSpec,
    pub jobs: usize,
}

/// The sparse fixed-XOR key used as the weak baseline: two set bits per
/// 128, so only ~1.6% of sign bins flip and the content stays largely
/// visible — the behavior the comparison is designed to expose.
pub const WEAK_XOR_KEY: [u8; 16] =
    [0x80, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0x01];

impl ExperimentConfig {
    pub fn with_key(key: [u8; 16], nonce: [u8; 12]) -> ExperimentConfig {
        ExperimentConfig {
            base_qp: 12,
            targets: vec![24, 36, 48],
            gop: 16,
            mode: TransrateMode::Closed,
            cipher: CipherSpec::new(CipherKind::Aes128Cfb, key, nonce),
            weak_xor: CipherSpec::new(CipherKind::XorFixed, WEAK_XOR_KEY, nonce),
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StreamRecord {
    pub clip: String,
    pub profile: String,
    pub qp: u8,
    pub mode: String,
    pub cipher: String,
    pub size_bytes: usize,
    pub bitrate_kbps: f64,
    pub psnr_y_keyless: PsnrValue,
    pub psnr_y_keyed: PsnrValue,
    pub ssim_y_keyless: f64,
    pub ssim_y_keyed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaRecord {
    pub clip: String,
    pub qp: u8,
    pub bitrate_a_kbps: f64,
    pub bitrate_h_kbps: f64,
    pub delta_bitrate_pct: f64,
    pub psnr_y_keyless_a: PsnrValue,
    pub psnr_y_keyless_h: PsnrValue,
    pub delta_psnr_pct: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CipherCompareRecord {
    pub clip: String,
    pub cipher: String,
    pub psnr_y_keyless: PsnrValue,
    pub entropy_mean_bits: f64,
    pub entropy_rgb_y: [f64; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub corpus: Vec<String>,
    pub base_qp: u8,
    pub targets: Vec<u8>,
    pub gop: u8,
    pub mode: String,
    pub cipher: String,
    pub ssim_window: String,
    pub streams: Vec<StreamRecord>,
    pub deltas: Vec<DeltaRecord>,
    pub cipher_compare: Vec<CipherCompareRecord>,
}

struct ClipProfileResult {
    streams: Vec<StreamRecord>,
    enc_ms: f64,
    transrate_ms: f64,
}

fn run_clip_profile(
    name: &str,
    video: &VideoSequence,
    profile: Profile,
    cfg: &ExperimentConfig,
) -> Result<ClipProfileResult> {
    let mut enc_cfg = EncoderConfig::new(profile, cfg.base_qp);
    enc_cfg.gop = cfg.gop;
    enc_cfg.cipher = cfg.cipher.clone();

    let t0 = Instant::now();
    let base = encode_sequence(video, &enc_cfg)?;
    let enc_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let job = TransrateJob {
        input: base.clone(),
        targets: cfg.targets.clone(),
        mode: cfg.mode,
        mv_sidecar: None,
    };
    let transrated = transrate_many(&job)?;
    let transrate_ms = t1.elapsed().as_secs_f64() * 1e3;

    let key = cfg.cipher.key;
    let mut streams = Vec::new();
    let mode_name = match cfg.mode {
        TransrateMode::Open => "open",
        TransrateMode::Closed => "closed",
    };
    for (qp, bs) in std::iter::once((cfg.base_qp, &base))
        .chain(cfg.targets.iter().copied().zip(transrated.iter()))
    {
        let size = bs.serialize().len();
        let keyless = decode_sequence(bs, None)?;
        let keyed = decode_sequence(bs, Some(&key))?;
        let rep_keyless = quality_report(video, &keyless, Some(size))?;
        let rep_keyed = quality_report(video, &keyed, Some(size))?;
        streams.push(StreamRecord {
            clip: name.to_string(),
            profile: profile.name().to_string(),
            qp,
            mode: mode_name.to_string(),
            cipher: cfg.cipher.kind.name().to_string(),
            size_bytes: size,
            bitrate_kbps: rep_keyless.bitrate_bps.unwrap() / 1e3,
            psnr_y_keyless: rep_keyless.psnr_y,
            psnr_y_keyed: rep_keyed.psnr_y,
            ssim_y_keyless: rep_keyless.ssim_y_mean,
            ssim_y_keyed: rep_keyed.ssim_y_mean,
        });
    }
    Ok(ClipProfileResult { streams, enc_ms, transrate_ms })
}

fn cipher_comparison(
    name: &str,
    video: &VideoSequence,
    cfg: &ExperimentConfig,
) -> Result<Vec<CipherCompareRecord>> {
    let mut out = Vec::new();
    for spec in [&cfg.cipher, &cfg.weak_xor] {
        let mut enc_cfg = EncoderConfig::new(Profile::H, cfg.base_qp);
        enc_cfg.gop = cfg.gop;
        enc_cfg.cipher = spec.clone();
        let bs = encode_sequence(video, &enc_cfg)?;
        let keyless = decode_sequence(&bs, None)?;
        let rep = quality_report(video, &keyless, None)?;
        let hist = histogram_sequence(&keyless);
        out.push(CipherCompareRecord {
            clip: name.to_string(),
            cipher: spec.kind.name().to_string(),
            psnr_y_keyless: rep.psnr_y,
            entropy_mean_bits: hist.entropy_bits.iter().sum::<f64>() / 4.0,
            entropy_rgb_y: hist.entropy_bits,
        });
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_histogram_csv(path: &Path, hist: &HistogramReport) -> Result<()> {
    let mut csv = String::from("value,r,g,b,y\r\n");
    for v in 0..256 {
        csv.push_str(&format!("{v},{},{},{},{}\r\n", hist.r[v], hist.g[v], hist.b[v], hist.y[v]));
    }
    fs::write(path, csv)?;
    Ok(())
}

/// Runs the full sweep over a corpus: crypto-encode each clip at the base
/// QP under both profiles, keyless-transrate to every target, decode each
/// stream with and without the key, and write the report files.
///
/// Deterministic outputs: `streams.csv`, `deltas.csv`, `cipher_compare.csv`,
/// `summary.json`, and the PPM/histogram exports. Wall-clock measurements
/// go to `timings.csv`, written only on single-job runs.
pub fn run_experiment(
    corpus: &[(String, VideoSequence)],
    cfg: &ExperimentConfig,
    report_dir: &Path,
) -> Result<ExperimentSummary> {
    if corpus.is_empty() {
        return Err(Error::format("empty corpus"));
    }
    fs::create_dir_all(report_dir)?;
    fs::create_dir_all(report_dir.join("frames"))?;
    fs::create_dir_all(report_dir.join("histograms"))?;

    // (clip, profile) tasks fan out across jobs; results keep task order.
    let profiles = [Profile::A, Profile::H];
    let tasks: Vec<(usize, Profile)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| profiles.iter().map(move |&p| (ci, p)))
        .collect();
    let jobs = cfg.jobs.max(1);
    let mut results: Vec<Option<ClipProfileResult>> = Vec::new();
    results.resize_with(tasks.len(), || None);

    if jobs == 1 {
        for (ti, &(ci, profile)) in tasks.iter().enumerate() {
            let (name, video) = &corpus[ci];
            results[ti] = Some(run_clip_profile(name, video, profile, cfg)?);
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<ClipProfileResult>>>> =
            tasks.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(tasks.len()) {
                scope.spawn(|| loop {
                    let ti = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if ti >= tasks.len() {
                        break;
                    }
                    let (ci, profile) = tasks[ti];
                    let (name, video) = &corpus[ci];
                    *slots[ti].lock().unwrap() =
                        Some(run_clip_profile(name, video, profile, cfg));
                });
            }
        });
        for (ti, slot) in slots.into_iter().enumerate() {
            results[ti] = Some(slot.into_inner().unwrap().expect("task did not run")?);
        }
    }

    let mut streams = Vec::new();
    let mut timing_rows = Vec::new();
    for (ti, &(ci, profile)) in tasks.iter().enumerate() {
        let res = results[ti].take().unwrap();
        timing_rows.push((
            corpus[ci].0.clone(),
            profile.name().to_string(),
            res.enc_ms,
            res.transrate_ms,
        ));
        streams.extend(res.streams);
    }

    // Delta tables comparing profile A to profile H per (clip, qp).
    let mut deltas = Vec::new();
    let all_qps: Vec<u8> =
        std::iter::once(cfg.base_qp).chain(cfg.targets.iter().copied()).collect();
    for (name, _) in corpus {
        for &qp in &all_qps {
            let find = |p: &str| {
                streams
                    .iter()
                    .find(|s| &s.clip == name && s.profile == p && s.qp == qp)
                    .expect("stream record missing")
            };
            let a = find("A");
            let h = find("H");
            let delta_psnr_pct = if a.psnr_y_keyless.is_infinite() || h.psnr_y_keyless.is_infinite()
            {
                None
            } else {
                Some(delta_percent(a.psnr_y_keyless.as_db(), h.psnr_y_keyless.as_db())?)
            };
            deltas.push(DeltaRecord {
                clip: name.clone(),
                qp,
                bitrate_a_kbps: a.bitrate_kbps,
                bitrate_h_kbps: h.bitrate_kbps,
                delta_bitrate_pct: delta_percent(a.bitrate_kbps, h.bitrate_kbps)?,
                psnr_y_keyless_a: a.psnr_y_keyless,
                psnr_y_keyless_h: h.psnr_y_keyless,
                delta_psnr_pct,
            });
        }
    }

    let mut cipher_compare = Vec::new();
    for (name, video) in corpus {
        cipher_compare.extend(cipher_comparison(name, video, cfg)?);
    }

    // Frame exports from the first clip: original, scrambled, probes.
    {
        let (name, video) = &corpus[0];
        let mut enc_cfg = EncoderConfig::new(Profile::H, cfg.base_qp);
        enc_cfg.gop = cfg.gop;
        enc_cfg.cipher = cfg.cipher.clone();
        let bs = encode_sequence(video, &enc_cfg)?;
        let keyless = decode_sequence(&bs, None)?;
        let fi = video.frames.len() / 2;
        let orig = &video.frames[fi];
        let scrambled = &keyless.frames[fi];
        let frames_dir = report_dir.join("frames");
        write_ppm(orig, fs::File::create(frames_dir.join(format!("{name}-original.ppm")))?)?;
        write_ppm(
            scrambled,
            fs::File::create(frames_dir.join(format!("{name}-keyless.ppm")))?,
        )?;
        write_ppm_gray(
            &laplacian_edges(scrambled),
            fs::File::create(frames_dir.join(format!("{name}-keyless-edges.ppm")))?,
        )?;
        write_ppm(
            &pixelate(scrambled),
            fs::File::create(frames_dir.join(format!("{name}-keyless-pixelate.ppm")))?,
        )?;
        let hist_dir = report_dir.join("histograms");
        write_histogram_csv(&hist_dir.join(format!("{name}-original.csv")), &histogram(orig))?;
        write_histogram_csv(
            &hist_dir.join(format!("{name}-keyless.csv")),
            &histogram(scrambled),
        )?;
    }

    // streams.csv
    let mut csv = String::from(
        "clip,profile,qp,mode,cipher,size_bytes,bitrate_kbps,psnr_y_keyless,psnr_y_keyed,ssim_y_keyless,ssim_y_keyed\r\n",
    );
    for s in &streams {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{},{},{:.6},{:.6}\r\n",
            csv_field(&s.clip),
            s.profile,
            s.qp,
            s.mode,
            s.cipher,
            s.size_bytes,
            s.bitrate_kbps,
            s.psnr_y_keyless.display(),
            s.psnr_y_keyed.display(),
            s.ssim_y_keyless,
            s.ssim_y_keyed,
        ));
    }
    fs::write(report_dir.join("streams.csv"), &csv)?;

    // deltas.csv (two-decimal display per the delta formulas)
    let mut csv = String::from(
        "clip,qp,bitrate_a_kbps,bitrate_h_kbps,delta_bitrate_pct,psnr_y_keyless_a,psnr_y_keyless_h,delta_psnr_pct\r\n",
    );
    for d in &deltas {
        csv.push_str(&format!(
            "{},{},{:.3},{:.3},{:.2},{},{},{}\r\n",
            csv_field(&d.clip),
            d.qp,
            d.bitrate_a_kbps,
            d.bitrate_h_kbps,
            d.delta_bitrate_pct,
            d.psnr_y_keyless_a.display(),
            d.psnr_y_keyless_h.display(),
            d.delta_psnr_pct.map(|v| format!("{v:.2}")).unwrap_or_else(|| "na".to_string()),
        ));
    }
    fs::write(report_dir.join("deltas.csv"), &csv)?;

    // cipher_compare.csv
    let mut csv = String::from("clip,cipher,psnr_y_keyless,entropy_mean_bits,entropy_r,entropy_g,entropy_b,entropy_y\r\n");
    for c in &cipher_compare {
        csv.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\r\n",
            csv_field(&c.clip),
            c.cipher,
            c.psnr_y_keyless.display(),
            c.entropy_mean_bits,
            c.entropy_rgb_y[0],
            c.entropy_rgb_y[1],
            c.entropy_rgb_y[2],
            c.entropy_rgb_y[3],
        ));
    }
    fs::write(report_dir.join("cipher_compare.csv"), &csv)?;

    // Wall-clock numbers are quarantined to their own files and only
    // meaningful on single-job runs.
    if jobs == 1 {
        let mut csv = String::from("clip,profile,enc_ms,transrate_ms\r\n");
        for (clip, profile, enc_ms, tr_ms) in &timing_rows {
            csv.push_str(&format!("{},{},{enc_ms:.2},{tr_ms:.2}\r\n", csv_field(clip), profile));
        }
        fs::write(report_dir.join("timings.csv"), &csv)?;

        // Enc-time deltas between the profiles (per clip).
        let mut csv = String::from("clip,enc_ms_a,enc_ms_h,delta_enc_time_pct\r\n");
        for (name, _) in corpus {
            let a = timing_rows.iter().find(|r| &r.0 == name && r.1 == "A").unwrap();
            let h = timing_rows.iter().find(|r| &r.0 == name && r.1 == "H").unwrap();
            if a.2 > 0.0 {
                csv.push_str(&format!(
                    "{},{:.2},{:.2},{:.2}\r\n",
                    csv_field(name),
                    a.2,
                    h.2,
                    delta_percent(a.2, h.2)?
                ));
            }
        }
        fs::write(report_dir.join("timing_deltas.csv"), &csv)?;
    }

    let summary = ExperimentSummary {
        corpus: corpus.iter().map(|(n, _)| n.clone()).collect(),
        base_qp: cfg.base_qp,
        targets: cfg.targets.clone(),
        gop: cfg.gop,
        mode: match cfg.mode {
            TransrateMode::Open => "open".to_string(),
            TransrateMode::Closed => "closed".to_string(),
        },
        cipher: cfg.cipher.kind.name().to_string(),
        ssim_window: "8x8 uniform, stride 1, luma".to_string(),
        streams,
        deltas,
        cipher_compare,
    };
    fs::write(
        report_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::format(e.to_string()))?,
    )?;
    Ok(summary)
}
