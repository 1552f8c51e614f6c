//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (visible with --nocapture).
//!
//! Criteria with a wall-clock budget assert it; the multi-rate timing
//! ratio is informational and only printed.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use cvb_core::cipher::{aes_block, CipherKind, CipherSpec};
use cvb_core::codec::{
    decode_sequence, decode_syntax, decode_syntax_traced, encode_sequence, CodedBitstream,
    EncoderConfig, Profile,
};
use cvb_core::corpus::standard_corpus;
use cvb_core::entropy::{BinKind, Context, RangeDecoder, RangeEncoder};
use cvb_core::evalkit::{
    histogram_sequence, psnr, quality_report, PsnrValue, WEAK_XOR_KEY,
};
use cvb_core::frame_io::{Plane, VideoSequence};
use cvb_core::rng::SplitMix64;
use cvb_core::transrate::{
    cascade_reference, transrate_closed, transrate_many, transrate_open, TransrateJob,
    TransrateMode,
};
use cvb_core::xquant::{
    dequantize, forward, inverse, quantize, quantize_coeff, QuantMode, QuantSpec,
    TransformSpec,
};

const TEST_KEY: [u8; 16] = [
    0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
    0x3c,
];
const TEST_NONCE: [u8; 12] = [0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc];

/// Regression floor for the closed-loop commutation gap (criterion 12),
/// pinned from the first green run (measured min 24.3 dB on the corpus).
const CLOSED_LOOP_GAP_FLOOR_DB: f64 = 20.0;

/// The criteria measure wall-clock budgets, so the suite runs one
/// criterion at a time regardless of the harness thread count.
fn serial() -> MutexGuard<'static, ()> {
    static GATE: Mutex<()> = Mutex::new(());
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn corpus10() -> &'static [(String, VideoSequence)] {
    static CORPUS: OnceLock<Vec<(String, VideoSequence)>> = OnceLock::new();
    CORPUS.get_or_init(|| standard_corpus(0xC0FFEE, 10, 64, 48, 10))
}

fn clips20() -> &'static [(String, VideoSequence)] {
    static CLIPS: OnceLock<Vec<(String, VideoSequence)>> = OnceLock::new();
    CLIPS.get_or_init(|| standard_corpus(0xFEED5EED, 20, 48, 32, 6))
}

fn encode(video: &VideoSequence, profile: Profile, qp: u8, cipher: CipherSpec) -> CodedBitstream {
    let mut cfg = EncoderConfig::new(profile, qp);
    cfg.gop = 16;
    cfg.cipher = cipher;
    encode_sequence(video, &cfg).expect("encode failed")
}

fn aes_spec() -> CipherSpec {
    CipherSpec::new(CipherKind::Aes128Cfb, TEST_KEY, TEST_NONCE)
}

fn prng_spec() -> CipherSpec {
    CipherSpec::new(CipherKind::XorPrng, TEST_KEY, TEST_NONCE)
}

fn fixed_spec() -> CipherSpec {
    CipherSpec::new(CipherKind::XorFixed, TEST_KEY, TEST_NONCE)
}

fn weak_xor_spec() -> CipherSpec {
    CipherSpec::new(CipherKind::XorFixed, WEAK_XOR_KEY, TEST_NONCE)
}

fn pooled_psnr_y(original: &VideoSequence, test: &VideoSequence) -> PsnrValue {
    quality_report(original, test, None).unwrap().psnr_y
}

/// PSNR between two decoded sequences, pooled over the luma plane.
fn psnr_between_y(a: &VideoSequence, b: &VideoSequence) -> f64 {
    let mut merged_a = Vec::new();
    let mut merged_b = Vec::new();
    for (fa, fb) in a.frames.iter().zip(b.frames.iter()) {
        merged_a.extend_from_slice(fa.y.data());
        merged_b.extend_from_slice(fb.y.data());
    }
    let pa = Plane::from_vec(merged_a.len().max(1), 1, merged_a);
    let pb = Plane::from_vec(merged_b.len().max(1), 1, merged_b);
    psnr(&pa, &pb).unwrap().as_db()
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Op {
    Regular(usize),
    Bypass,
}

fn random_ops(rng: &mut SplitMix64, len: usize) -> Vec<(Op, bool)> {
    (0..len)
        .map(|_| {
            let op = match rng.below(8) {
                0..=4 => Op::Regular(rng.below(6) as usize),
                _ => Op::Bypass,
            };
            (op, rng.coin())
        })
        .collect()
}

fn encode_ops(ops: &[(Op, bool)], flips: Option<&[bool]>) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    let mut ctxs = [Context::new(); 6];
    let mut bypass_i = 0usize;
    for &(op, v) in ops {
        match op {
            Op::Regular(c) => enc.encode_regular(&mut ctxs[c], v),
            Op::Bypass => {
                let v = match flips {
                    Some(f) if f[bypass_i] => !v,
                    _ => v,
                };
                bypass_i += 1;
                enc.encode_bypass(v);
            }
        }
    }
    enc.finish().unwrap();
    enc.into_bytes()
}

#[test]
fn c01_entropy_round_trip() {
    let _gate = serial();
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xACC_0001);
    let mut total_bins = 0u64;
    for stream in 0..10_000u64 {
        let len = 1 + rng.below(10_000) as usize;
        total_bins += len as u64;
        let ops = random_ops(&mut rng, len);
        let bytes = encode_ops(&ops, None);
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        let mut ctxs = [Context::new(); 6];
        for &(op, v) in &ops {
            let got = match op {
                Op::Regular(c) => dec.decode_regular(&mut ctxs[c]).unwrap(),
                Op::Bypass => dec.decode_bypass().unwrap(),
            };
            assert_eq!(got, v, "stream {stream}");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "entropy round trip took {elapsed:.1}s");
    println!(
        "criterion 1 PASS: 10000 streams ({total_bins} bins) round-tripped in {elapsed:.2}s"
    );
}

#[test]
fn c02_bypass_length_invariance() {
    let _gate = serial();
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xACC_0002);
    for stream in 0..1_000 {
        let len = 1 + rng.below(3_000) as usize;
        let ops = random_ops(&mut rng, len);
        let bypass_count = ops.iter().filter(|(op, _)| matches!(op, Op::Bypass)).count();
        let flips: Vec<bool> = (0..bypass_count).map(|_| rng.coin()).collect();
        let base = encode_ops(&ops, None);
        let flipped = encode_ops(&ops, Some(&flips));
        assert_eq!(base.len(), flipped.len(), "stream {stream} length changed");

        let mut dec = RangeDecoder::new(&flipped).unwrap();
        let mut ctxs = [Context::new(); 6];
        let mut bypass_i = 0usize;
        for &(op, v) in &ops {
            match op {
                Op::Regular(c) => {
                    assert_eq!(dec.decode_regular(&mut ctxs[c]).unwrap(), v, "regular bin changed");
                }
                Op::Bypass => {
                    let want = v ^ flips[bypass_i];
                    bypass_i += 1;
                    assert_eq!(dec.decode_bypass().unwrap(), want);
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0);
    println!("criterion 2 PASS: 1000 flipped streams, identical lengths and regular decodes ({elapsed:.2}s)");
}

#[test]
fn c03_format_compatibility() {
    let _gate = serial();
    let mut checked = 0;
    for (name, video) in clips20() {
        let plain = encode(video, Profile::A, 12, CipherSpec::null());
        let (_, plain_traces) = decode_syntax_traced(&plain, None).unwrap();
        for spec in [aes_spec(), prng_spec(), fixed_spec()] {
            let enc = encode(video, Profile::A, 12, spec.clone());
            // keyless decode must succeed
            let (syn, traces) = decode_syntax_traced(&enc, None).unwrap();
            decode_sequence(&enc, None).unwrap();
            // bin-level differential: only Sign bins may differ
            assert_eq!(plain_traces.len(), traces.len());
            for (ta, tb) in plain_traces.iter().zip(traces.iter()) {
                assert_eq!(ta.len(), tb.len(), "{name}: trace lengths differ");
                for (a, b) in ta.iter().zip(tb.iter()) {
                    assert_eq!(a.kind, b.kind, "{name}: bin kind changed");
                    if a.value != b.value {
                        assert_eq!(a.kind, BinKind::Sign, "{name}: non-sign bin differs");
                    }
                }
            }
            // element-level: magnitudes and flags identical
            let plain_syn = decode_syntax(&plain, None).unwrap();
            for (fa, fb) in plain_syn.iter().zip(syn.iter()) {
                assert_eq!(fa.kind, fb.kind);
                for (ma, mb) in fa.mbs.iter().zip(fb.mbs.iter()) {
                    match (ma.mvd, mb.mvd) {
                        (None, None) => {}
                        (Some((ax, ay)), Some((bx, by))) => {
                            assert_eq!(ax.abs(), bx.abs());
                            assert_eq!(ay.abs(), by.abs());
                        }
                        _ => panic!("mvd presence differs"),
                    }
                    let blocks_a = ma.luma.iter().chain(ma.cb.iter()).chain(ma.cr.iter());
                    let blocks_b = mb.luma.iter().chain(mb.cb.iter()).chain(mb.cr.iter());
                    for (ba, bb) in blocks_a.zip(blocks_b) {
                        for (la, lb) in ba.levels.iter().zip(bb.levels.iter()) {
                            assert_eq!(la.abs(), lb.abs(), "{name}: magnitude changed");
                        }
                    }
                }
            }
            checked += 1;
        }
    }
    println!("criterion 3 PASS: {checked} clip/cipher pairs format-compatible, diffs only at sign bins");
}

#[test]
fn c04_crypto_round_trip() {
    let _gate = serial();
    for (name, video) in clips20() {
        let plain = encode(video, Profile::A, 12, CipherSpec::null());
        let reference = decode_sequence(&plain, None).unwrap();
        for spec in [aes_spec(), prng_spec(), fixed_spec()] {
            let enc = encode(video, Profile::A, 12, spec.clone());
            let keyed = decode_sequence(&enc, Some(&TEST_KEY)).unwrap();
            assert_eq!(keyed, reference, "{name}/{:?}: keyed decode differs", spec.kind);
        }
    }
    println!("criterion 4 PASS: keyed decodes bit-exact against null-cipher decodes (20 clips x 3 ciphers)");
}

#[test]
fn c05_size_invariance() {
    let _gate = serial();
    let mut checked = 0;
    for (name, video) in corpus10() {
        for qp in [12u8, 24, 36, 48] {
            let plain_len = encode(video, Profile::A, qp, CipherSpec::null()).serialize().len();
            for spec in [aes_spec(), prng_spec(), fixed_spec()] {
                let enc_len = encode(video, Profile::A, qp, spec.clone()).serialize().len();
                assert_eq!(enc_len, plain_len, "{name} qp {qp} {:?}", spec.kind);
                checked += 1;
            }
        }
    }
    println!("criterion 5 PASS: {checked} encrypted streams byte-length-equal to plain");
}

#[test]
fn c06_open_loop_commutation() {
    let _gate = serial();
    let start = Instant::now();
    let mut cases = 0;
    for (name, video) in corpus10() {
        for profile in [Profile::A, Profile::H] {
            let plain = encode(video, profile, 12, CipherSpec::null());
            let enc = encode(video, profile, 12, aes_spec());
            for q2 in [24u8, 36, 48] {
                let t_plain = transrate_open(&plain, q2).unwrap();
                let t_enc = transrate_open(&enc, q2).unwrap();
                let keyed = decode_sequence(&t_enc, Some(&TEST_KEY)).unwrap();
                let reference = decode_sequence(&t_plain, None).unwrap();
                assert_eq!(
                    keyed, reference,
                    "{name}/{}/q2={q2}: commutation broken",
                    profile.name()
                );
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "commutation suite took {elapsed:.1}s");
    println!("criterion 6 PASS: decrypt-after-transrate == transrate-plain on {cases} cases ({elapsed:.1}s)");
}

#[test]
fn c07_scrambling_strength() {
    let _gate = serial();
    let mut worst_keyless = f64::NEG_INFINITY;
    let mut worst_margin = f64::INFINITY;
    for (name, video) in corpus10() {
        let enc = encode(video, Profile::A, 12, aes_spec());
        let keyless = decode_sequence(&enc, None).unwrap();
        let keyed = decode_sequence(&enc, Some(&TEST_KEY)).unwrap();
        let p_keyless = pooled_psnr_y(video, &keyless).as_db();
        let p_keyed = pooled_psnr_y(video, &keyed).as_db();
        assert!(
            p_keyless < 20.0,
            "{name}: keyless psnr_y {p_keyless:.2} dB not below 20"
        );
        assert!(
            p_keyless <= p_keyed - 10.0,
            "{name}: margin only {:.2} dB",
            p_keyed - p_keyless
        );
        worst_keyless = worst_keyless.max(p_keyless);
        worst_margin = worst_margin.min(p_keyed - p_keyless);
    }
    println!(
        "criterion 7 PASS: worst keyless psnr_y {worst_keyless:.2} dB, smallest margin {worst_margin:.2} dB"
    );
}

#[test]
fn c08_qp_monotonicity() {
    let _gate = serial();
    for (name, video) in corpus10() {
        for profile in [Profile::A, Profile::H] {
            let sizes: Vec<usize> = [12u8, 24, 36, 48]
                .iter()
                .map(|&qp| encode(video, profile, qp, CipherSpec::null()).serialize().len())
                .collect();
            for w in sizes.windows(2) {
                assert!(
                    w[0] > w[1],
                    "{name}/{}: sizes not strictly decreasing: {sizes:?}",
                    profile.name()
                );
            }
        }
    }
    println!("criterion 8 PASS: sizes strictly decrease over qp 12,24,36,48 for 10 clips x 2 profiles");
}

#[test]
fn c09_delta_formula_fidelity() {
    let _gate = serial();
    let d_bitrate = cvb_core::evalkit::delta_percent(1670.0, 1130.0).unwrap();
    assert!((d_bitrate - -32.34).abs() <= 0.01, "{d_bitrate}");
    let d_psnr = cvb_core::evalkit::delta_percent(10.01, 16.19).unwrap();
    assert!((d_psnr - 61.74).abs() <= 0.01, "{d_psnr}");
    println!("criterion 9 PASS: delta formulas reproduce -32.34% and +61.74% within 0.01");
}

#[test]
fn c10_cipher_comparison() {
    let _gate = serial();
    let mut both_hold = 0;
    let total = corpus10().len();
    for (name, video) in corpus10() {
        let enc_aes = encode(video, Profile::H, 12, aes_spec());
        let enc_weak = encode(video, Profile::H, 12, weak_xor_spec());
        let dec_aes = decode_sequence(&enc_aes, None).unwrap();
        let dec_weak = decode_sequence(&enc_weak, None).unwrap();
        let ent_aes = histogram_sequence(&dec_aes).entropy_bits.iter().sum::<f64>() / 4.0;
        let ent_weak = histogram_sequence(&dec_weak).entropy_bits.iter().sum::<f64>() / 4.0;
        let p_aes = pooled_psnr_y(video, &dec_aes).as_db();
        let p_weak = pooled_psnr_y(video, &dec_weak).as_db();
        let ok = ent_aes > ent_weak && p_aes <= p_weak;
        println!(
            "  {name}: entropy aes {ent_aes:.3} vs xor {ent_weak:.3}, psnr aes {p_aes:.2} vs xor {p_weak:.2} -> {}",
            if ok { "ok" } else { "MISS" }
        );
        if ok {
            both_hold += 1;
        }
    }
    assert!(both_hold >= 8, "direction held on only {both_hold}/{total} clips");
    println!("criterion 10 PASS: aes scrambles harder than weak xor on {both_hold}/{total} clips");
}

#[test]
fn c11_aes_known_answers() {
    let _gate = serial();
    let key: [u8; 16] = (0..16u8).collect::<Vec<_>>().try_into().unwrap();
    let pt: [u8; 16] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee,
        0xff,
    ];
    let want: [u8; 16] = [
        0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30, 0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5,
        0x5a,
    ];
    assert_eq!(aes_block(&key, &pt), want);
    let zero_want: [u8; 16] = [
        0x66, 0xe9, 0x4b, 0xd4, 0xef, 0x8a, 0x2c, 0x3b, 0x88, 0x4c, 0xfa, 0x59, 0xca, 0x34, 0x2b,
        0x2e,
    ];
    assert_eq!(aes_block(&[0; 16], &[0; 16]), zero_want);
    println!("criterion 11 PASS: FIPS-197 C.1 and zero-vector known answers exact");
}

#[test]
fn c12_transrater_mode_ordering() {
    let _gate = serial();
    let q2 = 36u8;
    let mut min_gap = f64::INFINITY;
    for (name, video) in corpus10() {
        let plain = encode(video, Profile::A, 12, CipherSpec::null());
        let cascade = cascade_reference(&plain, q2, None).unwrap();
        let dec_cascade = decode_sequence(&cascade, None).unwrap();
        let dec_open = decode_sequence(&transrate_open(&plain, q2).unwrap(), None).unwrap();
        let dec_closed = decode_sequence(&transrate_closed(&plain, q2).unwrap(), None).unwrap();
        let p_open = psnr_between_y(&dec_open, &dec_cascade);
        let p_closed = psnr_between_y(&dec_closed, &dec_cascade);
        assert!(
            p_closed >= p_open,
            "{name}: closed {p_closed:.2} dB below open {p_open:.2} dB vs cascade"
        );

        // Closed-loop commutation gap on the encrypted path: measured and
        // guarded by a regression floor, not asserted exact.
        let enc = encode(video, Profile::A, 12, aes_spec());
        let keyed = decode_sequence(&transrate_closed(&enc, q2).unwrap(), Some(&TEST_KEY)).unwrap();
        let plain_closed = decode_sequence(&transrate_closed(&plain, q2).unwrap(), None).unwrap();
        let gap = psnr_between_y(&keyed, &plain_closed);
        min_gap = min_gap.min(gap);
        println!("  {name}: closed {p_closed:.2} dB >= open {p_open:.2} dB; commutation gap {gap:.2} dB");
    }
    assert!(
        min_gap >= CLOSED_LOOP_GAP_FLOOR_DB,
        "closed-loop commutation gap regressed: {min_gap:.2} dB"
    );
    println!(
        "criterion 12 PASS: closed >= open vs cascade on all clips; min commutation gap {min_gap:.2} dB (floor {CLOSED_LOOP_GAP_FLOOR_DB})"
    );
}

#[test]
fn c13_oddness_suite() {
    let _gate = serial();
    // Exhaustive scalar sweep: |w| <= 4096 at the four sweep QPs, every
    // position of both block sizes.
    for n in [4usize, 8] {
        let ts = TransformSpec::new(n);
        for qp in [12u8, 24, 36, 48] {
            for mode in [QuantMode::Intra, QuantMode::Inter] {
                let qs = QuantSpec::new(&ts, qp, mode);
                for i in 0..n {
                    for j in 0..n {
                        let (eff, dz) = (qs.eff(i, j), qs.dz16(i, j));
                        for w in 0..=4096i64 {
                            let q = quantize_coeff(w, eff, dz);
                            assert_eq!(quantize_coeff(-w, eff, dz), -q);
                        }
                    }
                }
            }
        }
    }

    // A million random coefficients through the full scalar chain.
    let mut rng = SplitMix64::new(0xACC_0013);
    let ts4 = TransformSpec::new(4);
    let ts8 = TransformSpec::new(8);
    for _ in 0..1_000_000 {
        let n = if rng.coin() { 4 } else { 8 };
        let ts = if n == 4 { &ts4 } else { &ts8 };
        let qp = [12u8, 24, 36, 48][rng.below(4) as usize];
        let qs = QuantSpec::new(ts, qp, QuantMode::Inter);
        let i = rng.below(n as u64) as usize;
        let j = rng.below(n as u64) as usize;
        let w = rng.range_i64(-(1 << 40), 1 << 40);
        let q = quantize_coeff(w, qs.eff(i, j), qs.dz16(i, j));
        assert_eq!(quantize_coeff(-w, qs.eff(i, j), qs.dz16(i, j)), -q);
        // dequantize oddness
        assert_eq!(-(q * 16 * qs.eff(i, j)), (-q) * 16 * qs.eff(i, j));
    }

    // Block-level chain: quantize(forward(-X)) == -quantize(forward(X)),
    // and the inverse transform is odd while unclipped.
    let mut rng = SplitMix64::new(0xACC_1013);
    for _ in 0..500 {
        let n = if rng.coin() { 4 } else { 8 };
        let ts = if n == 4 { &ts4 } else { &ts8 };
        let qp = [12u8, 24, 36, 48][rng.below(4) as usize];
        let qs = QuantSpec::new(ts, qp, QuantMode::Intra);
        let x: Vec<i32> = (0..n * n).map(|_| rng.range_i64(-255, 255) as i32).collect();
        let neg: Vec<i32> = x.iter().map(|&v| -v).collect();
        let q_pos = quantize(&forward(&x, ts), &qs);
        let q_neg = quantize(&forward(&neg, ts), &qs);
        assert_eq!(q_neg, q_pos.negated());
        let r_pos = inverse(&dequantize(&q_pos, &qs), ts);
        let r_neg = inverse(&dequantize(&q_neg, &qs), ts);
        for (a, b) in r_pos.iter().zip(r_neg.iter()) {
            assert_eq!(*a, -*b);
        }
    }
    println!("criterion 13 PASS: oddness exact on exhaustive sweep and 10^6 random coefficients");
}

#[test]
fn c14_multi_rate_reuse() {
    let _gate = serial();
    let video = standard_corpus(0xACC_0014, 1, 96, 64, 12).remove(0).1;
    let base = encode(&video, Profile::A, 12, CipherSpec::null());
    let targets = vec![24u8, 36, 48];

    // Byte equivalence for both modes.
    for mode in [TransrateMode::Open, TransrateMode::Closed] {
        let job =
            TransrateJob { input: base.clone(), targets: targets.clone(), mode, mv_sidecar: None };
        let many = transrate_many(&job).unwrap();
        for (i, &q2) in targets.iter().enumerate() {
            let single = match mode {
                TransrateMode::Open => transrate_open(&base, q2).unwrap(),
                TransrateMode::Closed => transrate_closed(&base, q2).unwrap(),
            };
            assert_eq!(many[i].serialize(), single.serialize());
        }
    }

    // Timing: shared-decode fan-out vs independent runs (single-threaded).
    // Informational with the 0.9 threshold.
    let job = TransrateJob {
        input: base.clone(),
        targets: targets.clone(),
        mode: TransrateMode::Closed,
        mv_sidecar: None,
    };
    let reps = 5;
    let t_many = {
        let t = Instant::now();
        for _ in 0..reps {
            transrate_many(&job).unwrap();
        }
        t.elapsed().as_secs_f64()
    };
    let t_single = {
        let t = Instant::now();
        for _ in 0..reps {
            for &q2 in &targets {
                transrate_closed(&base, q2).unwrap();
            }
        }
        t.elapsed().as_secs_f64()
    };
    let ratio = t_many / t_single;
    let verdict = if ratio < 0.9 { "PASS" } else { "INFO (threshold 0.9 missed)" };
    println!(
        "criterion 14 {verdict}: outputs byte-identical; fan-out/independent time ratio {ratio:.3}"
    );
}
