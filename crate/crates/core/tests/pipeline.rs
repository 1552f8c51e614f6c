//! Cross-module pipeline invariants that don't belong to a single unit:
//! header-byte hygiene of encrypted streams, sidecar behavior over
//! encrypted inputs, scrambling strength across the whole QP ladder, and
//! experiment reproducibility across job counts.

use std::fs;
use std::path::PathBuf;

use cvb_core::cipher::{CipherKind, CipherSpec};
use cvb_core::codec::{
    decode_sequence, decode_syntax, encode_sequence, extract_mv_sidecar, EncoderConfig, Profile,
};
use cvb_core::corpus::standard_corpus;
use cvb_core::evalkit::{quality_report, run_experiment, ExperimentConfig};
use cvb_core::syntax::FrameKind;
use cvb_core::transrate::{transrate_open, TransrateMode};

const KEY: [u8; 16] = [0x31; 16];
const NONCE: [u8; 12] = [0x77; 12];

fn spec(kind: CipherKind) -> CipherSpec {
    CipherSpec::new(kind, KEY, NONCE)
}

#[test]
fn header_identical_except_cipher_fields() {
    let video = standard_corpus(11, 1, 48, 32, 6).remove(0).1;
    let mut cfg = EncoderConfig::new(Profile::A, 12);
    cfg.cipher = CipherSpec::null();
    let plain = encode_sequence(&video, &cfg).unwrap().serialize();
    cfg.cipher = spec(CipherKind::Aes128Cfb);
    let enc = encode_sequence(&video, &cfg).unwrap().serialize();

    assert_eq!(plain.len(), enc.len());
    for (i, (a, b)) in plain.iter().zip(enc.iter()).enumerate().take(33) {
        if i == 16 || (17..29).contains(&i) {
            continue; // cipher id and nonce
        }
        assert_eq!(a, b, "header byte {i} changed by encryption");
    }
}

#[test]
fn sidecar_from_encrypted_stream_matches_structure() {
    let video = standard_corpus(21, 1, 64, 48, 6).remove(0).1;
    let mut cfg = EncoderConfig::new(Profile::A, 14);
    cfg.gop = 4;
    let plain_bs = encode_sequence(&video, &cfg).unwrap();
    cfg.cipher = spec(CipherKind::XorPrng);
    let enc_bs = encode_sequence(&video, &cfg).unwrap();

    let plain_sc = extract_mv_sidecar(&plain_bs).unwrap();
    let enc_sc = extract_mv_sidecar(&enc_bs).unwrap();
    assert_eq!(plain_sc.records.len(), enc_sc.records.len());
    for (a, b) in plain_sc.records.iter().zip(enc_sc.records.iter()) {
        assert_eq!((a.frame_index, a.mb_x, a.mb_y, a.ref_index), (b.frame_index, b.mb_x, b.mb_y, b.ref_index));
    }

    // The underlying MVD magnitudes agree record for record; only signs
    // may differ, exactly at the encrypted positions.
    let plain_syn = decode_syntax(&plain_bs, None).unwrap();
    let enc_syn = decode_syntax(&enc_bs, None).unwrap();
    let mut sign_flips = 0usize;
    for (fa, fb) in plain_syn.iter().zip(enc_syn.iter()) {
        if fa.kind != FrameKind::Inter {
            continue;
        }
        for (ma, mb) in fa.mbs.iter().zip(fb.mbs.iter()) {
            let (adx, ady) = ma.mvd.unwrap();
            let (bdx, bdy) = mb.mvd.unwrap();
            assert_eq!(adx.abs(), bdx.abs());
            assert_eq!(ady.abs(), bdy.abs());
            sign_flips += usize::from(adx != bdx) + usize::from(ady != bdy);
        }
    }
    assert!(sign_flips > 0, "corpus clip produced no encrypted mvd signs");
}

#[test]
fn keyless_psnr_below_20_at_every_qp_for_both_stream_ciphers() {
    for (name, video) in standard_corpus(0xE0E0, 4, 64, 48, 8) {
        for kind in [CipherKind::Aes128Cfb, CipherKind::XorPrng] {
            let mut cfg = EncoderConfig::new(Profile::A, 12);
            cfg.cipher = spec(kind);
            let base = encode_sequence(&video, &cfg).unwrap();
            let mut streams = vec![base.clone()];
            for q2 in [24u8, 36, 48] {
                streams.push(transrate_open(&base, q2).unwrap());
            }
            for bs in &streams {
                let keyless = decode_sequence(bs, None).unwrap();
                let psnr = quality_report(&video, &keyless, None).unwrap().psnr_y.as_db();
                assert!(
                    psnr < 20.0,
                    "{name}/{kind:?}/qp{}: keyless psnr {psnr:.2}",
                    bs.header.qp
                );
            }
        }
    }
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> TempDir {
        let dir = std::env::temp_dir().join(format!("cvb-core-{}-{tag}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[test]
fn two_hop_transrate_commutes_with_decryption() {
    // Requantizing an already-transrated encrypted stream must still
    // decrypt to exactly what the plain pipeline produces: the sign-slot
    // map depends only on geometry, so it survives any number of hops.
    let video = standard_corpus(0xABCD, 1, 64, 48, 8).remove(0).1;
    for profile in [Profile::A, Profile::H] {
        let mut cfg = EncoderConfig::new(profile, 12);
        cfg.gop = 4;
        let plain0 = encode_sequence(&video, &cfg).unwrap();
        cfg.cipher = spec(CipherKind::Aes128Cfb);
        let enc0 = encode_sequence(&video, &cfg).unwrap();

        let plain1 = transrate_open(&plain0, 24).unwrap();
        let enc1 = transrate_open(&enc0, 24).unwrap();
        let plain2 = transrate_open(&plain1, 36).unwrap();
        let enc2 = transrate_open(&enc1, 36).unwrap();

        assert_eq!(enc2.header.qp, 36);
        let keyed = decode_sequence(&enc2, Some(&KEY)).unwrap();
        let reference = decode_sequence(&plain2, None).unwrap();
        assert_eq!(keyed, reference, "profile {}", profile.name());
        // sizes still match between plain and encrypted after two hops
        assert_eq!(plain2.serialize().len(), enc2.serialize().len());
    }
}

#[test]
fn all_intra_stream_open_equals_closed() {
    // With gop 1 every macroblock is intra, the drift prediction is always
    // zero, and the two loop architectures coincide exactly.
    let video = standard_corpus(0x1A7A, 1, 48, 32, 5).remove(0).1;
    let mut cfg = EncoderConfig::new(Profile::A, 12);
    cfg.gop = 1;
    let bs = encode_sequence(&video, &cfg).unwrap();
    for q2 in [24u8, 40] {
        let open = transrate_open(&bs, q2).unwrap();
        let closed = cvb_core::transrate::transrate_closed(&bs, q2).unwrap();
        assert_eq!(open.serialize(), closed.serialize());
    }
}

#[test]
fn garbage_input_never_panics() {
    use cvb_core::codec::CodedBitstream;
    use cvb_core::rng::SplitMix64;
    let mut rng = SplitMix64::new(0xBAD);
    // random bytes against the deserializer
    for _ in 0..200 {
        let len = rng.below(200) as usize;
        let bytes: Vec<u8> = (0..len).map(|_| rng.below(256) as u8).collect();
        let _ = CodedBitstream::deserialize(&bytes);
    }
    // a valid header with corrupted payload bytes: decode must return,
    // never hang or panic (garbage syntax is either an error or junk)
    let video = standard_corpus(0xBAD2, 1, 48, 32, 3).remove(0).1;
    let bs = encode_sequence(&video, &EncoderConfig::new(Profile::A, 20)).unwrap();
    for trial in 0..50 {
        let mut copy = bs.clone();
        for rec in copy.frames.iter_mut() {
            if !rec.payload.is_empty() {
                let n = rec.payload.len();
                let hits = 1 + rng.below(8) as usize;
                for _ in 0..hits {
                    let at = rng.below(n as u64) as usize;
                    rec.payload[at] ^= (1 + rng.below(255)) as u8;
                }
            }
        }
        let _ = decode_sequence(&copy, None);
        let _ = trial;
    }
}

#[test]
fn experiment_outputs_independent_of_job_count() {
    let corpus = standard_corpus(0xD15C, 3, 48, 32, 5);
    let tmp = TempDir::new("jobs");
    let mut cfg = ExperimentConfig::with_key(KEY, NONCE);
    cfg.mode = TransrateMode::Open;

    let serial_dir = tmp.0.join("serial");
    run_experiment(&corpus, &cfg, &serial_dir).unwrap();

    cfg.jobs = 3;
    let parallel_dir = tmp.0.join("parallel");
    run_experiment(&corpus, &cfg, &parallel_dir).unwrap();

    for name in ["streams.csv", "deltas.csv", "cipher_compare.csv", "summary.json"] {
        assert_eq!(
            fs::read(serial_dir.join(name)).unwrap(),
            fs::read(parallel_dir.join(name)).unwrap(),
            "{name} depends on job count"
        );
    }
    // timings are quarantined: single-job runs emit them, parallel runs don't
    assert!(serial_dir.join("timings.csv").exists());
    assert!(!parallel_dir.join("timings.csv").exists());
}
