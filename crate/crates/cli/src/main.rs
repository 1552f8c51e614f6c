//! `cvb`: encode, decrypt-free transrate, decode, extract motion vectors,
//! and measure. Exit codes: 0 success, 1 usage, 2 data/format, 3 crypto/key.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvb_core::cipher::{format_key_text, parse_key_text, CipherKind, CipherSpec};
use cvb_core::codec::{
    decode_sequence, encode_sequence, extract_mv_sidecar, CodedBitstream, EncoderConfig, Profile,
};
use cvb_core::corpus::standard_corpus;
use cvb_core::evalkit::{
    histogram, laplacian_edges, pixelate, quality_report, run_experiment, ExperimentConfig,
};
use cvb_core::frame_io::{read_y4m, write_ppm_gray, write_y4m, VideoSequence};
use cvb_core::transrate::{
    cascade_reference, transrate_many_with_stats, TransrateJob, TransrateMode as CoreMode,
};
use cvb_core::Error as CoreError;

const KEY_ENV: &str = "CVB_KEY_FILE";

enum CliError {
    Usage(String),
    Data(String),
    Crypto(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Crypto(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Crypto(m) | CliError::Io(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match e {
            CoreError::Io(e) => CliError::Io(e.to_string()),
            CoreError::Format(m) => CliError::Data(m),
            CoreError::Crypto(m) => CliError::Crypto(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "cvb", version, about = "mini video codec with sign-bin selective encryption and keyless transrating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "H", alias = "h")]
    H,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::A => Profile::A,
            ProfileArg::H => Profile::H,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CipherArg {
    Null,
    AesCfb,
    XorFixed,
    XorPrng,
}

impl From<CipherArg> for CipherKind {
    fn from(c: CipherArg) -> CipherKind {
        match c {
            CipherArg::Null => CipherKind::Null,
            CipherArg::AesCfb => CipherKind::Aes128Cfb,
            CipherArg::XorFixed => CipherKind::XorFixed,
            CipherArg::XorPrng => CipherKind::XorPrng,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Open,
    Closed,
    Cascade,
}

#[derive(Args)]
struct KeyOpt {
    /// Key file: 56 hex chars (16-byte key + 12-byte nonce). Falls back to
    /// the CVB_KEY_FILE environment variable.
    #[arg(long)]
    key_file: Option<PathBuf>,
}

impl KeyOpt {
    fn resolve(&self) -> Option<PathBuf> {
        self.key_file
            .clone()
            .or_else(|| std::env::var_os(KEY_ENV).map(PathBuf::from))
    }

    fn load(&self) -> CliResult<Option<([u8; 16], [u8; 12])>> {
        match self.resolve() {
            None => Ok(None),
            Some(path) => {
                let text = fs::read_to_string(&path).map_err(|e| {
                    CliError::Crypto(format!("cannot read key file {}: {e}", path.display()))
                })?;
                Ok(Some(parse_key_text(&text)?))
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Encode a .y4m video into a .cvb bitstream (optionally encrypted).
    Encode {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        qp: u8,
        #[arg(long, default_value_t = 16)]
        gop: u8,
        #[arg(long, value_enum, default_value_t = ProfileArg::A)]
        profile: ProfileArg,
        #[arg(long, value_enum, default_value_t = CipherArg::Null)]
        cipher: CipherArg,
        #[command(flatten)]
        key: KeyOpt,
    },
    /// Decode a .cvb bitstream to .y4m. Without a key an encrypted stream
    /// decodes structurally and comes out scrambled.
    Decode {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        key: KeyOpt,
    },
    /// Requantize a bitstream to one or more higher QPs without any key.
    Transrate {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Output file (single target) or directory (multiple targets).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Comma-separated target QPs, e.g. 24,36,48.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<u8>,
        #[arg(long, value_enum, default_value_t = ModeArg::Open)]
        mode: ModeArg,
        /// Also write the keyless MV sidecar next to the outputs.
        #[arg(long)]
        emit_mv: bool,
        #[command(flatten)]
        key: KeyOpt,
    },
    /// Extract per-macroblock motion vectors into a .mvs sidecar (keyless).
    ExtractMv {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// PSNR/SSIM report of a test video against a reference video.
    Metrics {
        #[arg(long, value_name = "FILE")]
        r#ref: PathBuf,
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Write the full JSON report here instead of a summary to stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// RGB + luma histograms and channel entropies of one frame.
    Histogram {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Laplacian edge map of one frame, exported as PPM.
    Edges {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// 8x8 pixelation of every frame, written back as .y4m.
    Pixelate {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the full sweep over a corpus directory of .y4m clips.
    Experiment {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "DIR")]
        report: PathBuf,
        /// Synthesize the standard corpus into --corpus first.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        clips: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 12)]
        frames: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Closed)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        key: KeyOpt,
    },
    /// Generate a key file (16-byte key + 12-byte nonce) from OS entropy.
    Keygen {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn read_video(path: &Path) -> CliResult<VideoSequence> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_y4m(file)?)
}

fn read_bitstream(path: &Path) -> CliResult<CodedBitstream> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(CodedBitstream::deserialize(&bytes)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Encode { r#in, out, qp, gop, profile, cipher, key } => {
            if qp > 51 {
                return Err(CliError::Usage("--qp must be in 0..=51".into()));
            }
            if gop == 0 {
                return Err(CliError::Usage("--gop must be at least 1".into()));
            }
            let kind: CipherKind = cipher.into();
            let spec = match kind {
                CipherKind::Null => CipherSpec::null(),
                _ => {
                    let (k, n) = key.load()?.ok_or_else(|| {
                        CliError::Crypto(format!(
                            "cipher {} requires --key-file or {KEY_ENV}",
                            kind.name()
                        ))
                    })?;
                    CipherSpec::new(kind, k, n)
                }
            };
            if spec.is_identity_keystream() {
                eprintln!("warning: all-zero xor-fixed key, encryption is the identity");
            }
            let video = read_video(&r#in)?;
            let mut cfg = EncoderConfig::new(profile.into(), qp);
            cfg.gop = gop;
            cfg.cipher = spec;
            let bs = encode_sequence(&video, &cfg)?;
            fs::write(&out, bs.serialize())?;
            Ok(())
        }
        Command::Decode { r#in, out, key } => {
            let bs = read_bitstream(&r#in)?;
            let key_bytes = key.load()?.map(|(k, _)| k);
            let video = decode_sequence(&bs, key_bytes.as_ref())?;
            write_y4m(&video, fs::File::create(&out)?)?;
            Ok(())
        }
        Command::Transrate { r#in, out, targets, mode, emit_mv, key } => {
            // The middlebox boundary: a transrater never holds a key.
            if key.key_file.is_some() || std::env::var_os(KEY_ENV).is_some() {
                return Err(CliError::Usage(
                    "transrate accepts no key (unset CVB_KEY_FILE / drop --key-file)".into(),
                ));
            }
            if targets.is_empty() {
                return Err(CliError::Usage("--targets must list at least one qp".into()));
            }
            let bs = read_bitstream(&r#in)?;
            for &t in &targets {
                if t <= bs.header.qp {
                    return Err(CliError::Usage(format!(
                        "target qp {t} does not exceed source qp {}",
                        bs.header.qp
                    )));
                }
            }
            let outputs: Vec<(u8, CodedBitstream)> = match mode {
                ModeArg::Open | ModeArg::Closed => {
                    let job = TransrateJob {
                        input: bs.clone(),
                        targets: targets.clone(),
                        mode: match mode {
                            ModeArg::Open => CoreMode::Open,
                            _ => CoreMode::Closed,
                        },
                        mv_sidecar: None,
                    };
                    let (streams, drift) = transrate_many_with_stats(&job)?;
                    if drift.saturated > 0 {
                        eprintln!(
                            "warning: drift buffer saturated {} samples (max |error| {})",
                            drift.saturated, drift.max_abs
                        );
                    }
                    targets.iter().copied().zip(streams).collect()
                }
                ModeArg::Cascade => {
                    if bs.header.cipher_kind != CipherKind::Null {
                        return Err(CliError::Crypto(
                            "cascade mode decodes to pixels and cannot run keyless on an encrypted stream".into(),
                        ));
                    }
                    targets
                        .iter()
                        .map(|&t| Ok((t, cascade_reference(&bs, t, None)?)))
                        .collect::<CliResult<Vec<_>>>()?
                }
            };
            let stem = r#in.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let paths: Vec<PathBuf> = match (&out, targets.len()) {
                (Some(path), 1) => vec![path.clone()],
                (Some(dir), _) => {
                    fs::create_dir_all(dir)?;
                    targets.iter().map(|t| dir.join(format!("{stem}-q{t}.cvb"))).collect()
                }
                (None, _) => {
                    let parent = r#in.parent().unwrap_or(Path::new(".")).to_path_buf();
                    targets.iter().map(|t| parent.join(format!("{stem}-q{t}.cvb"))).collect()
                }
            };
            for ((_, stream), path) in outputs.iter().zip(paths.iter()) {
                fs::write(path, stream.serialize())?;
            }
            if emit_mv {
                let sidecar = extract_mv_sidecar(&bs)?;
                let mv_path = paths[0].with_extension("mvs");
                let mut f = fs::File::create(mv_path)?;
                sidecar.write_to(&mut f)?;
            }
            Ok(())
        }
        Command::ExtractMv { r#in, out } => {
            let bs = read_bitstream(&r#in)?;
            let sidecar = extract_mv_sidecar(&bs)?;
            let mut f = fs::File::create(&out)?;
            sidecar.write_to(&mut f)?;
            Ok(())
        }
        Command::Metrics { r#ref, r#in, out } => {
            let reference = read_video(&r#ref)?;
            let test = read_video(&r#in)?;
            let report = quality_report(&reference, &test, None)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Data(e.to_string()))?;
            match out {
                Some(path) => fs::write(path, json)?,
                None => {
                    println!(
                        "psnr_y {} psnr_u {} psnr_v {} ssim_y {:.6}",
                        report.psnr_y.display(),
                        report.psnr_u.display(),
                        report.psnr_v.display(),
                        report.ssim_y_mean
                    );
                }
            }
            Ok(())
        }
        Command::Histogram { r#in, frame, out } => {
            let video = read_video(&r#in)?;
            let f = video
                .frames
                .get(frame)
                .ok_or_else(|| CliError::Data(format!("no frame {frame}")))?;
            let h = histogram(f);
            let mut csv = String::from("value,r,g,b,y\r\n");
            for v in 0..256 {
                csv.push_str(&format!("{v},{},{},{},{}\r\n", h.r[v], h.g[v], h.b[v], h.y[v]));
            }
            csv.push_str(&format!(
                "entropy_bits,{:.4},{:.4},{:.4},{:.4}\r\n",
                h.entropy_bits[0], h.entropy_bits[1], h.entropy_bits[2], h.entropy_bits[3]
            ));
            fs::write(&out, csv)?;
            Ok(())
        }
        Command::Edges { r#in, frame, out } => {
            let video = read_video(&r#in)?;
            let f = video
                .frames
                .get(frame)
                .ok_or_else(|| CliError::Data(format!("no frame {frame}")))?;
            write_ppm_gray(&laplacian_edges(f), fs::File::create(&out)?)?;
            Ok(())
        }
        Command::Pixelate { r#in, out } => {
            let video = read_video(&r#in)?;
            let mut processed = VideoSequence::new(
                video.width,
                video.height,
                video.fps_num,
                video.fps_den,
            );
            processed.frames = video.frames.iter().map(pixelate).collect();
            write_y4m(&processed, fs::File::create(&out)?)?;
            Ok(())
        }
        Command::Experiment {
            corpus,
            report,
            seed,
            clips,
            width,
            height,
            frames,
            mode,
            jobs,
            key,
        } => {
            if let Some(seed) = seed {
                fs::create_dir_all(&corpus)?;
                for (name, seq) in standard_corpus(seed, clips, width, height, frames) {
                    let path = corpus.join(format!("{name}.y4m"));
                    write_y4m(&seq, fs::File::create(path)?)?;
                }
            }
            let mut entries: Vec<PathBuf> = fs::read_dir(&corpus)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|x| x == "y4m").unwrap_or(false))
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(CliError::Usage(format!(
                    "no .y4m clips in {} (pass --seed to synthesize)",
                    corpus.display()
                )));
            }
            let mut loaded = Vec::new();
            for path in entries {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
                loaded.push((name, read_video(&path)?));
            }
            // Experiments are reproducible: without a key file the cipher
            // key and nonce derive from the seed.
            let (k, n) = match key.load()? {
                Some(kn) => kn,
                None => {
                    let mut rng = cvb_core::rng::SplitMix64::new(seed.unwrap_or(1));
                    let mut k = [0u8; 16];
                    let mut n = [0u8; 12];
                    for b in k.iter_mut().chain(n.iter_mut()) {
                        *b = rng.below(256) as u8;
                    }
                    (k, n)
                }
            };
            let mut cfg = ExperimentConfig::with_key(k, n);
            cfg.mode = match mode {
                ModeArg::Open => CoreMode::Open,
                ModeArg::Closed => CoreMode::Closed,
                ModeArg::Cascade => {
                    return Err(CliError::Usage(
                        "experiment supports open or closed transrating".into(),
                    ))
                }
            };
            cfg.jobs = jobs.max(1);
            run_experiment(&loaded, &cfg, &report)?;
            println!("report written to {}", report.display());
            Ok(())
        }
        Command::Keygen { out } => {
            let mut bytes = [0u8; 28];
            getrandom::fill(&mut bytes)
                .map_err(|e| CliError::Crypto(format!("entropy source failed: {e}")))?;
            let key: [u8; 16] = bytes[..16].try_into().unwrap();
            let nonce: [u8; 12] = bytes[16..].try_into().unwrap();
            fs::write(&out, format_key_text(&key, &nonce) + "\n")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's rendered help/version goes to stdout with status 0
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
