//! Command-line front end for the codec: compress a point cloud's
//! attributes, reconstruct them against out-of-band geometry, and measure
//! rate-distortion points for plotting.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on data errors (bad
//! files, bad config values, failed solves). Timing goes to stderr so
//! stdout and CSV output stay byte-reproducible run to run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pcsc::cloud::{voxelize, RawCloud};
use pcsc::codec;
use pcsc::color::{convert_out, ColorSpace};
use pcsc::config::CodecConfig;
use pcsc::metrics;
use pcsc::ply::{self, PlyFormat};
use pcsc::{bitstream, Error, Result};

#[derive(Parser)]
#[command(name = "pcsc", version, about = "Lossy attribute codec for voxelized point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress the attributes of a PLY point cloud into a stream.
    Encode {
        /// Input PLY with positions and colors.
        input: PathBuf,
        /// Output stream path.
        output: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Reconstruct attributes from a stream and the geometry it was coded
    /// against, writing a PLY of voxel coordinates and colors.
    Decode {
        /// Input stream path.
        input: PathBuf,
        /// PLY supplying the coded geometry; colors, when present, are only
        /// used to report reconstruction quality.
        geometry: PathBuf,
        /// Output PLY path.
        output: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Encode and decode once, reporting one rate-quality row.
    Eval {
        /// Input PLY with positions and colors.
        input: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Encode and decode at every configured step size, emitting a CSV
    /// table of rate-quality points.
    RdSweep {
        /// Input PLY with positions and colors.
        input: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
}

/// Configuration options shared by every subcommand. Values start from the
/// embedded defaults or from `--config`, then individual flags override.
#[derive(Args)]
struct CodecArgs {
    /// Config file; every key must be present. Omit to use built-in
    /// defaults for the chosen degree.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Quantization step, or a comma-separated list for rd-sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_step)]
    delta: Option<Vec<f64>>,
    /// Rate weight multiplier c in lambda = c * delta^2.
    #[arg(long, value_parser = parse_nonneg)]
    lambda_c: Option<f64>,
    /// Predict each level from the coarser one and code residuals.
    #[arg(long)]
    predict: bool,
    /// B-spline degree of the level bases.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    p: Option<u8>,
    /// Steps per inner Gram solve.
    #[arg(long)]
    m1: Option<u32>,
    /// Series terms per orthonormalizer apply.
    #[arg(long)]
    m2: Option<u32>,
    /// Encoder gradient steps.
    #[arg(long)]
    m3: Option<u32>,
    /// Seed for the solver's spectrum probes.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV table here instead of stdout (eval, rd-sweep).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_step(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid step {s:?}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("step must be positive and finite, got {s}"))
    }
}

fn parse_nonneg(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid value {s:?}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("value must be finite and non-negative, got {s}"))
    }
}

impl CodecArgs {
    fn load(&self) -> Result<CodecConfig> {
        let mut cfg = match &self.config {
            Some(path) => CodecConfig::parse(&read_text(path)?)?,
            None => CodecConfig::defaults(u32::from(self.p.unwrap_or(1))),
        };
        if let Some(p) = self.p {
            cfg.p = u32::from(p);
        }
        if let Some(deltas) = &self.delta {
            cfg.deltas = deltas.clone();
        }
        if let Some(c) = self.lambda_c {
            cfg.lambda_c = c;
        }
        if self.predict {
            cfg.predict = true;
        }
        if let Some(m1) = self.m1 {
            cfg.m1 = m1;
        }
        if let Some(m2) = self.m2 {
            cfg.m2 = m2;
        }
        if let Some(m3) = self.m3 {
            cfg.m3 = m3;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// The single step an encode or eval run uses; sweeps with several steps
/// must narrow the list with `--delta`.
fn single_delta(cfg: &CodecConfig) -> Result<f64> {
    if cfg.deltas.len() != 1 {
        return Err(Error::Config {
            key: "delta".into(),
            reason: format!(
                "this command takes one step, got {}; narrow with --delta",
                cfg.deltas.len()
            ),
        });
    }
    Ok(cfg.deltas[0])
}

fn load_cloud(path: &Path, cfg: &CodecConfig) -> Result<pcsc::cloud::VoxelizedCloud> {
    let raw = ply::parse_ply(&read_bytes(path)?)?;
    voxelize(&raw, cfg.depth as u8, ColorSpace::Bt601)
}

fn print_quality(psnr: &[f64; 3], combined: f64) {
    println!(
        "psnr: {combined:.4} dB (y {:.4}, u {:.4}, v {:.4})",
        psnr[0], psnr[1], psnr[2]
    );
}

fn emit_table(csv: Option<&Path>, table: &str) -> Result<()> {
    match csv {
        Some(path) => write_bytes(path, table.as_bytes()),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn cmd_encode(input: &Path, output: &Path, args: &CodecArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let delta = single_delta(&cfg)?;
    let cloud = load_cloud(input, &cfg)?;
    let (point, out) = codec::evaluate(&cloud, &cfg, delta)?;
    write_bytes(output, &out.bytes)?;
    println!("voxels: {}", cloud.len());
    println!("bits: {} ({} bytes)", point.bits_total, out.bytes.len());
    println!("bpp: {:.4}", point.bpp);
    println!("model estimate: {:.4} bpp", out.model_bits / cloud.len() as f64);
    print_quality(&point.psnr, point.psnr_combined);
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_decode(input: &Path, geometry: &Path, output: &Path, args: &CodecArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let bytes = read_bytes(input)?;
    let (meta, _, _) = bitstream::deserialize(&bytes)?;
    let gbytes = read_bytes(geometry)?;
    // A geometry file with colors doubles as the quality reference.
    let (coords, reference) = match ply::parse_ply(&gbytes) {
        Ok(raw) => {
            let v = voxelize(&raw, meta.depth, ColorSpace::Bt601)?;
            (v.coords.clone(), Some(v))
        }
        Err(_) => {
            let positions = ply::parse_ply_geometry(&gbytes)?;
            let colors = vec![[0u8; 3]; positions.len()];
            let raw = RawCloud::new(positions, colors)?;
            (voxelize(&raw, meta.depth, ColorSpace::Bt601)?.coords, None)
        }
    };
    let decoded = codec::decode(&bytes, &coords, &cfg)?;
    let positions: Vec<[f64; 3]> = decoded
        .coords
        .iter()
        .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
        .collect();
    let colors: Vec<[u8; 3]> = decoded
        .attributes
        .iter()
        .map(|&a| convert_out(ColorSpace::Bt601, a))
        .collect();
    write_bytes(output, &ply::write_ply(&positions, &colors, PlyFormat::Ascii))?;
    println!("voxels: {}", decoded.len());
    if let Some(reference) = &reference {
        let q = metrics::quality(reference, &decoded)?;
        print_quality(&q.psnr, q.psnr_combined);
    }
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_eval(input: &Path, args: &CodecArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let delta = single_delta(&cfg)?;
    let cloud = load_cloud(input, &cfg)?;
    let (point, _) = codec::evaluate(&cloud, &cfg, delta)?;
    let table = format!("{}\n{}\n", codec::CSV_HEADER, point.csv_row());
    emit_table(args.csv.as_deref(), &table)?;
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_rd_sweep(input: &Path, args: &CodecArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let cloud = load_cloud(input, &cfg)?;
    let points = codec::rd_sweep(&cloud, &cfg)?;
    let mut table = String::from(codec::CSV_HEADER);
    table.push('\n');
    for point in &points {
        table.push_str(&point.csv_row());
        table.push('\n');
    }
    emit_table(args.csv.as_deref(), &table)?;
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Encode { input, output, codec } => cmd_encode(input, output, codec),
        Command::Decode { input, geometry, output, codec } => {
            cmd_decode(input, geometry, output, codec)
        }
        Command::Eval { input, codec } => cmd_eval(input, codec),
        Command::RdSweep { input, codec } => cmd_rd_sweep(input, codec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
