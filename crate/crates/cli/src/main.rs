//! `gpz`: compress, decompress, verify and inspect particle position files.
//!
//! Exit codes: 0 success, 1 verification found violations, 2 bad arguments,
//! 3 I/O failure, 4 data error (domain, width overflow, corrupt container).

mod commands;
mod raw;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpz::{EbMode, GpzError, Precision};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(GpzError),
    Violations(usize),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violations(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<GpzError> for CliError {
    fn from(e: GpzError) -> Self {
        match e {
            GpzError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Data(e),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "bad arguments: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Violations(n) => write!(f, "{n} error-bound violations"),
        }
    }
}

#[derive(Parser)]
#[command(name = "gpz", version, about = "Error-bounded lossy compression of particle positions")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress raw coordinate files into a .gpz container.
    Compress(CompressArgs),
    /// Expand a container into raw coordinate files.
    Decompress(DecompressArgs),
    /// Check a container against the original data.
    Verify(VerifyArgs),
    /// Summarize a container.
    Stats(StatsArgs),
    /// Write a synthetic dataset as raw coordinate files.
    Gen(GenArgs),
    /// Measure ratio, quality and throughput on synthetic data and write CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EbModeArg {
    Abs,
    Rel,
}

impl From<EbModeArg> for EbMode {
    fn from(m: EbModeArg) -> Self {
        match m {
            EbModeArg::Abs => EbMode::Absolute,
            EbModeArg::Rel => EbMode::RangeRelative,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// One raw file per axis, or a single file with --interleaved.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Input is one file of x,y,z,x,y,z,... records.
    #[arg(long)]
    interleaved: bool,
}

#[derive(Args)]
struct CodecArgs {
    /// Error bound, absolute or relative to the joint value range.
    #[arg(long, allow_negative_numbers = true)]
    eb: f64,
    #[arg(long, value_enum, default_value = "rel")]
    eb_mode: EbModeArg,
    #[arg(long, default_value_t = 1024)]
    block_size: usize,
    #[arg(long, default_value_t = 32)]
    segs_per_axis: u32,
    /// Store each particle's position in its block so order survives.
    #[arg(long)]
    preserve_order: bool,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionArg,
    /// Number of axes; defaults to the number of per-axis inputs.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    dims: Option<u8>,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long)]
    input: PathBuf,
    /// Files are written as <prefix>.x.bin, <prefix>.y.bin, <prefix>.z.bin.
    #[arg(long)]
    output_prefix: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Original data, laid out as it was given to `compress`.
    #[command(flatten)]
    original: InputArgs,
    #[arg(long)]
    container: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Uniform,
    Clusters,
    Lattice,
}

#[derive(Args)]
struct GenSpecArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    kind: KindArg,
    #[arg(long, default_value_t = 1_000_000)]
    count: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    dims: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side length of the bounding box.
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    #[arg(long, default_value_t = 32)]
    clusters: usize,
    /// Cluster standard deviation, in coordinate units.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Lattice spacing; defaults to extent / cells per side.
    #[arg(long)]
    pitch: Option<f64>,
    /// Maximum displacement from each lattice site.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionArg,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: GenSpecArgs,
    /// Files are written as <prefix>.x.bin etc., or <prefix>.xyz.bin with --interleaved.
    #[arg(long)]
    output_prefix: PathBuf,
    #[arg(long)]
    interleaved: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    spec: GenSpecArgs,
    /// Comma-separated error bounds.
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
    eb: Vec<f64>,
    #[arg(long, value_enum, default_value = "rel")]
    eb_mode: EbModeArg,
    #[arg(long, default_value_t = 1024)]
    block_size: usize,
    #[arg(long, default_value_t = 32)]
    segs_per_axis: u32,
    #[arg(long)]
    preserve_order: bool,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::Decompress(a) => commands::decompress(a),
        Command::Verify(a) => commands::verify(a),
        Command::Stats(a) => commands::stats(a),
        Command::Gen(a) => commands::gen(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => gpz::with_workers(n, || run(cli)),
        None => run(cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
