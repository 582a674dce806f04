//! Command-line entry point: `encode`, `decode`, `train`, `eval`, `qtable`.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 malformed input or data.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::codec::{decode_baseline, decode_ppm, encode_baseline, encode_ppm, CodecError, QuantTable, QuantTablePair};
use crate::metrics::image_psnr;
use crate::pipeline::neural_encode;
use crate::train::{self, BaselineQuality, Checkpoint, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "editjpeg", version, about = "Baseline JPEG with learned coefficient edits and quantization tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a P6 PPM image to baseline JPEG.
    Encode(EncodeArgs),
    /// Decode a baseline JPEG to a P6 PPM image.
    Decode(DecodeArgs),
    /// Train a model on the PPM images of a directory.
    Train(TrainArgs),
    /// Compare a checkpoint against standard JPEG, writing a CSV.
    Eval(EvalArgs),
    /// Print the exported quantization tables of a checkpoint.
    Qtable(QtableArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["quality", "checkpoint"]))]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Standard tables scaled to this quality.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: Option<u8>,
    /// Learned encoder and tables from a checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Original image; prints the PSNR of the decoded result against it.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON training configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    /// Fixed quality for the JPEG rows instead of bitrate matching.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    baseline_quality: Option<u8>,
}

#[derive(Debug, Args)]
struct QtableArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    fn format(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_FORMAT, message: format!("{}: {e}", path.display()) }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::Io { .. } => EXIT_IO,
            _ => EXIT_FORMAT,
        };
        Self { code, message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn read_image(path: &Path) -> Result<crate::codec::RgbImage, Failure> {
    decode_ppm(&read(path)?).map_err(|e| Failure::format(path, e))
}

fn out_err(e: std::io::Error) -> Failure {
    Failure { code: EXIT_IO, message: format!("stdout: {e}") }
}

fn encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let img = read_image(&a.input)?;
    let start = Instant::now();
    let stream = match (&a.checkpoint, a.quality) {
        (Some(path), _) => {
            let ckpt = Checkpoint::load(path)?;
            neural_encode(&ckpt.model, &img).map_err(|e| Failure::format(&a.input, e))?.bitstream
        }
        (None, Some(q)) => {
            let tables = QuantTablePair::for_quality(q).map_err(|e| Failure::format(&a.input, e))?;
            encode_baseline(&img, &tables).map_err(|e| Failure::format(&a.input, e))?
        }
        (None, None) => unreachable!("clap requires one mode"),
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    write(&a.output, stream.as_bytes())?;
    writeln!(out, "bpp={:.4} bytes={} time_ms={ms:.1}", stream.bpp(img.width(), img.height()), stream.len())
        .map_err(out_err)
}

fn decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let bytes = read(&a.input)?;
    let img = decode_baseline(&bytes).map_err(|e: CodecError| Failure::format(&a.input, e))?;
    let reference = a.reference.as_deref().map(read_image).transpose()?;
    write(&a.output, &encode_ppm(&img))?;
    writeln!(out, "width={} height={}", img.width(), img.height()).map_err(out_err)?;
    if let (Some(r), Some(path)) = (reference, &a.reference) {
        let psnr = image_psnr(&r, &img).map_err(|e| Failure::format(path, e))?;
        writeln!(out, "psnr_db={psnr:.4}").map_err(out_err)?;
    }
    Ok(())
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = match &a.config {
        Some(path) => {
            let text = String::from_utf8(read(path)?).map_err(|e| Failure::format(path, e))?;
            TrainConfig::from_json(&text).map_err(|e| Failure::format(path, e))?
        }
        None => TrainConfig::default(),
    };
    let ckpt = train::train(config, &a.data, &a.out, out)?;
    log::info!("wrote {} after {} steps", a.out.display(), ckpt.step);
    Ok(())
}

fn eval_cmd(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let baseline = a.baseline_quality.map_or(BaselineQuality::Matched, BaselineQuality::Fixed);
    let rows = train::evaluate(&ckpt.model, &a.data, &a.csv, baseline)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), a.csv.display()).map_err(out_err)
}

fn print_table(out: &mut dyn Write, name: &str, t: &QuantTable) -> std::io::Result<()> {
    writeln!(out, "{name}")?;
    for row in t.values().chunks(8) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:>3}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn qtable(a: &QtableArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let tables = Checkpoint::load(&a.checkpoint)?.model.qtables();
    print_table(out, "luma", &tables.luma).map_err(out_err)?;
    print_table(out, "chroma", &tables.chroma).map_err(out_err)
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Encode(a) => encode(a, out),
        Command::Decode(a) => decode(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Qtable(a) => qtable(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
