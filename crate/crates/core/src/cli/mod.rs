//! The `imv` command line.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 contract violation,
//! 4 numeric failure.

pub mod files;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::alignment::{binomial, compute_imv, enumerate_monotonic_paths, validate_imv, AlignmentMatrix, Imv};
use crate::checks::{check_op, DEFAULT_STEP, DEFAULT_TOLERANCE};
use crate::error::Error;
use crate::positions::extract_positions;
use crate::toy::{make_batch, teacher_alignment, train, ToyTask, TrainConfig};
use crate::transforms::{align_from_imv, hma_transform, sma_loss, BoundaryPenalty, KernelConfig, SmaWeights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "imv", version, about = "Index-mapping-vector alignment tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the IMV of an alignment matrix and validate it.
    Imv {
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Hard monotonic transform of a raw IMV.
    Hma {
        #[arg(long)]
        imv: PathBuf,
        #[arg(long)]
        t1: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian alignment matrix from an IMV.
    Reconstruct {
        #[arg(long)]
        imv: PathBuf,
        #[arg(long)]
        t1: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aligned positions of the input tokens from an IMV.
    Positions {
        #[arg(long)]
        imv: PathBuf,
        #[arg(long)]
        t1: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Soft monotonic penalty of an IMV.
    Sma {
        #[arg(long)]
        imv: PathBuf,
        #[arg(long)]
        t1: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda0: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda2: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda3: f64,
        #[arg(long, value_enum, default_value_t = Boundary::Squared)]
        boundary: Boundary,
    },
    /// Enumerate every monotonic path for a shape and check its IMV.
    Oracle {
        #[arg(long)]
        t1: usize,
        #[arg(long)]
        t2: usize,
    },
    /// Finite-difference gradient check of a named operation.
    Gradcheck {
        #[arg(long)]
        op: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        h: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Train the toy aligner from a JSON run configuration.
    TrainToy {
        #[arg(long)]
        config: PathBuf,
        /// Where reports and heatmaps go; defaults to the config's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a matrix file as an ASCII PGM image.
    Heatmap {
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Boundary {
    Squared,
    Absolute,
}

/// JSON document read by `train-toy`. Absent keys take defaults; unknown
/// keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: ToyTask,
    pub train: TrainConfig,
    /// Training seeds; empty means `train.seed` alone.
    pub seeds: Vec<u64>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn contract(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONTRACT, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Infeasible { .. } => EXIT_USAGE,
            Error::Shape(_) | Error::NotNormalized { .. } | Error::Untrained => EXIT_CONTRACT,
            Error::NonFinite { .. }
            | Error::DegenerateImv { .. }
            | Error::NonDeterministic { .. }
            | Error::Diverged { .. } => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Normal output goes to `out`, diagnostics to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Imv { alignment, out: path, tol } => cmd_imv(&alignment, &path, tol, out),
        Command::Hma { imv, t1, out: path } => {
            let pi = read_imv(&imv, t1)?;
            let star = hma_transform(&pi)?;
            files::write(&path, &files::format_vector(star.values())).map_err(Failure::usage)
        }
        Command::Reconstruct { imv, t1, sigma2, out: path } => {
            let pi = read_imv(&imv, t1)?;
            let alpha = align_from_imv(&pi, &KernelConfig::new(sigma2)?);
            files::write(&path, &files::format_matrix(alpha.matrix())).map_err(Failure::usage)
        }
        Command::Positions { imv, t1, sigma2, out: path } => {
            let pi = read_imv(&imv, t1)?;
            let e = extract_positions(&pi, &KernelConfig::new(sigma2)?);
            files::write(&path, &files::format_vector(e.values())).map_err(Failure::usage)
        }
        Command::Sma { imv, t1, lambda0, lambda1, lambda2, lambda3, boundary } => {
            let pi = read_imv(&imv, t1)?;
            let mut weights = SmaWeights::new(lambda0, lambda1, lambda2, lambda3)?;
            weights.boundary = match boundary {
                Boundary::Squared => BoundaryPenalty::Squared,
                Boundary::Absolute => BoundaryPenalty::Absolute,
            };
            let loss = sma_loss(&pi, &weights)?;
            say(out, format_args!("{loss:?}"))
        }
        Command::Oracle { t1, t2 } => cmd_oracle(t1, t2, out),
        Command::Gradcheck { op, seed, h, tol } => {
            let report = check_op(&op, seed, h, tol)?;
            let verdict = if report.pass { "PASS" } else { "FAIL" };
            say(
                out,
                format_args!(
                    "{}: {verdict} (max relative error {:.3e}, {} checked, {} excluded at kinks)",
                    report.op,
                    report.max_rel_error,
                    report.checked,
                    report.excluded.len()
                ),
            )?;
            if report.pass {
                Ok(())
            } else {
                Err(Failure { code: EXIT_NUMERIC, message: format!("gradient check failed for {op}") })
            }
        }
        Command::TrainToy { config, out_dir } => cmd_train_toy(&config, out_dir.as_deref(), out),
        Command::Heatmap { alignment, out: path } => {
            let text = files::read(&alignment).map_err(Failure::usage)?;
            let m = files::parse_matrix(&text).map_err(Failure::usage)?;
            files::write(&path, &files::format_pgm(&m)).map_err(Failure::usage)
        }
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> CmdResult {
    writeln!(out, "{args}").map_err(|e| Failure::usage(format!("cannot write output: {e}")))
}

fn read_imv(path: &Path, t1: usize) -> std::result::Result<Imv, Failure> {
    let text = files::read(path).map_err(Failure::usage)?;
    let values = files::parse_vector(&text).map_err(Failure::usage)?;
    Ok(Imv::new(values, t1)?)
}

fn cmd_imv(path: &Path, out_path: &Path, tol: f64, out: &mut dyn Write) -> CmdResult {
    let text = files::read(path).map_err(Failure::usage)?;
    let m = files::parse_matrix(&text).map_err(Failure::usage)?;
    let alpha = AlignmentMatrix::new(m).map_err(|e| Failure::contract(e.to_string()))?;
    let pi = compute_imv(&alpha)?;
    files::write(out_path, &files::format_vector(pi.values())).map_err(Failure::usage)?;
    let report = validate_imv(&pi, tol);
    let monotone = if report.monotone_continuous { "monotone" } else { "not monotone" };
    let complete = if report.complete { "complete" } else { "incomplete" };
    say(out, format_args!("{monotone}, {complete}"))?;
    for (j, d) in &report.violations {
        say(out, format_args!("  step {j}: delta {d}"))?;
    }
    if !report.complete {
        say(out, format_args!("  start {} end {} (expected 0 and {})", report.start, report.end, pi.t1() - 1))?;
    }
    Ok(())
}

fn cmd_oracle(t1: usize, t2: usize, out: &mut dyn Write) -> CmdResult {
    if t1 == 0 {
        return Err(Failure::usage("t1 must be positive"));
    }
    let paths = enumerate_monotonic_paths(t1, t2)?;
    let all_ok = paths.iter().all(|alpha| {
        compute_imv(alpha).is_ok_and(|pi| {
            let v = pi.values();
            v[0] == 0.0 && v[v.len() - 1] == (t1 - 1) as f64 && pi.deltas().iter().all(|&d| d == 0.0 || d == 1.0)
        })
    });
    let expected = binomial((t2 - 1) as u64, (t1 - 1) as u64);
    let pass = all_ok && paths.len() as u64 == expected;
    say(out, format_args!("{} paths, {}", paths.len(), if pass { "PASS" } else { "FAIL" }))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::contract(format!("oracle failed: expected {expected} valid paths")))
    }
}

fn cmd_train_toy(config: &Path, out_dir: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let text = files::read(config).map_err(Failure::usage)?;
    let run: RunConfig =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", config.display())))?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let seeds = if run.seeds.is_empty() { vec![run.train.seed] } else { run.seeds.clone() };
    for seed in seeds {
        let stem = format!("{}-seed{seed}", run.train.mode);
        let report_path = dir.join(format!("{stem}.jsonl"));
        let cfg = TrainConfig { seed, report_path: Some(report_path.clone()), ..run.train.clone() };
        let (model, report) = train(&run.task, &cfg)?;
        let example = make_batch(&run.task, seed)?;
        let alpha = teacher_alignment(&model, &example)?;
        let heatmap = dir.join(format!("{stem}.pgm"));
        files::write(&heatmap, &files::format_pgm(alpha.matrix())).map_err(Failure::usage)?;
        let threshold = report.steps_to_threshold.map_or("never".to_string(), |s| format!("at step {s}"));
        say(
            out,
            format_args!(
                "{} seed {seed}: accuracy {:.3} diagonality {:.3} recon {:.4} threshold reached {threshold} -> {}",
                cfg.mode,
                report.final_accuracy,
                report.final_diagonality,
                report.final_recon(),
                report_path.display()
            ),
        )?;
    }
    Ok(())
}
