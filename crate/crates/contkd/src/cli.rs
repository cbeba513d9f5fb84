//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use contkd_core::gradcheck::{run_suite, SuiteOptions, DEFAULT_TOLERANCE};
use contkd_core::{Method, OpKind};

use crate::ablate::execute_ablation;
use crate::config::{defaults_reference, RunConfig};
use crate::error::{AppError, Result};
use crate::format::{load_checkpoint, load_dataset};
use crate::metrics::read_metrics;
use crate::run::execute;
use crate::smoothness::smoothness_report;
use crate::sweep::execute_sweep;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CONTKD_OUT";

#[derive(Debug, Parser)]
#[command(name = "contkd", version, about = "Continuation knowledge distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; overrides $CONTKD_OUT and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configured run.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides `method.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the four-arm freeze ablation of a continuation config.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        /// Random points per loss.
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale one op's backward rule, as `op` or `op=factor`.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Run methods × seeds and aggregate the results.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds, at least two.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Comma-separated method names; all five when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Runs executed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize a run directory, or score a checkpoint against a noisy-sine dataset.
    Report {
        /// Run directory written by `train`.
        #[arg(long, conflicts_with_all = ["checkpoint", "dataset"])]
        run: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        /// Where to write the x,prediction,clean,noisy columns.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Print every config key with its default value.
    Defaults,
}

fn load_config(common: &Common, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.method.seed = s;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn out_root(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone())
}

fn parse_corrupt(spec: &str) -> Result<(OpKind, f64)> {
    let (name, factor) = match spec.split_once('=') {
        Some((n, f)) => (
            n,
            f.parse::<f64>()
                .map_err(|_| AppError::Config(format!("`--corrupt`: bad factor `{f}`")))?,
        ),
        None => (spec, 1.5),
    };
    let op = OpKind::from_name(name)
        .ok_or_else(|| AppError::Config(format!("`--corrupt`: unknown op `{name}`")))?;
    Ok((op, factor))
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.is_empty() {
        return Ok(Method::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| {
            Method::from_name(n.trim())
                .ok_or_else(|| AppError::Config(format!("`--methods`: unknown method `{n}`")))
        })
        .collect()
}

fn gradcheck(points: usize, seed: u64, corrupt: Option<&str>) -> Result<()> {
    let opts = SuiteOptions {
        points,
        seed,
        corrupt: corrupt.map(parse_corrupt).transpose()?,
        ..SuiteOptions::default()
    };
    let reports = run_suite(&opts)?;
    let mut failed = Vec::new();
    for r in &reports {
        let ok = r.passes(DEFAULT_TOLERANCE);
        println!(
            "{:<14} points={} max_rel_error={:.3e} {}",
            r.loss.name(),
            r.points,
            r.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.loss.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AppError::GradCheck(failed.join(", ")))
    }
}

fn report_run(dir: &Path) -> Result<()> {
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    let summary = dir.join("summary.txt");
    if let Ok(text) = std::fs::read_to_string(&summary) {
        print!("{text}");
    }
    let best = rows.iter().rev().find(|r| r.is_best);
    println!(
        "epochs={} best_epoch={} best_val_metric={} final_train_loss={}",
        rows.len(),
        best.map(|r| r.epoch).unwrap_or(0),
        best.map(|r| r.val_metric.to_string()).unwrap_or_else(|| "none".into()),
        rows.last().map(|r| r.train_loss.to_string()).unwrap_or_else(|| "none".into()),
    );
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { common, seed } => {
            let cfg = load_config(&common, seed)?;
            let outcome = execute(&cfg, &out_root(&common, &cfg))?;
            println!("{}", outcome.summary_line());
            println!("run_dir={}", outcome.dir.display());
        }
        Command::Ablate { common, seed } => {
            let cfg = load_config(&common, seed)?;
            let outcome = execute_ablation(&cfg, &out_root(&common, &cfg))?;
            for (arm, o) in &outcome.arms {
                println!(
                    "arm={} dynamic={} best_epoch={} best_metric={}",
                    arm.label(),
                    arm.dynamic_factor(),
                    o.record.best_epoch,
                    o.record.best_metric.map(|m| m.to_string()).unwrap_or_default()
                );
            }
            println!("ablation_dir={}", outcome.dir.display());
        }
        Command::Gradcheck {
            points,
            seed,
            corrupt,
        } => gradcheck(points, seed, corrupt.as_deref())?,
        Command::Sweep {
            common,
            seeds,
            methods,
            jobs,
        } => {
            let cfg = load_config(&common, None)?;
            let methods = parse_methods(&methods)?;
            let outcome = execute_sweep(&cfg, &methods, &seeds, jobs, &out_root(&common, &cfg))?;
            for e in &outcome.entries {
                match &e.result {
                    Ok(o) => println!("{}", o.summary_line()),
                    Err(msg) => eprintln!("method={} seed={} failed: {msg}", e.method.name(), e.seed),
                }
            }
            println!("sweep_csv={}", outcome.dir.join("sweep.csv").display());
            let failed = outcome.failed();
            if failed > 0 {
                return Err(AppError::PartialSweep {
                    failed,
                    total: outcome.entries.len(),
                });
            }
        }
        Command::Report {
            run,
            checkpoint,
            dataset,
            grid,
            plot,
        } => match (run, checkpoint, dataset) {
            (Some(dir), _, _) => report_run(&dir)?,
            (None, Some(c), Some(d)) => {
                let net = load_checkpoint(&c)?;
                let ds = load_dataset(&d)?;
                let s = smoothness_report(&net, &ds, grid, plot.as_deref())?;
                println!(
                    "mse_to_clean={} highfreq_energy={}",
                    s.mse_to_clean, s.highfreq_energy
                );
            }
            _ => {
                return Err(AppError::Config(
                    "report needs --run, or --checkpoint with --dataset".into(),
                ))
            }
        },
        Command::Defaults => print!("{}", defaults_reference()),
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
