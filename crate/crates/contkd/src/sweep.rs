//! Methods × seeds grid of runs with a per-method aggregate.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use contkd_core::Method;

use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::metrics::{csv_err, fmt_opt, writer};
use crate::run::{config_hash, execute, hash_text, run_dir_name, RunOutcome};

pub const SWEEP_HEADER: [&str; 12] = [
    "kind",
    "method",
    "seed",
    "status",
    "best_epoch",
    "best_metric",
    "best_metric_std",
    "mse_to_clean",
    "mse_to_clean_std",
    "highfreq_energy",
    "highfreq_energy_std",
    "run_dir",
];

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub method: Method,
    pub seed: u64,
    pub run_dir: String,
    pub result: std::result::Result<RunOutcome, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub std: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    Some(MeanStd { mean, std })
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub method: Method,
    pub completed: usize,
    pub total: usize,
    pub best_metric: Option<MeanStd>,
    pub mse_to_clean: Option<MeanStd>,
    pub highfreq_energy: Option<MeanStd>,
}

pub struct SweepOutcome {
    pub dir: PathBuf,
    pub entries: Vec<SweepEntry>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| e.result.is_err()).count()
    }

    pub fn aggregate(&self, method: Method) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

pub fn sweep_dir_name(base: &RunConfig, methods: &[Method], seeds: &[u64]) -> String {
    let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    let key = format!("{}|{}|{:?}", config_hash(base), names.join(","), seeds);
    format!("sweep-{}", hash_text(&key))
}

fn arm_config(base: &RunConfig, method: Method, seed: u64) -> RunConfig {
    let mut c = base.clone();
    c.method.name = method.name().to_string();
    c.method.seed = seed;
    c
}

fn aggregate(method: Method, entries: &[SweepEntry]) -> Aggregate {
    let done: Vec<&RunOutcome> = entries
        .iter()
        .filter(|e| e.method == method)
        .filter_map(|e| e.result.as_ref().ok())
        .collect();
    let metrics: Vec<f64> = done.iter().filter_map(|o| o.record.best_metric).collect();
    let sm: Vec<_> = done.iter().filter_map(|o| o.smoothness).collect();
    let (mse, hf) = if sm.len() == done.len() {
        (
            mean_std(&sm.iter().map(|s| s.mse_to_clean).collect::<Vec<_>>()),
            mean_std(&sm.iter().map(|s| s.highfreq_energy).collect::<Vec<_>>()),
        )
    } else {
        (None, None)
    };
    Aggregate {
        method,
        completed: done.len(),
        total: entries.iter().filter(|e| e.method == method).count(),
        best_metric: mean_std(&metrics),
        mse_to_clean: mse,
        highfreq_energy: hf,
    }
}

/// Runs every method × seed, `jobs` at a time. Each run goes in its own
/// directory under the sweep directory; `sweep.csv` is written once all runs
/// finish. Failed runs are recorded rather than aborting the sweep.
pub fn execute_sweep(
    base: &RunConfig,
    methods: &[Method],
    seeds: &[u64],
    jobs: usize,
    out_root: &Path,
) -> Result<SweepOutcome> {
    if seeds.len() < 2 {
        return Err(AppError::Config("`--seeds`: a sweep needs at least two seeds".into()));
    }
    if methods.is_empty() {
        return Err(AppError::Config("`--methods`: no methods given".into()));
    }
    let grid: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let configs: Vec<RunConfig> = grid.iter().map(|&(m, s)| arm_config(base, m, s)).collect();
    for c in &configs {
        c.validate()?;
    }
    let dir = out_root.join(sweep_dir_name(base, methods, seeds));

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<std::result::Result<RunOutcome, String>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = execute(cfg, &dir).map_err(|e| e.to_string());
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });

    let entries: Vec<SweepEntry> = grid
        .iter()
        .zip(&configs)
        .zip(slots)
        .map(|((&(method, seed), cfg), slot)| SweepEntry {
            method,
            seed,
            run_dir: run_dir_name(cfg),
            result: slot.into_inner().expect("slot lock").expect("every run finishes"),
        })
        .collect();
    let aggregates: Vec<Aggregate> = methods.iter().map(|&m| aggregate(m, &entries)).collect();
    std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
    write_sweep_csv(&dir.join("sweep.csv"), &entries, &aggregates)?;
    Ok(SweepOutcome {
        dir,
        entries,
        aggregates,
    })
}

fn write_sweep_csv(path: &Path, entries: &[SweepEntry], aggregates: &[Aggregate]) -> Result<()> {
    let mut w = writer(Vec::new());
    w.write_record(SWEEP_HEADER).map_err(|e| csv_err(path, e))?;
    for e in entries {
        let rec: [String; 12] = match &e.result {
            Ok(o) => [
                "run".into(),
                e.method.name().into(),
                e.seed.to_string(),
                "ok".into(),
                o.record.best_epoch.to_string(),
                fmt_opt(o.record.best_metric),
                String::new(),
                fmt_opt(o.smoothness.map(|s| s.mse_to_clean)),
                String::new(),
                fmt_opt(o.smoothness.map(|s| s.highfreq_energy)),
                String::new(),
                e.run_dir.clone(),
            ],
            Err(msg) => [
                "run".into(),
                e.method.name().into(),
                e.seed.to_string(),
                format!("failed: {msg}"),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.run_dir.clone(),
            ],
        };
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    for a in aggregates {
        let mean = |m: Option<MeanStd>| fmt_opt(m.map(|v| v.mean));
        let std = |m: Option<MeanStd>| fmt_opt(m.and_then(|v| v.std));
        w.write_record([
            "aggregate".to_string(),
            a.method.name().into(),
            String::new(),
            format!("{}/{} ok", a.completed, a.total),
            String::new(),
            mean(a.best_metric),
            std(a.best_metric),
            mean(a.mse_to_clean),
            std(a.mse_to_clean),
            mean(a.highfreq_energy),
            std(a.highfreq_energy),
            String::new(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::io(path, e.into_error()))?;
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
