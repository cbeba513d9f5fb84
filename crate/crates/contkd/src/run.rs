//! One configured training run and its output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use contkd_core::data::{gen_gaussian_mixture, gen_noisy_sine, holdout, GaussianMixtureParams, NoisySineParams};
use contkd_core::distill::{train_annealing, train_continuation, train_scratch, train_takd, train_vanilla};
use contkd_core::models::mlp_spec;
use contkd_core::{
    DataSplits, Dataset, DistillConfig, Method, Network, RunRecord, Targets, TeacherSource, TeacherTable,
};

use crate::config::{Generator, OutputSection, RunConfig, TeacherKind};
use crate::error::{AppError, Result};
use crate::format::{load_checkpoint, save_checkpoint, save_dataset};
use crate::metrics::write_metrics;
use crate::smoothness::{smoothness_report, Smoothness};

/// Finished run as written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub method: Method,
    pub seed: u64,
    pub record: RunRecord,
    pub smoothness: Option<Smoothness>,
}

impl RunOutcome {
    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "method={} seed={} best_epoch={} best_metric={}",
            self.method.name(),
            self.seed,
            self.record.best_epoch,
            self.record
                .best_metric
                .map(|m| m.to_string())
                .unwrap_or_else(|| "none".into())
        );
        if let Some(sm) = self.smoothness {
            let _ = write!(
                s,
                " mse_to_clean={} highfreq_energy={}",
                sm.mse_to_clean, sm.highfreq_energy
            );
        }
        s
    }
}

/// Hex SHA-256 prefix of the config with its output section cleared, so the
/// same experiment hashes the same wherever it is written.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = OutputSection::default();
    hash_text(&c.to_toml())
}

pub(crate) fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_dir_name(cfg: &RunConfig) -> String {
    format!("{}-seed{}-{}", cfg.method.name, cfg.method.seed, config_hash(cfg))
}

/// Independent seed for one initialization role.
pub(crate) fn derive_seed(seed: u64, role: u64) -> u64 {
    let mut z = seed ^ role.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STUDENT_ROLE: u64 = 1;
const TEACHER_ROLE: u64 = 2;
const ASSISTANT_ROLE: u64 = 3;

pub fn generate_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let seed = cfg.data_seed();
    Ok(match d.generator {
        Generator::NoisySine => gen_noisy_sine(&NoisySineParams {
            n_samples: d.n_samples,
            lo: d.lo,
            hi: d.hi,
            base_freq: d.base_freq,
            noise_freq: d.noise_freq,
            noise_amp: d.noise_amp,
            seed,
        })?,
        Generator::GaussianMixture => gen_gaussian_mixture(&GaussianMixtureParams {
            n_classes: d.n_classes,
            dim: d.dim,
            n_per_class: d.n_per_class,
            spread: d.spread,
            separation: d.separation,
            seed,
        })?,
    })
}

fn network(cfg: &RunConfig, ds: &Dataset, hidden: &[usize], role: u64) -> Result<Network> {
    let spec = mlp_spec(ds.dim(), hidden, ds.output_dim(), cfg.model.activation.into());
    Ok(Network::init(spec, derive_seed(cfg.method.seed, role))?)
}

struct Teacher {
    source: TeacherSource,
    /// Set when the teacher was trained inside this run.
    trained: Option<Network>,
}

fn build_teacher(cfg: &RunConfig, full: &Dataset, splits: &DataSplits, base: &DistillConfig) -> Result<Teacher> {
    match cfg.teacher_kind() {
        TeacherKind::Table => {
            let outputs = match full.targets() {
                Targets::Values(t) => t,
                Targets::Classes { .. } => {
                    return Err(AppError::Config("`model.teacher`: \"table\" needs regression data".into()))
                }
            };
            Ok(Teacher {
                source: TeacherSource::Table(TeacherTable::from_rows(full.inputs(), outputs)?),
                trained: None,
            })
        }
        TeacherKind::Checkpoint => {
            let path = cfg.model.teacher_checkpoint.as_ref().expect("validated");
            let net = load_checkpoint(path)?;
            if net.in_dim() != full.dim() || net.out_dim() != full.output_dim() {
                return Err(AppError::Config(format!(
                    "`model.teacher_checkpoint`: network is {} -> {}, data needs {} -> {}",
                    net.in_dim(),
                    net.out_dim(),
                    full.dim(),
                    full.output_dim()
                )));
            }
            Ok(Teacher {
                source: TeacherSource::Network(net),
                trained: None,
            })
        }
        TeacherKind::Train | TeacherKind::Auto => {
            let init = network(cfg, full, &cfg.model.teacher_hidden, TEACHER_ROLE)?;
            let tcfg = DistillConfig {
                method: Method::Scratch,
                epochs: cfg.model.teacher_epochs.unwrap_or(base.epochs),
                annealing: None,
                ..*base
            };
            let rec = train_scratch(init, splits, &tcfg)?;
            Ok(Teacher {
                source: TeacherSource::Network(rec.best_checkpoint.clone()),
                trained: Some(rec.best_checkpoint),
            })
        }
    }
}

/// Validates, trains, and writes the run into `out_root/<run_dir_name>`.
pub fn execute(cfg: &RunConfig, out_root: &Path) -> Result<RunOutcome> {
    execute_in(cfg, &out_root.join(run_dir_name(cfg)))
}

/// Validates, trains, and writes the run into `dir`. Nothing is created on
/// disk unless training succeeds.
pub fn execute_in(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let dcfg = cfg.distill_config()?;
    let full = generate_dataset(cfg)?;
    let (train, val) = holdout(&full, cfg.data.val_fraction, cfg.data_seed())?;
    let splits = DataSplits { train, val };
    let student = network(cfg, &full, &cfg.model.student_hidden, STUDENT_ROLE)?;

    let mut teacher_net = None;
    let mut assistant = None;
    let record = if dcfg.method == Method::Scratch {
        train_scratch(student, &splits, &dcfg)?
    } else {
        let teacher = build_teacher(cfg, &full, &splits, &dcfg)?;
        teacher_net = teacher.trained;
        let t = &teacher.source;
        match dcfg.method {
            Method::Vanilla => train_vanilla(student, t, &splits, &dcfg)?,
            Method::Annealing => train_annealing(student, t, &splits, &dcfg)?,
            Method::Continuation => train_continuation(student, t, &splits, &dcfg)?,
            Method::Takd => {
                let hidden = cfg.model.ta_hidden.as_deref().expect("validated");
                let ta = network(cfg, &full, hidden, ASSISTANT_ROLE)?;
                let rec = train_takd(t, ta, student, &splits, &dcfg)?;
                assistant = Some(rec.assistant);
                rec.student
            }
            Method::Scratch => unreachable!(),
        }
    };

    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| AppError::io(&p, e))
    };
    write("config.toml", &cfg.to_toml())?;
    write_metrics(&dir.join("metrics.csv"), &record.rows)?;
    save_checkpoint(&dir.join("best.ckpt"), &record.best_checkpoint)?;
    save_checkpoint(&dir.join("final.ckpt"), &record.final_network)?;
    save_dataset(&dir.join("dataset.bin"), &full)?;
    if let Some(t) = &teacher_net {
        save_checkpoint(&dir.join("teacher.ckpt"), t)?;
    }
    if let Some(a) = &assistant {
        save_checkpoint(&dir.join("ta.ckpt"), &a.best_checkpoint)?;
        write_metrics(&dir.join("ta_metrics.csv"), &a.rows)?;
    }
    let smoothness = if full.clean_targets().is_some() {
        Some(smoothness_report(
            &record.best_checkpoint,
            &full,
            cfg.output.grid_size,
            Some(&dir.join("smoothness.csv")),
        )?)
    } else {
        None
    };
    let outcome = RunOutcome {
        dir: dir.to_path_buf(),
        method: dcfg.method,
        seed: cfg.method.seed,
        record,
        smoothness,
    };
    write("summary.txt", &format!("{}\n", outcome.summary_line()))?;
    Ok(outcome)
}
