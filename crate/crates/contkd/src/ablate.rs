//! Four-arm ablation of the continuation loss: three arms let exactly one of
//! ψ, the teacher coefficient and the margin coefficient follow its schedule
//! while the other two are pinned; the fourth arm leaves all three dynamic.

use std::path::{Path, PathBuf};

use contkd_core::Method;

use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::metrics::{csv_err, writer};
use crate::run::{config_hash, execute_in, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// ψ dynamic; teacher and margin coefficients pinned.
    A,
    /// Teacher coefficient dynamic; ψ and margin coefficient pinned.
    B,
    /// Margin coefficient dynamic; ψ and teacher coefficient pinned.
    C,
    /// Everything dynamic.
    D,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::A, Arm::B, Arm::C, Arm::D];

    pub fn label(self) -> &'static str {
        match self {
            Arm::A => "A",
            Arm::B => "B",
            Arm::C => "C",
            Arm::D => "D",
        }
    }

    pub fn dynamic_factor(self) -> &'static str {
        match self {
            Arm::A => "psi",
            Arm::B => "phi_teacher",
            Arm::C => "phi_margin",
            Arm::D => "all",
        }
    }

    /// The base config with this arm's freeze flags applied.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        let psi = base.method.ablate_psi;
        let coef = base.method.ablate_coefficient;
        let m = &mut c.method;
        match self {
            Arm::A => {
                m.freeze_phi_teacher = Some(coef);
                m.freeze_phi_margin = Some(coef);
            }
            Arm::B => {
                m.freeze_psi = Some(psi);
                m.freeze_phi_margin = Some(coef);
            }
            Arm::C => {
                m.freeze_psi = Some(psi);
                m.freeze_phi_teacher = Some(coef);
            }
            Arm::D => {}
        }
        c
    }
}

pub struct AblationOutcome {
    pub dir: PathBuf,
    pub arms: Vec<(Arm, RunOutcome)>,
}

pub fn ablation_dir_name(base: &RunConfig) -> String {
    format!("ablate-seed{}-{}", base.method.seed, config_hash(base))
}

/// Runs all four arms under `out_root/<ablation_dir_name>/arm-<X>` and writes
/// `ablation.csv` with one row per arm.
pub fn execute_ablation(base: &RunConfig, out_root: &Path) -> Result<AblationOutcome> {
    base.validate()?;
    if base.method()? != Method::Continuation {
        return Err(AppError::Config(
            "`method.name`: ablation needs a continuation config".into(),
        ));
    }
    let m = &base.method;
    if m.freeze_psi.is_some() || m.freeze_phi_teacher.is_some() || m.freeze_phi_margin.is_some() {
        return Err(AppError::Config(
            "`method.freeze_*`: the ablation base config must not pin any factor".into(),
        ));
    }
    for arm in Arm::ALL {
        arm.apply(base).validate()?;
    }
    let dir = out_root.join(ablation_dir_name(base));
    let mut arms = Vec::new();
    for arm in Arm::ALL {
        let cfg = arm.apply(base);
        let outcome = execute_in(&cfg, &dir.join(format!("arm-{}", arm.label())))?;
        arms.push((arm, outcome));
    }
    let path = dir.join("ablation.csv");
    let mut w = writer(Vec::new());
    w.write_record(["arm", "dynamic", "best_epoch", "best_metric", "run_dir"])
        .map_err(|e| csv_err(&path, e))?;
    for (arm, o) in &arms {
        w.write_record([
            arm.label().to_string(),
            arm.dynamic_factor().to_string(),
            o.record.best_epoch.to_string(),
            o.record.best_metric.map(|v| v.to_string()).unwrap_or_default(),
            format!("arm-{}", arm.label()),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::io(&path, e.into_error()))?;
    std::fs::write(&path, bytes).map_err(|e| AppError::io(&path, e))?;
    Ok(AblationOutcome { dir, arms })
}
