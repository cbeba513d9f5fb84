//! TOML run configuration. Every section rejects unknown keys; every key has
//! a default, listed by `contkd defaults`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use contkd_core::{
    Activation, AnnealingStages, DistillConfig, FreezeFlags, Handoff, LadderSpan, LossHyper, Method,
    OptimizerSettings, PsiSchedule,
};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub method: MethodSection,
    pub schedule: ScheduleSection,
    pub optimizer: OptimizerSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    NoisySine,
    GaussianMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub generator: Generator,
    /// Generator seed; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fraction of generated rows held out for checkpoint selection.
    pub val_fraction: f64,
    // noisy_sine
    pub n_samples: usize,
    pub lo: f64,
    pub hi: f64,
    pub base_freq: f64,
    pub noise_freq: f64,
    pub noise_amp: f64,
    // gaussian_mixture
    pub n_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub spread: f64,
    pub separation: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            generator: Generator::GaussianMixture,
            seed: None,
            val_fraction: 0.1,
            n_samples: 3000,
            lo: -std::f64::consts::PI,
            hi: std::f64::consts::PI,
            base_freq: 1.0,
            noise_freq: 20.0,
            noise_amp: 0.3,
            n_classes: 10,
            dim: 16,
            n_per_class: 500,
            spread: 1.0,
            separation: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Relu,
    Tanh,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    /// `table` for noisy_sine data, `train` otherwise.
    Auto,
    /// Trained from scratch inside the run.
    Train,
    /// Loaded from `teacher_checkpoint`.
    Checkpoint,
    /// The training targets themselves, looked up by input.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub activation: ActivationName,
    pub student_hidden: Vec<usize>,
    pub teacher: TeacherKind,
    pub teacher_hidden: Vec<usize>,
    /// Epochs for an in-run teacher; the schedule's epochs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_epochs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_checkpoint: Option<PathBuf>,
    /// Teacher-assistant hidden widths; required by `takd`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ta_hidden: Option<Vec<usize>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            activation: ActivationName::Relu,
            student_hidden: vec![16],
            teacher: TeacherKind::Auto,
            teacher_hidden: vec![256],
            teacher_epochs: None,
            teacher_checkpoint: None,
            ta_hidden: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffName {
    BestCheckpoint,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderName {
    StageOne,
    WholeRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    /// scratch | vanilla | takd | annealing | continuation
    pub name: String,
    pub seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_psi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_phi_teacher: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_phi_margin: Option<f64>,
    /// Annealing stage-1 length; half the epochs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage1_epochs: Option<u32>,
    pub handoff: HandoffName,
    pub ladder: LadderName,
    /// ψ used by the ablation arms that freeze it.
    pub ablate_psi: f64,
    /// Teacher and margin coefficient used by the ablation arms that freeze them.
    pub ablate_coefficient: f64,
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            name: "continuation".into(),
            seed: 0,
            lambda: 0.5,
            tau: 2.0,
            margin: 1.0,
            freeze_psi: None,
            freeze_phi_teacher: None,
            freeze_phi_margin: None,
            stage1_epochs: None,
            handoff: HandoffName::BestCheckpoint,
            ladder: LadderName::StageOne,
            ablate_psi: 0.5,
            ablate_coefficient: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    CappedRamp,
    Step,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub epochs: u32,
    pub t_max: u32,
    pub psi: PsiKind,
    /// capped_ramp: ψ = min(i / psi_denominator, 1) up to psi_cutover, then 1.
    pub psi_denominator: f64,
    pub psi_cutover: u32,
    /// step: ψ = 0 up to psi_switch_after, then 1.
    pub psi_switch_after: u32,
    /// constant: ψ = psi_value.
    pub psi_value: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            epochs: 30,
            t_max: 10,
            psi: PsiKind::CappedRamp,
            psi_denominator: 40.0,
            psi_cutover: 20,
            psi_switch_after: 15,
            psi_value: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output root, overridden by `CONTKD_OUT` and then by `--out`.
    pub dir: PathBuf,
    /// Grid points for the noisy-sine smoothness report.
    pub grid_size: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            grid_size: 1024,
        }
    }
}

fn config_err(key: &str, reason: impl std::fmt::Display) -> AppError {
    AppError::Config(format!("`{key}`: {reason}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            AppError::Config(msg) => AppError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML; parsing it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn method(&self) -> Result<Method> {
        Method::from_name(&self.method.name).ok_or_else(|| {
            config_err(
                "method.name",
                format!(
                    "unknown method `{}`, expected one of scratch, vanilla, takd, annealing, continuation",
                    self.method.name
                ),
            )
        })
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.method.seed)
    }

    pub fn teacher_kind(&self) -> TeacherKind {
        match (self.model.teacher, self.data.generator) {
            (TeacherKind::Auto, Generator::NoisySine) => TeacherKind::Table,
            (TeacherKind::Auto, Generator::GaussianMixture) => TeacherKind::Train,
            (k, _) => k,
        }
    }

    pub fn psi_schedule(&self) -> PsiSchedule {
        let s = &self.schedule;
        match s.psi {
            PsiKind::CappedRamp => PsiSchedule::CappedRamp {
                denominator: s.psi_denominator,
                cutover: s.psi_cutover,
            },
            PsiKind::Step => PsiSchedule::Step {
                switch_after: s.psi_switch_after,
            },
            PsiKind::Constant => PsiSchedule::Constant(s.psi_value),
        }
    }

    pub fn distill_config(&self) -> Result<DistillConfig> {
        let method = self.method()?;
        let m = &self.method;
        let epochs = self.schedule.epochs;
        let annealing = (method == Method::Annealing).then(|| {
            let k = m.stage1_epochs.unwrap_or(epochs / 2).min(epochs);
            AnnealingStages {
                stage1_epochs: k,
                stage2_epochs: epochs - k,
                handoff: match m.handoff {
                    HandoffName::BestCheckpoint => Handoff::BestCheckpoint,
                    HandoffName::Continue => Handoff::Continue,
                },
                ladder: match m.ladder {
                    LadderName::StageOne => LadderSpan::StageOne,
                    LadderName::WholeRun => LadderSpan::WholeRun,
                },
            }
        });
        Ok(DistillConfig {
            method,
            epochs,
            batch_size: self.optimizer.batch_size,
            t_max: self.schedule.t_max,
            psi: self.psi_schedule(),
            hyper: LossHyper {
                lambda: m.lambda,
                tau: m.tau,
                margin: m.margin,
            },
            optimizer: OptimizerSettings {
                learning_rate: self.optimizer.learning_rate,
                momentum: self.optimizer.momentum,
            },
            seed: m.seed,
            freeze: FreezeFlags {
                psi: m.freeze_psi,
                phi_teacher: m.freeze_phi_teacher,
                phi_margin: m.freeze_phi_margin,
            },
            annealing,
        })
    }

    /// Checks every field and cross-field constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let method = self.method()?;
        let d = &self.data;
        if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return Err(config_err("data.val_fraction", "must lie in (0, 1)"));
        }
        match d.generator {
            Generator::NoisySine => {
                if d.n_samples < 2 {
                    return Err(config_err("data.n_samples", "must be at least 2"));
                }
                if !(d.hi > d.lo) {
                    return Err(config_err("data.hi", "must exceed data.lo"));
                }
                if !(d.noise_freq > d.base_freq) {
                    return Err(config_err("data.noise_freq", "must exceed data.base_freq"));
                }
            }
            Generator::GaussianMixture => {
                if d.n_classes < 2 {
                    return Err(config_err("data.n_classes", "must be at least 2"));
                }
                if d.dim == 0 || d.n_per_class == 0 {
                    return Err(config_err("data.dim", "dim and n_per_class must be positive"));
                }
                if !(d.spread > 0.0) || !(d.separation > 0.0) {
                    return Err(config_err("data.spread", "spread and separation must be positive"));
                }
            }
        }
        let md = &self.model;
        for (key, widths) in [
            ("model.student_hidden", Some(&md.student_hidden)),
            ("model.teacher_hidden", Some(&md.teacher_hidden)),
            ("model.ta_hidden", md.ta_hidden.as_ref()),
        ] {
            if widths.is_some_and(|w| w.contains(&0)) {
                return Err(config_err(key, "hidden widths must be positive"));
            }
        }
        let teacher = self.teacher_kind();
        if teacher == TeacherKind::Checkpoint && md.teacher_checkpoint.is_none() {
            return Err(config_err(
                "model.teacher_checkpoint",
                "required when model.teacher = \"checkpoint\"",
            ));
        }
        if teacher == TeacherKind::Table && d.generator != Generator::NoisySine {
            return Err(config_err("model.teacher", "\"table\" needs regression data"));
        }
        if method == Method::Takd && md.ta_hidden.is_none() {
            return Err(config_err("model.ta_hidden", "required by method takd"));
        }
        if let Some(k) = self.method.stage1_epochs {
            if k > self.schedule.epochs {
                return Err(config_err("method.stage1_epochs", "exceeds schedule.epochs"));
            }
        }
        if self.optimizer.batch_size == 0 {
            return Err(config_err("optimizer.batch_size", "must be at least 1"));
        }
        if self.output.grid_size < 2 {
            return Err(config_err("output.grid_size", "must be at least 2"));
        }
        self.distill_config()?
            .validate()
            .map_err(|e| match e {
                contkd_core::Error::Config(msg) => AppError::Config(msg),
                contkd_core::Error::InvalidArgument { name, reason } => {
                    config_err(core_key(name), reason)
                }
                other => AppError::Config(other.to_string()),
            })
    }
}

/// Config key for a core argument name.
fn core_key(name: &str) -> &str {
    match name {
        "lambda" => "method.lambda",
        "tau" => "method.tau",
        "margin" => "method.margin",
        "learning_rate" => "optimizer.learning_rate",
        "momentum" => "optimizer.momentum",
        "freeze_psi" => "method.freeze_psi",
        "freeze_phi_teacher" => "method.freeze_phi_teacher",
        "freeze_phi_margin" => "method.freeze_phi_margin",
        "denominator" => "schedule.psi_denominator",
        "cutover" => "schedule.psi_cutover",
        "psi" => "schedule.psi_value",
        other => other,
    }
}

/// Annotated listing of every key and its default value.
pub fn defaults_reference() -> String {
    let mut out = String::from(
        "# contkd run configuration: every key with its default.\n\
         # Keys shown commented out have no default and are unset unless given.\n\n",
    );
    let body = RunConfig::default().to_toml();
    for line in body.lines() {
        out.push_str(line);
        out.push('\n');
        let extra: &[&str] = match line {
            "[data]" => &["# seed = 0                 # generator seed; the run seed when unset"],
            "[model]" => &[
                "# teacher_epochs = 30       # in-run teacher epochs; schedule.epochs when unset",
                "# teacher_checkpoint = \"teacher.ckpt\"   # with teacher = \"checkpoint\"",
                "# ta_hidden = [64]          # teacher assistant, required by takd",
            ],
            "[method]" => &[
                "# freeze_psi = 0.5          # pin ψ to a constant",
                "# freeze_phi_teacher = 1.0  # pin the teacher coefficient",
                "# freeze_phi_margin = 1.0   # pin the margin coefficient",
                "# stage1_epochs = 15        # annealing stage 1; half the epochs when unset",
            ],
            _ => &[],
        };
        for e in extra {
            out.push_str(e);
            out.push('\n');
        }
    }
    out
}
