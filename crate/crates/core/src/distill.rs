//! Training engines: scratch, Vanilla-KD, TAKD, two-stage Annealing-KD and
//! Continuation-KD, all sharing one mini-batch loop and best-checkpoint
//! bookkeeping.
//!
//! Every run is a pure function of its inputs: mini-batch order for epoch `i`
//! comes from a ChaCha stream keyed by `(seed, i)`, so two methods run with
//! the same seed see the same batches in the same order.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::losses::{self, LossHyper};
use crate::models::{Network, TeacherSource};
use crate::schedules::{phi_of_temperature, PsiSchedule, PsiSpec, TemperatureLadder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Scratch,
    Vanilla,
    Takd,
    Annealing,
    Continuation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Scratch,
        Method::Vanilla,
        Method::Takd,
        Method::Annealing,
        Method::Continuation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scratch => "scratch",
            Method::Vanilla => "vanilla",
            Method::Takd => "takd",
            Method::Annealing => "annealing",
            Method::Continuation => "continuation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub settings: OptimizerSettings,
    velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(settings: OptimizerSettings, params: &[Tensor]) -> Self {
        Self {
            settings,
            velocity: params.iter().map(|p| alloc::vec![0.0; p.len()]).collect(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update from the gradients stored in `params`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.velocity.len()
            || params.iter().zip(&self.velocity).any(|(p, v)| p.len() != v.len())
        {
            return Err(Error::invalid("params", "shapes differ from optimizer state"));
        }
        if params.iter().any(|p| p.grad().iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFiniteGradient);
        }
        let OptimizerSettings {
            learning_rate,
            momentum,
        } = self.settings;
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let grads = p.grad().to_vec();
            for ((w, vel), g) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(grads) {
                *vel = momentum * *vel + g;
                *w -= learning_rate * *vel;
            }
        }
        Ok(())
    }
}

/// Constant overrides for the three dynamic factors of the continuation
/// loss. `None` keeps the factor dynamic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreezeFlags {
    pub psi: Option<f64>,
    pub phi_teacher: Option<f64>,
    pub phi_margin: Option<f64>,
}

impl FreezeFlags {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("freeze_psi", self.psi),
            ("freeze_phi_teacher", self.phi_teacher),
            ("freeze_phi_margin", self.phi_margin),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(name, "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// How Annealing-KD moves from stage 1 to stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Handoff {
    /// Reload the stage-1 best checkpoint, restart the optimizer, and pick
    /// the final checkpoint from stage-2 epochs only.
    #[default]
    BestCheckpoint,
    /// Keep training the live weights and optimizer state; the final
    /// checkpoint is the best over the whole run. This is the single-pass
    /// form that the continuation loop reduces to under a step ψ.
    Continue,
}

/// Epochs the Annealing-KD temperature ladder is spread over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LadderSpan {
    /// φ climbs from 1/T_max to 1 within stage 1.
    #[default]
    StageOne,
    /// φ follows the ladder of the whole run, as Continuation-KD does.
    WholeRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealingStages {
    pub stage1_epochs: u32,
    pub stage2_epochs: u32,
    pub handoff: Handoff,
    pub ladder: LadderSpan,
}

impl AnnealingStages {
    pub fn new(stage1_epochs: u32, stage2_epochs: u32) -> Self {
        Self {
            stage1_epochs,
            stage2_epochs,
            handoff: Handoff::default(),
            ladder: LadderSpan::default(),
        }
    }

    /// The single-pass form: one ladder over the whole run, live weights and
    /// optimizer carried into stage 2.
    pub fn single_pass(stage1_epochs: u32, stage2_epochs: u32) -> Self {
        Self {
            stage1_epochs,
            stage2_epochs,
            handoff: Handoff::Continue,
            ladder: LadderSpan::WholeRun,
        }
    }

    fn ladder_epochs(&self) -> u32 {
        match self.ladder {
            LadderSpan::StageOne => self.stage1_epochs,
            LadderSpan::WholeRun => self.stage1_epochs + self.stage2_epochs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub method: Method,
    pub epochs: u32,
    pub batch_size: usize,
    pub t_max: u32,
    pub psi: PsiSchedule,
    pub hyper: LossHyper,
    pub optimizer: OptimizerSettings,
    pub seed: u64,
    pub freeze: FreezeFlags,
    pub annealing: Option<AnnealingStages>,
}

impl DistillConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            epochs: 30,
            batch_size: 32,
            t_max: 10,
            psi: PsiSchedule::CappedRamp {
                denominator: 40.0,
                cutover: 20,
            },
            hyper: LossHyper::default(),
            optimizer: OptimizerSettings::default(),
            seed: 0,
            freeze: FreezeFlags::default(),
            annealing: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.hyper.validate()?;
        self.optimizer.validate()?;
        self.freeze.validate()?;
        match self.method {
            Method::Continuation => {
                self.psi.validate()?;
                if self.t_max == 0 || self.epochs < self.t_max {
                    return Err(Error::Config(format!(
                        "continuation needs epochs ({}) >= t_max ({}) >= 1",
                        self.epochs, self.t_max
                    )));
                }
            }
            Method::Annealing => {
                let stages = self.annealing.ok_or_else(|| {
                    Error::Config("annealing needs stage1_epochs and stage2_epochs".into())
                })?;
                if stages.stage1_epochs + stages.stage2_epochs != self.epochs {
                    return Err(Error::Config(format!(
                        "annealing stages {} + {} must sum to epochs {}",
                        stages.stage1_epochs, stages.stage2_epochs, self.epochs
                    )));
                }
                let span = stages.ladder_epochs();
                if stages.stage1_epochs > 0 && (self.t_max == 0 || span < self.t_max) {
                    return Err(Error::Config(format!(
                        "annealing ladder spans {span} epochs, needs >= t_max ({}) >= 1",
                        self.t_max
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn expect_method(&self, method: Method) -> Result<()> {
        if self.method != method {
            return Err(Error::Config(format!(
                "config selects method `{}`, not `{}`",
                self.method.name(),
                method.name()
            )));
        }
        self.validate()
    }
}

/// Training rows plus a held-out validation split used for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: u32,
    pub temperature: Option<u32>,
    /// Coefficient applied to the teacher outputs.
    pub phi: Option<f64>,
    /// Coefficient applied to the hinge margin.
    pub phi_margin: Option<f64>,
    pub psi: Option<f64>,
    pub train_loss: f64,
    pub val_metric: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub rows: Vec<EpochRow>,
    /// Highest-validation checkpoint; the initial network when no epoch ran.
    pub best_checkpoint: Network,
    pub final_network: Network,
    /// 0 when no epoch ran.
    pub best_epoch: u32,
    pub best_metric: Option<f64>,
    /// Annealing-KD only: the best stage-1 epoch and its checkpoint.
    pub stage1_best_epoch: Option<u32>,
    pub stage1_checkpoint: Option<Network>,
}

impl RunRecord {
    pub fn train_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.train_loss).collect()
    }

    pub fn val_metrics(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.val_metric).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TakdRecord {
    /// Teacher → assistant hop.
    pub assistant: RunRecord,
    /// Assistant → student hop.
    pub student: RunRecord,
}

/// Fraction of rows whose argmax (first index on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, &label)| {
            let row = logits.row(*r);
            let arg = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            arg == label
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Validation metric where higher is better: accuracy for classification,
/// negative mean squared error for regression.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySplit);
    }
    let out = net.predict(data.inputs())?;
    match data.targets() {
        Targets::Classes { labels, .. } => Ok(accuracy(&out, labels)),
        Targets::Values(t) => {
            if out.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "evaluate",
                    left: out.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            let c = t.cols();
            let sse: f64 = out
                .data()
                .chunks(c)
                .zip(t.data().chunks(c))
                .map(|(p, y)| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            let mse = sse / data.len() as f64;
            if mse.is_finite() {
                Ok(-mse)
            } else {
                Err(Error::NonFiniteLoss(mse))
            }
        }
    }
}

enum BatchTargets {
    Labels(Vec<usize>),
    Values(Tensor),
}

struct Batch {
    targets: BatchTargets,
    teacher: Option<Tensor>,
}

impl Batch {
    fn teacher(&self) -> &Tensor {
        self.teacher.as_ref().expect("teacher outputs are precomputed for KD runs")
    }
}

fn hard_loss(g: &mut Graph, z: Var, b: &Batch) -> Result<Var> {
    match &b.targets {
        BatchTargets::Labels(l) => losses::cross_entropy(g, z, l),
        BatchTargets::Values(t) => losses::mse_regression(g, z, t),
    }
}

/// Permutation of `0..n` for one epoch.
pub fn epoch_order(seed: u64, epoch: u32, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(epoch));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

struct Engine<'a> {
    data: &'a DataSplits,
    batch_size: usize,
    seed: u64,
    teacher: Option<Tensor>,
}

type BatchLoss<'f> = dyn FnMut(&mut Graph, Var, &Batch) -> Result<Var> + 'f;

impl<'a> Engine<'a> {
    fn new(
        data: &'a DataSplits,
        cfg: &DistillConfig,
        student: &Network,
        teacher: Option<&TeacherSource>,
    ) -> Result<Self> {
        if data.train.is_empty() || data.val.is_empty() {
            return Err(Error::EmptySplit);
        }
        if student.in_dim() != data.train.dim() || student.out_dim() != data.train.output_dim() {
            return Err(Error::Config(format!(
                "student maps {} -> {} but data needs {} -> {}",
                student.in_dim(),
                student.out_dim(),
                data.train.dim(),
                data.train.output_dim()
            )));
        }
        let teacher = match teacher {
            Some(src) => {
                let out = src.teacher_logits(data.train.inputs())?;
                if out.cols() != student.out_dim() {
                    return Err(Error::Config(format!(
                        "teacher produces {} outputs, student {}",
                        out.cols(),
                        student.out_dim()
                    )));
                }
                Some(out)
            }
            None => None,
        };
        Ok(Self {
            data,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            teacher,
        })
    }

    fn batch(&self, rows: &[usize]) -> Result<(Tensor, Batch)> {
        let train = &self.data.train;
        let inputs = train.inputs().select_rows(rows)?;
        let targets = match train.targets() {
            Targets::Classes { labels, .. } => {
                BatchTargets::Labels(rows.iter().map(|&r| labels[r]).collect())
            }
            Targets::Values(t) => BatchTargets::Values(t.select_rows(rows)?),
        };
        let teacher = match &self.teacher {
            Some(t) => Some(t.select_rows(rows)?),
            None => None,
        };
        Ok((inputs, Batch { targets, teacher }))
    }

    /// One pass over every training row; returns the mean batch loss.
    fn run_epoch(
        &self,
        net: &mut Network,
        opt: &mut OptimizerState,
        epoch: u32,
        loss_fn: &mut BatchLoss<'_>,
    ) -> Result<f64> {
        let order = epoch_order(self.seed, epoch, self.data.train.len());
        let mut total = 0.0;
        let mut batches = 0usize;
        for rows in order.chunks(self.batch_size) {
            let (inputs, batch) = self.batch(rows)?;
            let mut g = Graph::new();
            let bound = net.bind(&mut g);
            let x = g.constant(inputs);
            let z = net.forward_bound(&mut g, &bound, x)?;
            let loss = loss_fn(&mut g, z, &batch)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(value));
            }
            g.backward(loss)?;
            net.zero_grads();
            net.accumulate_grads(&g, &bound);
            opt.step(net.params_mut())?;
            total += value;
            batches += 1;
        }
        Ok(total / batches as f64)
    }
}

struct Best {
    metric: f64,
    epoch: u32,
    net: Network,
}

#[derive(Default)]
struct BestTracker(Option<Best>);

impl BestTracker {
    /// Records the checkpoint if `metric` strictly improves on the best so far.
    fn observe(&mut self, metric: f64, epoch: u32, net: &Network) -> bool {
        let improves = self.0.as_ref().is_none_or(|b| metric > b.metric);
        if improves {
            self.0 = Some(Best {
                metric,
                epoch,
                net: net.clone(),
            });
        }
        improves
    }
}

fn finish(
    method: Method,
    rows: Vec<EpochRow>,
    best: BestTracker,
    initial: Network,
    last: Network,
    stage1: Option<(u32, Network)>,
) -> RunRecord {
    let (best_checkpoint, best_epoch, best_metric) = match best.0 {
        Some(b) => (b.net, b.epoch, Some(b.metric)),
        None => (initial, 0, None),
    };
    RunRecord {
        method,
        rows,
        best_checkpoint,
        final_network: last,
        best_epoch,
        best_metric,
        stage1_best_epoch: stage1.as_ref().map(|s| s.0),
        stage1_checkpoint: stage1.map(|s| s.1),
    }
}

/// Per-epoch schedule columns plus the loss for that epoch.
struct EpochPlan<'f> {
    temperature: Option<u32>,
    phi: Option<f64>,
    phi_margin: Option<f64>,
    psi: Option<f64>,
    loss: Box<BatchLoss<'f>>,
}

/// Shared epoch loop: train, validate, track the best checkpoint.
fn run_epochs<'f>(
    engine: &Engine<'_>,
    student: &mut Network,
    opt: &mut OptimizerState,
    best: &mut BestTracker,
    rows: &mut Vec<EpochRow>,
    epochs: core::ops::RangeInclusive<u32>,
    mut plan: impl FnMut(u32) -> Result<EpochPlan<'f>>,
) -> Result<()> {
    for epoch in epochs {
        let mut p = plan(epoch)?;
        let train_loss = engine
            .run_epoch(student, opt, epoch, p.loss.as_mut())
            .map_err(|e| e.at_epoch(epoch))?;
        let val_metric = evaluate(student, &engine.data.val).map_err(|e| e.at_epoch(epoch))?;
        let is_best = best.observe(val_metric, epoch, student);
        rows.push(EpochRow {
            epoch,
            temperature: p.temperature,
            phi: p.phi,
            phi_margin: p.phi_margin,
            psi: p.psi,
            train_loss,
            val_metric,
            is_best,
        });
    }
    Ok(())
}

/// Hard-label training only.
pub fn train_scratch(student: Network, data: &DataSplits, cfg: &DistillConfig) -> Result<RunRecord> {
    cfg.expect_method(Method::Scratch)?;
    let engine = Engine::new(data, cfg, &student, None)?;
    let initial = student.clone();
    let mut student = student;
    let mut opt = OptimizerState::new(cfg.optimizer, student.params());
    let mut best = BestTracker::default();
    let mut rows = Vec::new();
    run_epochs(&engine, &mut student, &mut opt, &mut best, &mut rows, 1..=cfg.epochs, |_| {
        Ok(EpochPlan {
            temperature: None,
            phi: None,
            phi_margin: None,
            psi: None,
            loss: Box::new(hard_loss),
        })
    })?;
    Ok(finish(Method::Scratch, rows, best, initial, student, None))
}

fn vanilla_inner(
    student: Network,
    teacher: &TeacherSource,
    data: &DataSplits,
    cfg: &DistillConfig,
    method: Method,
) -> Result<RunRecord> {
    let engine = Engine::new(data, cfg, &student, Some(teacher))?;
    let initial = student.clone();
    let mut student = student;
    let mut opt = OptimizerState::new(cfg.optimizer, student.params());
    let mut best = BestTracker::default();
    let mut rows = Vec::new();
    let hyper = cfg.hyper;
    run_epochs(&engine, &mut student, &mut opt, &mut best, &mut rows, 1..=cfg.epochs, |_| {
        Ok(EpochPlan {
            temperature: None,
            phi: None,
            phi_margin: None,
            psi: None,
            loss: Box::new(move |g: &mut Graph, z: Var, b: &Batch| match &b.targets {
                BatchTargets::Labels(l) => losses::vanilla_kd_loss(g, z, b.teacher(), l, &hyper),
                BatchTargets::Values(t) => {
                    losses::vanilla_kd_regression(g, z, b.teacher(), t, hyper.lambda)
                }
            }),
        })
    })?;
    Ok(finish(method, rows, best, initial, student, None))
}

/// Hard labels mixed with the temperature-softened KL to the teacher. On
/// regression data the KL term becomes squared error to the teacher.
pub fn train_vanilla(
    student: Network,
    teacher: &TeacherSource,
    data: &DataSplits,
    cfg: &DistillConfig,
) -> Result<RunRecord> {
    cfg.expect_method(Method::Vanilla)?;
    vanilla_inner(student, teacher, data, cfg, Method::Vanilla)
}

/// Two Vanilla-KD hops: teacher → assistant, then the assistant's best
/// checkpoint → student.
pub fn train_takd(
    teacher: &TeacherSource,
    assistant: Network,
    student: Network,
    data: &DataSplits,
    cfg: &DistillConfig,
) -> Result<TakdRecord> {
    cfg.expect_method(Method::Takd)?;
    if let TeacherSource::Network(t) = teacher {
        if t.param_count() <= assistant.param_count() {
            return Err(Error::Config(format!(
                "teacher ({} params) must be larger than the assistant ({})",
                t.param_count(),
                assistant.param_count()
            )));
        }
    }
    if assistant.param_count() <= student.param_count() {
        return Err(Error::Config(format!(
            "assistant ({} params) must be larger than the student ({})",
            assistant.param_count(),
            student.param_count()
        )));
    }
    let hop1 = vanilla_inner(assistant, teacher, data, cfg, Method::Takd)?;
    let relay = TeacherSource::Network(hop1.best_checkpoint.clone());
    let hop2 = vanilla_inner(student, &relay, data, cfg, Method::Takd)?;
    Ok(TakdRecord {
        assistant: hop1,
        student: hop2,
    })
}

/// Annealing-KD: stage 1 regresses the student logits onto `φ·z_T` with φ
/// read off the temperature ladder; stage 2 fine-tunes on hard labels.
pub fn train_annealing(
    student: Network,
    teacher: &TeacherSource,
    data: &DataSplits,
    cfg: &DistillConfig,
) -> Result<RunRecord> {
    cfg.expect_method(Method::Annealing)?;
    let stages = cfg.annealing.expect("validated");
    let k = stages.stage1_epochs;
    let ladder = if k > 0 {
        Some(TemperatureLadder::new(cfg.t_max, stages.ladder_epochs())?)
    } else {
        None
    };
    let engine = Engine::new(data, cfg, &student, Some(teacher))?;
    let initial = student.clone();
    let mut student = student;
    let mut opt = OptimizerState::new(cfg.optimizer, student.params());
    let mut best = BestTracker::default();
    let mut rows = Vec::new();

    let columns = |epoch: u32| -> Result<(Option<u32>, Option<f64>)> {
        match &ladder {
            Some(l) if epoch <= l.epochs() => {
                let t = l.temperature_at_epoch(epoch)?;
                Ok((Some(t), Some(phi_of_temperature(t, l.t_max())?)))
            }
            _ => Ok((None, None)),
        }
    };

    run_epochs(&engine, &mut student, &mut opt, &mut best, &mut rows, 1..=k, |epoch| {
        let (temperature, phi) = columns(epoch)?;
        let phi_v = phi.expect("ladder exists in stage 1");
        Ok(EpochPlan {
            temperature,
            phi,
            phi_margin: None,
            psi: Some(0.0),
            loss: Box::new(move |g: &mut Graph, z: Var, b: &Batch| {
                losses::annealing_loss(g, z, b.teacher(), phi_v)
            }),
        })
    })?;

    let stage1 = best.0.as_ref().map(|b| (b.epoch, b.net.clone()));
    // With no stage 2 the stage-1 best stands as the final choice.
    if stages.handoff == Handoff::BestCheckpoint && stages.stage2_epochs > 0 {
        if let Some(b) = best.0.take() {
            student = b.net;
        }
        opt = OptimizerState::new(cfg.optimizer, student.params());
    }

    run_epochs(
        &engine,
        &mut student,
        &mut opt,
        &mut best,
        &mut rows,
        (k + 1)..=cfg.epochs,
        |epoch| {
            let (temperature, phi) = columns(epoch)?;
            Ok(EpochPlan {
                temperature,
                phi,
                phi_margin: None,
                psi: Some(1.0),
                loss: Box::new(hard_loss),
            })
        },
    )?;
    Ok(finish(
        Method::Annealing,
        rows,
        best,
        initial,
        student,
        stage1,
    ))
}

/// Continuation-KD: every epoch mixes the hard-label loss with the annealed
/// hinge loss, `ψ·L_CE + (1 − ψ)·max{0, ‖z_S − φ·z_T‖² − m·φ}`, with φ from
/// the temperature ladder and ψ from the configured schedule. Freeze flags
/// pin any of the three factors to a constant.
pub fn train_continuation(
    student: Network,
    teacher: &TeacherSource,
    data: &DataSplits,
    cfg: &DistillConfig,
) -> Result<RunRecord> {
    cfg.expect_method(Method::Continuation)?;
    let ladder = TemperatureLadder::new(cfg.t_max, cfg.epochs)?;
    let psi_spec = PsiSpec::new(cfg.psi, cfg.epochs)?;
    let engine = Engine::new(data, cfg, &student, Some(teacher))?;
    let initial = student.clone();
    let mut student = student;
    let mut opt = OptimizerState::new(cfg.optimizer, student.params());
    let mut best = BestTracker::default();
    let mut rows = Vec::new();
    let margin = cfg.hyper.margin;
    let freeze = cfg.freeze;

    run_epochs(&engine, &mut student, &mut opt, &mut best, &mut rows, 1..=cfg.epochs, |epoch| {
        let temperature = ladder.temperature_at_epoch(epoch)?;
        let phi = phi_of_temperature(temperature, cfg.t_max)?;
        let teacher_coef = freeze.phi_teacher.unwrap_or(phi);
        let margin_coef = freeze.phi_margin.unwrap_or(phi);
        let psi = freeze.psi.unwrap_or(psi_spec.psi(epoch)?);
        let threshold = margin * margin_coef;
        Ok(EpochPlan {
            temperature: Some(temperature),
            phi: Some(teacher_coef),
            phi_margin: Some(margin_coef),
            psi: Some(psi),
            loss: Box::new(move |g: &mut Graph, z: Var, b: &Batch| {
                let ce = hard_loss(g, z, b)?;
                let cnt = losses::annealed_hinge_loss(g, z, b.teacher(), teacher_coef, threshold)?;
                losses::composite_loss(g, ce, cnt, psi)
            }),
        })
    })?;
    Ok(finish(Method::Continuation, rows, best, initial, student, None))
}
