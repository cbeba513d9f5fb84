//! Finite-difference checks of every training loss through small random
//! tanh networks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check_with, Graph, OpKind, Tensor, Var};
use crate::error::Result;
use crate::losses::{self, LossHyper};
use crate::models::{mlp_spec, Activation, Network};

/// Losses covered by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    Mse,
    VanillaKd,
    Annealing,
    Continuation,
    Composite,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::CrossEntropy,
        LossKind::Mse,
        LossKind::VanillaKd,
        LossKind::Annealing,
        LossKind::Continuation,
        LossKind::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Mse => "mse",
            LossKind::VanillaKd => "vanilla_kd",
            LossKind::Annealing => "annealing",
            LossKind::Continuation => "continuation",
            LossKind::Composite => "composite",
        }
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Minimum distance of every hinge argument from its kink.
const KINK_GAP: f64 = 1e-3;

const IN_DIM: usize = 3;
const HIDDEN: usize = 5;
const OUT_DIM: usize = 4;
const BATCH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub points: usize,
    pub seed: u64,
    pub eps: f64,
    /// Scales the backward rule of one op kind, for fault injection.
    pub corrupt: Option<(OpKind, f64)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            points: 100,
            seed: 0,
            eps: DEFAULT_EPS,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: LossKind,
    pub points: usize,
    pub max_rel_error: f64,
}

impl LossReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

struct Point {
    net: Network,
    x: Tensor,
    labels: Vec<usize>,
    targets: Tensor,
    teacher: Tensor,
    hyper: LossHyper,
    phi: f64,
    psi: f64,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lim: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-lim..lim)).collect();
    Tensor::matrix(rows, cols, data).expect("non-empty")
}

fn draw_point(rng: &mut ChaCha8Rng, out_dim: usize) -> Point {
    let net = Network::init(mlp_spec(IN_DIM, &[HIDDEN], out_dim, Activation::Tanh), rng.random())
        .expect("valid spec");
    Point {
        net,
        x: uniform_matrix(rng, BATCH, IN_DIM, 2.0),
        labels: (0..BATCH).map(|_| rng.random_range(0..out_dim)).collect(),
        targets: uniform_matrix(rng, BATCH, out_dim, 1.5),
        teacher: uniform_matrix(rng, BATCH, out_dim, 2.0),
        hyper: LossHyper {
            lambda: rng.random_range(0.0..=1.0),
            tau: rng.random_range(1.0..4.0),
            margin: rng.random_range(0.0..6.0),
        },
        phi: rng.random_range(0.05..=1.0),
        psi: rng.random_range(0.0..=1.0),
    }
}

/// True when no row of the hinge sits within `KINK_GAP` of its kink.
fn clear_of_kink(p: &Point) -> bool {
    let z = p.net.predict(&p.x).expect("shapes agree");
    let threshold = p.hyper.margin * p.phi;
    (0..BATCH).all(|r| {
        let sq: f64 = z
            .row(r)
            .iter()
            .zip(p.teacher.row(r))
            .map(|(s, t)| (s - p.phi * t) * (s - p.phi * t))
            .sum();
        libm::fabs(sq - threshold) > KINK_GAP
    })
}

fn build(kind: LossKind, p: &Point, g: &mut Graph, params: &[Var]) -> Result<Var> {
    let x = g.constant(p.x.clone());
    let z = p.net.forward_bound(g, params, x)?;
    match kind {
        LossKind::CrossEntropy => losses::cross_entropy(g, z, &p.labels),
        LossKind::Mse => losses::mse_regression(g, z, &p.targets),
        LossKind::VanillaKd => losses::vanilla_kd_loss(g, z, &p.teacher, &p.labels, &p.hyper),
        LossKind::Annealing => losses::annealing_loss(g, z, &p.teacher, p.phi),
        LossKind::Continuation => {
            losses::continuation_kd_loss(g, z, &p.teacher, p.phi, p.hyper.margin)
        }
        LossKind::Composite => {
            let ce = losses::cross_entropy(g, z, &p.labels)?;
            let cnt = losses::continuation_kd_loss(g, z, &p.teacher, p.phi, p.hyper.margin)?;
            losses::composite_loss(g, ce, cnt, p.psi)
        }
    }
}

/// Checks one loss at `opts.points` random points and returns the worst
/// relative error. Points too close to a hinge kink are redrawn.
pub fn check_loss(kind: LossKind, opts: &SuiteOptions) -> Result<LossReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(kind as u64);
    let hinged = matches!(kind, LossKind::Continuation | LossKind::Composite);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < opts.points {
        let p = draw_point(&mut rng, OUT_DIM);
        if hinged && !clear_of_kink(&p) {
            continue;
        }
        let err = grad_check_with(p.net.params(), opts.eps, opts.corrupt, &mut |g, vars| {
            build(kind, &p, g, vars)
        })?;
        worst = worst.max(err);
        done += 1;
    }
    Ok(LossReport {
        loss: kind,
        points: opts.points,
        max_rel_error: worst,
    })
}

pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<LossReport>> {
    LossKind::ALL.iter().map(|&k| check_loss(k, opts)).collect()
}
