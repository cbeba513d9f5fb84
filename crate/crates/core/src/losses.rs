//! Training objectives, all batch-means built on the autodiff graph.
//!
//! Teacher outputs always enter as plain tensors and are inserted as graph
//! constants, so no gradient ever reaches them.

use alloc::vec::Vec;

use crate::autodiff::{Axis, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Loss hyperparameters: `lambda` mixes hard-label and soft-label terms,
/// `tau` softens both softmaxes in the KL term, `margin` is the hinge
/// margin of the continuation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossHyper {
    pub lambda: f64,
    pub tau: f64,
    pub margin: f64,
}

impl Default for LossHyper {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tau: 2.0,
            margin: 0.0,
        }
    }
}

impl LossHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", "must lie in [0, 1]"));
        }
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", "must be finite and at least 1"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin", "must be finite and non-negative"));
        }
        Ok(())
    }
}

fn check_same_shape(g: &Graph, op: &'static str, a: Var, b: &Tensor) -> Result<()> {
    if g.value(a).shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: g.value(a).shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn scaled(t: &Tensor, c: f64) -> Tensor {
    let data: Vec<f64> = t.data().iter().map(|x| x * c).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

/// Mean over the batch of `−log softmax(logits)[label]`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let lse = g.log_sum_exp(logits, Axis::Cols)?;
    let picked = g.gather(logits, labels)?;
    let nll = g.sub(lse, picked)?;
    Ok(g.mean(nll))
}

/// Mean over the batch of the squared error of each prediction row.
pub fn mse_regression(g: &mut Graph, pred: Var, targets: &Tensor) -> Result<Var> {
    check_same_shape(g, "mse_regression", pred, targets)?;
    let t = g.constant(targets.clone());
    let d = g.sub(pred, t)?;
    let per_row = g.sum_sq_rows(d)?;
    Ok(g.mean(per_row))
}

/// `λ·CE(y, σ(z_S)) + (1 − λ)·KL(σ(z_T/τ) ‖ σ(z_S/τ))`, batch-mean.
pub fn vanilla_kd_loss(
    g: &mut Graph,
    z_s: Var,
    z_t: &Tensor,
    labels: &[usize],
    hyper: &LossHyper,
) -> Result<Var> {
    hyper.validate()?;
    check_same_shape(g, "vanilla_kd_loss", z_s, z_t)?;
    let ce = cross_entropy(g, z_s, labels)?;
    let inv_tau = 1.0 / hyper.tau;
    let soft_s = g.scale(z_s, inv_tau);
    let soft_t = scaled(z_t, inv_tau);
    let kl_rows = g.kl_softmax_rows(soft_s, &soft_t)?;
    let kl = g.mean(kl_rows);
    let a = g.scale(ce, hyper.lambda);
    let b = g.scale(kl, 1.0 - hyper.lambda);
    g.add(a, b)
}

/// Regression variant of Vanilla-KD: the KL term is replaced by squared
/// error to the teacher outputs.
pub fn vanilla_kd_regression(
    g: &mut Graph,
    z_s: Var,
    z_t: &Tensor,
    targets: &Tensor,
    lambda: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", "must lie in [0, 1]"));
    }
    let hard = mse_regression(g, z_s, targets)?;
    let soft = mse_regression(g, z_s, z_t)?;
    let a = g.scale(hard, lambda);
    let b = g.scale(soft, 1.0 - lambda);
    g.add(a, b)
}

/// Stage-one annealing loss `‖z_S − φ·z_T‖²`, batch-mean.
pub fn annealing_loss(g: &mut Graph, z_s: Var, z_t: &Tensor, phi: f64) -> Result<Var> {
    check_same_shape(g, "annealing_loss", z_s, z_t)?;
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::invalid("phi", "must lie in [0, 1]"));
    }
    let t = g.constant(z_t.clone());
    let target = g.scale(t, phi);
    let d = g.sub(z_s, target)?;
    let sq = g.sum_sq_rows(d)?;
    Ok(g.mean(sq))
}

/// Per-sample hinge `max{0, ‖z_S − c·z_T‖² − threshold}`, batch-mean.
///
/// With `c = threshold / m = φ` this is the continuation loss; the ablation
/// runs decouple the teacher coefficient `c` from the margin threshold.
pub fn annealed_hinge_loss(
    g: &mut Graph,
    z_s: Var,
    z_t: &Tensor,
    teacher_coef: f64,
    threshold: f64,
) -> Result<Var> {
    check_same_shape(g, "continuation_kd_loss", z_s, z_t)?;
    if !(0.0..=1.0).contains(&teacher_coef) {
        return Err(Error::invalid("phi", "teacher coefficient must lie in [0, 1]"));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("margin", "threshold must be finite and non-negative"));
    }
    let t = g.constant(z_t.clone());
    let target = g.scale(t, teacher_coef);
    let d = g.sub(z_s, target)?;
    let sq = g.sum_sq_rows(d)?;
    let shifted = g.add_scalar(sq, -threshold);
    let hinge = g.relu(shifted);
    Ok(g.mean(hinge))
}

/// `max{0, ‖z_S − φ·z_T‖² − m·φ}` per sample, batch-mean.
pub fn continuation_kd_loss(
    g: &mut Graph,
    z_s: Var,
    z_t: &Tensor,
    phi: f64,
    margin: f64,
) -> Result<Var> {
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::invalid("phi", "must lie in (0, 1]"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid("margin", "must be finite and non-negative"));
    }
    annealed_hinge_loss(g, z_s, z_t, phi, margin * phi)
}

/// `ψ·L_CE + (1 − ψ)·L_CNT`.
pub fn composite_loss(g: &mut Graph, l_ce: Var, l_cnt: Var, psi: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::invalid("psi", "must lie in [0, 1]"));
    }
    let a = g.scale(l_ce, psi);
    let b = g.scale(l_cnt, 1.0 - psi);
    g.add(a, b)
}
