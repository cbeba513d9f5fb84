//! Continuation knowledge distillation.
//!
//! A small reverse-mode autodiff engine over dense `f64` tensors, the dense
//! networks used as teachers, assistants and students, the temperature and
//! mixing schedules, every distillation objective, and the training engines
//! built on top of them (scratch, Vanilla-KD, TAKD, Annealing-KD and
//! Continuation-KD).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `contkd` crate.

#![no_std]
// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
pub mod distill;
pub mod gradcheck;
mod error;
pub mod losses;
pub mod models;
pub mod schedules;

pub use autodiff::{grad_check, Axis, Graph, OpKind, Tensor, Var};
pub use data::{Dataset, DatasetMeta, Targets, TaskKind};
pub use distill::{
    evaluate, AnnealingStages, DataSplits, DistillConfig, EpochRow, FreezeFlags, Handoff, LadderSpan, Method,
    OptimizerSettings, OptimizerState, RunRecord, TakdRecord,
};
pub use error::{Error, Result};
pub use losses::LossHyper;
pub use models::{Activation, LayerSpec, Network, TeacherSource, TeacherTable};
pub use schedules::{PsiSchedule, PsiSpec, TemperatureLadder};
