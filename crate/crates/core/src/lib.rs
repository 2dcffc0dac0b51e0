//! Perturbative evolution systems in scales of weighted sequence spaces.
//!
//! The crate builds solutions of `du/dt = (A(t) + B(t)) u` where `A`
//! generates a well-behaved evolution `V` and `B` loses a controlled amount of
//! weight, `‖B‖_{αα'} ≤ M(α)/(α-α')`. Solutions are produced as the series
//! `Σ W_n` on a certified existence horizon with an explicit error budget.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evolution;
pub mod logistic;
pub mod ode_system;
pub mod ovcyannikov;
pub mod samples;
pub mod scale_operator;
pub mod scale_space;

pub use error::{Error, Result};
pub use scale_operator::{
    apply, fit_majorant, fit_majorant_graded, operator_norm, operator_norm_graded, MajorantM, OperatorFamily,
    OperatorMatrix,
};
pub use scale_space::{dual_norm, dual_pairing, norm_alpha, truncate, DualVector, Grading, ScaleVector};
