//! The unperturbed evolution `V(t,s)`: diagonal semigroups, truncated matrix
//! semigroups, their `K` certificates and residuals of the defining integral
//! identities.

mod oracle;
mod propagator;

pub use oracle::{integrate, integrate_at, oracle_evolve, oracle_evolve_backward, oracle_propagate, OracleOptions};
pub use propagator::{
    certify_k, weighted_log_norm, DiagonalGenerator, KCertificate, KMethod, PropagatorKind, PropagatorSpec,
};
pub(crate) use propagator::{Flow, Step};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scale_operator::OperatorFamily;
use crate::scale_space::{Grading, ScaleVector};

/// Smallest `n ≥ start` with `reach(n) ≤ n` (prefix closure of `0..start`).
pub(crate) fn closure_dim(start: usize, reach: impl Fn(usize) -> usize) -> usize {
    let mut n = start;
    loop {
        let next = reach(n).max(n);
        if next == n {
            return n;
        }
        n = next;
    }
}

/// `V(t,s)u = e^{-(t-s)d} ⊙ u`.
pub fn diag_propagate(g: &DiagonalGenerator, s: f64, t: f64, u: &ScaleVector) -> Result<ScaleVector> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let tau = t - s;
    let v: Vec<f64> = u
        .entries()
        .iter()
        .enumerate()
        .map(|(n, x)| if tau == 0.0 { *x } else { (-tau * g.rate(n)).exp() * x })
        .collect();
    ScaleVector::with_tail(v, u.tail_alpha(), u.tail_bound())
}

/// `V(t,s)u` for any propagator, on the closure of `u`'s support. The tail of
/// `u` is amplified by at most `K`.
pub fn propagate(spec: &PropagatorSpec, s: f64, t: f64, u: &ScaleVector) -> Result<ScaleVector> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    if let PropagatorKind::Diagonal(g) = &spec.kind {
        return diag_propagate(g, s, t, u);
    }
    let dim = closure_dim(u.support_len(), |n| spec.reach(n));
    let flow = Flow::new(spec, dim);
    let v = flow.step(t - s).apply(&u.padded(dim));
    ScaleVector::with_tail(v, u.tail_alpha(), spec.k_bound() * u.tail_bound())
}

/// Which integral identity [`residual_a3`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `V(t,s)u - u = ∫ A(r) V(r,s) u dr`.
    Forward,
    /// `V(t,s)u - u = ∫ V(t,r) A(r) u dr`.
    Backward,
}

/// `α'`-norm of the defect of the integral identity linking `V` and the
/// generator family `a`, by composite Simpson with `panels` panels.
#[allow(clippy::too_many_arguments)]
pub fn residual_a3(
    spec: &PropagatorSpec,
    a: &OperatorFamily,
    s: f64,
    t: f64,
    u: &ScaleVector,
    direction: Direction,
    alpha: f64,
    alpha_mid: f64,
    alpha_prime: f64,
    panels: usize,
) -> Result<f64> {
    if !(alpha_prime < alpha_mid) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha: alpha_mid });
    }
    if !(alpha_mid < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime: alpha_mid, alpha });
    }
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    if panels == 0 {
        return Err(Error::InvalidInput("Simpson needs at least one panel".into()));
    }
    if t == s {
        return Ok(0.0);
    }
    let dim = closure_dim(u.support_len(), |n| spec.reach(n).max(a.reach(n)));
    let flow = Flow::new(spec, dim);
    let nodes = 2 * panels;
    let hh = (t - s) / nodes as f64;
    let half = flow.step(hh);
    let weight = |j: usize| -> f64 {
        let base = hh / 3.0;
        if j == 0 || j == nodes {
            base
        } else if j % 2 == 1 {
            4.0 * base
        } else {
            2.0 * base
        }
    };
    let u0 = u.padded(dim);
    let mut integral = vec![0.0; dim];
    match direction {
        Direction::Forward => {
            let mut v = u0.clone();
            for j in 0..=nodes {
                if j > 0 {
                    v = match &flow {
                        Flow::Diagonal(_) => flow.step(j as f64 * hh).apply(&u0),
                        Flow::Dense(_) => half.apply(&v),
                    };
                }
                a.apply_add_at(s + j as f64 * hh, weight(j), &v, &mut integral);
            }
        }
        Direction::Backward => {
            for j in 0..=nodes {
                let mut next = half.apply(&integral);
                a.apply_add_at(s + j as f64 * hh, weight(j), &u0, &mut next);
                integral = next;
            }
        }
    }
    let vt = flow.step(t - s).apply(&u0);
    let defect: Vec<f64> = (0..dim).map(|n| vt[n] - u0[n] - integral[n]).collect();
    Grading::Sequence.norm(&defect, alpha_prime)
}
