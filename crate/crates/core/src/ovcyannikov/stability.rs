//! Distance between the evolutions of two systems and its a-priori bound.

use serde::Serialize;

use super::{forward_evolve, EvolutionSystem, EvolveOptions};
use crate::error::{Error, Result};
use crate::scale_operator::operator_norm_graded;

/// Simpson panels for the bound integral.
const BOUND_PANELS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `‖W₁(t,s)k - W₂(t,s)k‖_{α'}`.
    pub measured: f64,
    /// `‖k‖_α ∫ ‖W₁(t,r)‖_{α₀→α'} ‖Δ(r)‖_{α₁→α₀} ‖W₂(r,s)‖_{α→α₁} dr`
    /// with the evolution norms replaced by `K T/(T-τ)`.
    pub bound: f64,
    /// Summed error budgets of the two evaluations.
    pub budget: f64,
}

/// Compares two systems on `[s,t]`. `alphas = [α', α₀, α₁, α]` must be
/// strictly increasing; `Δ(r)` is the difference of the full generators
/// `A₁ + B₁(r) - A₂ - B₂(r)`. Both systems are measured with the weights of
/// the first.
pub fn stability_compare(
    sys1: &EvolutionSystem,
    sys2: &EvolutionSystem,
    k: &crate::scale_space::ScaleVector,
    s: f64,
    t: f64,
    alphas: [f64; 4],
    opts: &EvolveOptions,
) -> Result<StabilityReport> {
    let [ap, a0, a1, a] = alphas;
    if !(ap < a0 && a0 < a1 && a1 < a) {
        return Err(Error::InvalidScalePair { alpha_prime: ap, alpha: a });
    }
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let span = t - s;
    let t1 = sys1.existence_time(ap, a0)?;
    let t2 = sys2.existence_time(a1, a)?;
    for horizon in [t1, t2] {
        if span >= horizon {
            return Err(Error::ExistenceHorizonExceeded { span, horizon });
        }
    }
    let r1 = forward_evolve(sys1, k, s, t, a, ap, opts)?;
    let r2 = forward_evolve(sys2, k, s, t, a, ap, opts)?;
    let n = r1.value.support_len().max(r2.value.support_len());
    let diff: Vec<f64> = (0..n).map(|i| r1.value.get(i) - r2.value.get(i)).collect();
    let measured = sys1.grading.norm(&diff, ap)?;
    let budget = r1.total_error() + r2.total_error();

    let g = &sys1.grading;
    let k_norm = g.norm(k.entries(), a)? + k.tail_at(a);
    let da = sys1.propagator.generator().combine(1.0, &sys2.propagator.generator(), -1.0);
    let amp = |kb: f64, horizon: f64, tau: f64| if horizon.is_infinite() { kb } else { kb * horizon / (horizon - tau) };
    let integrand = |r: f64| -> Result<f64> {
        let db = sys1.perturbation.at(r).combine(1.0, &sys2.perturbation.at(r), -1.0);
        let delta = da.add(&db);
        if delta.is_zero() {
            return Ok(0.0);
        }
        let dn = operator_norm_graded(&delta, g, a1, a0)?;
        Ok(amp(sys1.horizon.k_bound, t1, t - r) * dn * amp(sys2.horizon.k_bound, t2, r - s))
    };
    let bound = if span == 0.0 {
        0.0
    } else {
        let h = span / BOUND_PANELS as f64;
        let mut acc = integrand(s)? + integrand(t)?;
        for i in 1..BOUND_PANELS {
            acc += integrand(s + i as f64 * h)? * 2.0;
        }
        for i in 0..BOUND_PANELS {
            acc += integrand(s + (i as f64 + 0.5) * h)? * 4.0;
        }
        k_norm * acc * h / 6.0
    };
    Ok(StabilityReport { measured, bound, budget })
}
