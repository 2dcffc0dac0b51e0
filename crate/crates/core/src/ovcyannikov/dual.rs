//! Adjoint evolution of functionals: `ℓ ↦ W(t,s)*ℓ`, mapping `B_{α'}` into `B_α`.

use serde::Serialize;

use super::engine::{Clock, Scheme};
use super::{admissible, choose_terms, roundoff_floor, series_tail, EvolutionSystem, EvolveOptions, Plan, MAX_TERMS};
use crate::error::{Error, Result};
use crate::evolution::Flow;
use crate::scale_space::{weighted_sup, DualVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualResult {
    /// Functional on `E_α`.
    pub value: DualVector,
    pub plan: Plan,
    /// Series tail in the `B_α` norm.
    pub series_tail: f64,
    pub quad_error: f64,
    pub rho: f64,
    pub horizon: f64,
}

impl DualResult {
    pub fn total_error(&self) -> f64 {
        self.series_tail + self.quad_error
    }
}

/// `W(t,s)*ℓ` as the exact transpose of the discrete forward scheme. With
/// `plan` set, the discretization is fixed and the pairing identity against
/// `forward_evolve_with_plan` holds up to round-off.
#[allow(clippy::too_many_arguments)]
pub fn dual_evolve(
    sys: &EvolutionSystem,
    ell: &DualVector,
    s: f64,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    opts: &EvolveOptions,
    plan: Option<Plan>,
) -> Result<DualResult> {
    opts.validate()?;
    let adm = admissible(sys, s, t, alpha, alpha_prime, opts.rho_max)?;
    let dim = sys.working_dim(sys.full_dim().max(ell.support_len()));
    let mut l = ell.entries().to_vec();
    l.resize(dim, 0.0);
    let kb = sys.horizon.k_bound;
    let ell_norm = weighted_sup(&l, &sys.grading.dual_weights(alpha_prime, dim)?);
    let wd = sys.grading.dual_weights(alpha, dim)?;
    let growth = if adm.horizon.is_infinite() { 1.0 } else { adm.horizon / (adm.horizon - adm.span) };
    let bound = kb * ell_norm * growth;

    if adm.span == 0.0 {
        return Ok(DualResult {
            value: DualVector::new(l)?,
            plan: Plan { panels: 0, n_terms: 0 },
            series_tail: 0.0,
            quad_error: 0.0,
            rho: 0.0,
            horizon: adm.horizon,
        });
    }

    let flow = Flow::new(&sys.propagator, dim);
    let b = &sys.perturbation;
    let clock = Clock::Forward { s };
    let (n_terms, tail, mut m, adaptive) = match plan {
        Some(p) => {
            if p.panels < 4 || p.n_terms > MAX_TERMS {
                return Err(Error::InvalidInput("plan needs panels >= 4 and n_terms <= 200".into()));
            }
            let n = if b.is_zero() { 0 } else { p.n_terms };
            (n, series_tail(ell_norm, kb, adm.rho, n), p.panels, false)
        }
        None if b.is_zero() => (0, 0.0, opts.panels, false),
        None => {
            let (n, tail) = choose_terms(ell_norm, kb, adm.rho, opts.tol, opts.max_terms);
            (n, tail, opts.panels, true)
        }
    };
    let mut value = Scheme::new(&flow, b, clock, adm.span, m).adjoint(&l, n_terms);
    let mut change = 0.0;
    if adaptive {
        change = f64::INFINITY;
        while 2 * m <= opts.max_panels {
            let finer = Scheme::new(&flow, b, clock, adm.span, 2 * m).adjoint(&l, n_terms);
            let diff: Vec<f64> = finer.iter().zip(&value).map(|(a, b)| a - b).collect();
            change = weighted_sup(&diff, &wd);
            m *= 2;
            value = finer;
            if change < opts.tol / 4.0 {
                break;
            }
        }
    }
    Ok(DualResult {
        value: DualVector::new(value)?,
        plan: Plan { panels: m, n_terms },
        series_tail: tail,
        quad_error: change.max(roundoff_floor(bound, n_terms)),
        rho: adm.rho,
        horizon: adm.horizon,
    })
}
