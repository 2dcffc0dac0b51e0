//! Hierarchy evolution through the perturbation series, with
//! `V = e^{t(L̂₀ - b|η|)}` and `B = L̂₁ + b|η|` on orbit coordinates.

use serde::Serialize;

use super::hierarchy::{Hierarchy, HierarchyKind};
use super::operators::{apply_operator, build_discrete_operators, DiscreteOperators, OperatorKind};
use super::LogisticParams;
use crate::error::{Error, Result};
use crate::evolution::{KCertificate, PropagatorSpec};
use crate::ovcyannikov::{dual_evolve, forward_evolve, EvolutionSystem, EvolveOptions, Plan};
use crate::scale_operator::{fit_majorant_graded, OperatorFamily};
use crate::scale_space::{DualVector, ScaleVector};

/// Symmetry tolerance for input hierarchies, relative to their largest entry.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticOptions {
    pub evolve: EvolveOptions,
    /// Largest accepted closure defect estimate.
    pub defect_tol: f64,
    /// Safety factor of the fitted majorant.
    pub safety: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { evolve: EvolveOptions::default(), defect_tol: f64::INFINITY, safety: 1.1 }
    }
}

/// Discrete operators together with the evolution system they define.
#[derive(Debug, Clone)]
pub struct LogisticSystem {
    pub ops: DiscreteOperators,
    pub system: EvolutionSystem,
    pub k_certificate: KCertificate,
    pub alpha_star: f64,
}

impl LogisticSystem {
    pub fn existence_time(&self, alpha_prime: f64, alpha: f64) -> Result<f64> {
        self.system.existence_time(alpha_prime, alpha)
    }
}

/// Majorant grid: steps of 0.1 above `ln ϑ`, reaching past `alpha + 0.5`.
fn majorant_grid(alpha_star: f64, alpha: f64) -> Vec<f64> {
    let count = ((alpha + 0.5 - alpha_star) / 0.1).ceil().max(1.0) as usize + 1;
    (1..=count).map(|i| alpha_star + 0.1 * i as f64).collect()
}

/// Builds the evolution system on levels `0..=n_max`. `K` is certified for
/// scale levels in `[alpha_prime, alpha]` and spans up to `t`.
pub fn logistic_system(p: &LogisticParams, n_max: usize, alpha: f64, alpha_prime: f64, t: f64, safety: f64) -> Result<LogisticSystem> {
    if !(alpha_prime < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha });
    }
    let alpha_star = p.alpha_star();
    if !(alpha_prime > alpha_star) {
        return Err(Error::InvalidInput(format!("alpha' = {alpha_prime} must exceed ln(theta) = {alpha_star}")));
    }
    let ops = build_discrete_operators(p, n_max)?;
    let grading = ops.basis.grading();
    let (propagator, k_certificate) = PropagatorSpec::from_generator(&ops.lhat0_shifted(), &grading, alpha_prime, alpha, t.max(0.0))?;
    let perturbation = OperatorFamily::Constant(ops.lhat1_shifted());
    let majorant = fit_majorant_graded(&perturbation, &grading, alpha_star, &majorant_grid(alpha_star, alpha), safety)?;
    let system = EvolutionSystem::new(propagator, perturbation, grading, majorant)?;
    Ok(LogisticSystem { ops, system, k_certificate, alpha_star })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyEvolution {
    /// Quasi-observable read at `alpha_prime`, or correlation function read
    /// at `alpha`.
    pub value: Hierarchy,
    /// Total error budget of the series solver in the output norm.
    pub error_bound: f64,
    pub plan: Plan,
    pub rho: f64,
    pub horizon: f64,
    pub k_bound: f64,
    pub majorant_sup: f64,
    /// `t` times the larger discarded output of the generator at the initial
    /// and final states.
    pub closure_defect: f64,
    /// The generator reads one level above the top, where zero is used.
    pub reads_above_top: bool,
}

/// Evolves `h0` over `[0, t]`. Quasi-observables run forward; correlation
/// functions run through the dual system with `ℓ = mass·k`, so that
/// `⟨G, k_t⟩ = ⟨G_t, k⟩`.
pub fn evolve_hierarchy(
    p: &LogisticParams,
    h0: &Hierarchy,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    opts: &LogisticOptions,
) -> Result<HierarchyEvolution> {
    let scale = h0.level_sup().iter().fold(0.0_f64, |m, v| m.max(*v));
    if h0.asymmetry() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput("hierarchy components must be symmetric".into()));
    }
    let ls = logistic_system(p, h0.n_max(), alpha, alpha_prime, t, opts.safety)?;
    let basis = &ls.ops.basis;
    let coords = basis.flatten(h0)?;
    let (value, error_bound, plan, rho, horizon) = match h0.kind {
        HierarchyKind::Quasiobservable => {
            let r = forward_evolve(&ls.system, &ScaleVector::new(coords)?, 0.0, t, alpha, alpha_prime, &opts.evolve)?;
            let v = basis.expand(h0.kind, &r.value.padded(basis.len()))?;
            (v, r.total_error(), r.plan(), r.rho, r.horizon)
        }
        HierarchyKind::Correlation => {
            let ell: Vec<f64> = coords.iter().zip(basis.mass()).map(|(k, m)| k * m).collect();
            let r = dual_evolve(&ls.system, &DualVector::new(ell)?, 0.0, t, alpha, alpha_prime, &opts.evolve, None)?;
            let mut k = r.value.entries().to_vec();
            k.resize(basis.len(), 0.0);
            k.iter_mut().zip(basis.mass()).for_each(|(v, m)| *v /= m);
            (basis.expand(h0.kind, &k)?, r.total_error(), r.plan, r.rho, r.horizon)
        }
    };
    let kind = match h0.kind {
        HierarchyKind::Quasiobservable => OperatorKind::Lhat,
        HierarchyKind::Correlation => OperatorKind::Ldelta,
    };
    let (_, d0) = apply_operator(p, kind, h0)?;
    let (_, d1) = apply_operator(p, kind, &value)?;
    let closure_defect = t * d0.dropped.max(d1.dropped);
    if closure_defect > opts.defect_tol {
        return Err(Error::ClosureUnsound { defect: closure_defect, tolerance: opts.defect_tol });
    }
    Ok(HierarchyEvolution {
        value,
        error_bound,
        plan,
        rho,
        horizon,
        k_bound: ls.system.horizon.k_bound,
        majorant_sup: ls.system.horizon.majorant.sup(),
        closure_defect,
        reads_above_top: d0.reads_above_top,
    })
}
