//! Perturbed evolution systems `W = Σ W_n` built from an unperturbed
//! propagator `V` and a perturbation `B` that loses regularity in the scale,
//! `‖B‖_{αα'} ≤ M(α)/(α-α')`.
//!
//! Everything is computed on a finite working dimension: the prefix of
//! indices that the support of the input can reach under `V` and `B`.

mod dual;
mod engine;
mod global;
mod stability;

pub use dual::{dual_evolve, DualResult};
pub use global::{global_evolve, GlobalResult};
pub use stability::{stability_compare, StabilityReport};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{closure_dim, Flow, PropagatorSpec};
use crate::scale_operator::{fit_majorant_graded, MajorantM, OperatorFamily};
use crate::scale_space::{weighted_l1, Grading, ScaleVector};
use engine::{Clock, Scheme};

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 200;

/// Constants `(α_*, K, M)` that determine existence horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonTable {
    pub alpha_star: f64,
    pub k_bound: f64,
    pub majorant: MajorantM,
}

/// `(α-α')/(2 K e M)`, with `+∞` when `M = 0`.
pub fn horizon_formula(alpha_prime: f64, alpha: f64, k_bound: f64, m: f64) -> Result<f64> {
    if !(alpha_prime < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha });
    }
    if !(k_bound >= 1.0) || !(m >= 0.0) {
        return Err(Error::InvalidInput(format!("need K >= 1 and M >= 0, got K = {k_bound}, M = {m}")));
    }
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((alpha - alpha_prime) / (2.0 * k_bound * std::f64::consts::E * m))
}

impl HorizonTable {
    pub fn new(k_bound: f64, majorant: MajorantM) -> Result<Self> {
        if !(k_bound >= 1.0) || !k_bound.is_finite() {
            return Err(Error::InvalidInput(format!("K = {k_bound} must be finite and >= 1")));
        }
        Ok(Self { alpha_star: majorant.alpha_star, k_bound, majorant })
    }

    /// `T(α',α)`.
    pub fn existence_time(&self, alpha_prime: f64, alpha: f64) -> Result<f64> {
        if !(alpha_prime < alpha) {
            return Err(Error::InvalidScalePair { alpha_prime, alpha });
        }
        if !(alpha_prime > self.alpha_star) {
            return Err(Error::InvalidInput(format!(
                "alpha' = {alpha_prime} must lie above alpha_* = {}",
                self.alpha_star
            )));
        }
        horizon_formula(alpha_prime, alpha, self.k_bound, self.majorant.eval(alpha)?)
    }
}

/// `T(α',α)` for the given table.
pub fn existence_time(alpha_prime: f64, alpha: f64, data: &HorizonTable) -> Result<f64> {
    data.existence_time(alpha_prime, alpha)
}

/// `V`, `B`, the weights of the scale and the horizon constants.
#[derive(Debug, Clone)]
pub struct EvolutionSystem {
    pub propagator: PropagatorSpec,
    pub perturbation: OperatorFamily,
    pub grading: Grading,
    pub horizon: HorizonTable,
}

impl EvolutionSystem {
    /// `K` is taken from the propagator.
    pub fn new(propagator: PropagatorSpec, perturbation: OperatorFamily, grading: Grading, majorant: MajorantM) -> Result<Self> {
        let horizon = HorizonTable::new(propagator.k_bound(), majorant)?;
        Ok(Self { propagator, perturbation, grading, horizon })
    }

    /// Fits the majorant of `perturbation` on `alpha_grid`.
    pub fn fit(
        propagator: PropagatorSpec,
        perturbation: OperatorFamily,
        grading: Grading,
        alpha_star: f64,
        alpha_grid: &[f64],
        safety: f64,
    ) -> Result<Self> {
        let m = fit_majorant_graded(&perturbation, &grading, alpha_star, alpha_grid, safety)?;
        Self::new(propagator, perturbation, grading, m)
    }

    pub fn existence_time(&self, alpha_prime: f64, alpha: f64) -> Result<f64> {
        self.horizon.existence_time(alpha_prime, alpha)
    }

    /// Prefix closure of `0..len` under `V` and `B`.
    pub fn working_dim(&self, len: usize) -> usize {
        closure_dim(len, |n| self.propagator.reach(n).max(self.perturbation.reach(n)))
    }

    /// Closure of every index the system stores.
    pub fn full_dim(&self) -> usize {
        let start = match &self.propagator.kind {
            crate::evolution::PropagatorKind::Diagonal(g) => g.rates().len(),
            crate::evolution::PropagatorKind::Matrix(a) => a.dim(),
        };
        self.working_dim(start.max(self.perturbation.dim()))
    }

    /// Restriction of `V` and `B` to indices `0..dim`, horizon constants kept.
    pub fn restricted(&self, dim: usize) -> Self {
        Self {
            propagator: self.propagator.restricted(dim),
            perturbation: self.perturbation.restricted(dim),
            grading: self.grading.clone(),
            horizon: self.horizon.clone(),
        }
    }
}

/// Numerical controls of the series solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolveOptions {
    /// Absolute target for the series tail and for the quadrature change,
    /// measured in the output norm.
    pub tol: f64,
    pub max_terms: usize,
    /// Initial panel count of the time grid.
    pub panels: usize,
    pub max_panels: usize,
    /// Largest admissible `ρ = (t-s)/T`.
    pub rho_max: f64,
    /// Keep partial sums at every grid node.
    pub keep_trajectory: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_terms: MAX_TERMS, panels: 64, max_panels: 4096, rho_max: 0.95, keep_trajectory: false }
    }
}

impl EvolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol = {} must be positive", self.tol)));
        }
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(Error::InvalidInput(format!("rho_max = {} must lie in (0, 1)", self.rho_max)));
        }
        if self.panels < 4 || self.max_panels < 2 * self.panels {
            return Err(Error::InvalidInput("need panels >= 4 and max_panels >= 2 * panels".into()));
        }
        if self.max_terms > MAX_TERMS {
            return Err(Error::InvalidInput(format!("max_terms is capped at {MAX_TERMS}")));
        }
        Ok(())
    }
}

/// Fixed discretization: panel count and number of series terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub panels: usize,
    pub n_terms: usize,
}

/// Partial sums at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Evolved vector with its error budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionResult {
    /// Value in the output space; its tail bound is the total error budget.
    pub value: ScaleVector,
    pub n_terms: usize,
    pub panels: usize,
    /// `K‖k‖_α ρ^{n+1}/(1-ρ)`.
    pub series_tail: f64,
    /// Last observed change under panel doubling, floored at round-off.
    pub quad_error: f64,
    /// Tail of the input amplified by `K T/(T-(t-s))`.
    pub input_tail: f64,
    pub rho: f64,
    pub horizon: f64,
    pub k_bound: f64,
    /// `‖W_n k‖` in the output norm at the final time.
    pub term_norms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

impl EvolutionResult {
    pub fn total_error(&self) -> f64 {
        self.series_tail + self.quad_error + self.input_tail
    }

    pub fn plan(&self) -> Plan {
        Plan { panels: self.panels, n_terms: self.n_terms }
    }
}

/// Span, horizon and `ρ` after all admissibility checks.
pub(crate) struct Admissible {
    pub span: f64,
    pub horizon: f64,
    pub rho: f64,
}

pub(crate) fn admissible(sys: &EvolutionSystem, s: f64, t: f64, alpha: f64, alpha_prime: f64, rho_max: f64) -> Result<Admissible> {
    if !(s.is_finite() && t.is_finite()) {
        return Err(Error::InvalidInput("times must be finite".into()));
    }
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let horizon = sys.existence_time(alpha_prime, alpha)?;
    let span = t - s;
    if span >= horizon {
        return Err(Error::ExistenceHorizonExceeded { span, horizon });
    }
    let rho = if horizon.is_infinite() { 0.0 } else { span / horizon };
    if rho > rho_max {
        return Err(Error::HorizonTooTight { rho, rho_max });
    }
    Ok(Admissible { span, horizon, rho })
}

/// Smallest `n ≤ max_terms` with `K‖k‖ρ^{n+1}/(1-ρ) ≤ tol`, and that tail.
pub(crate) fn choose_terms(k_norm: f64, k_bound: f64, rho: f64, tol: f64, max_terms: usize) -> (usize, f64) {
    let tail = |n: usize| k_bound * k_norm * rho.powi(n as i32 + 1) / (1.0 - rho);
    if k_norm == 0.0 || rho == 0.0 {
        return (0, 0.0);
    }
    let mut n = 0;
    while n < max_terms && tail(n) > tol {
        n += 1;
    }
    (n, tail(n))
}

pub(crate) fn series_tail(k_norm: f64, k_bound: f64, rho: f64, n: usize) -> f64 {
    if k_norm == 0.0 || rho == 0.0 {
        0.0
    } else {
        k_bound * k_norm * rho.powi(n as i32 + 1) / (1.0 - rho)
    }
}

/// Round-off allowance proportional to the a-priori size of the result.
pub(crate) fn roundoff_floor(bound: f64, n_terms: usize) -> f64 {
    32.0 * f64::EPSILON * (1 + n_terms) as f64 * bound
}

#[derive(Clone, Copy)]
enum Mode {
    Adaptive,
    Fixed(Plan),
}

#[allow(clippy::too_many_arguments)]
fn evolve(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    opts: &EvolveOptions,
    mode: Mode,
    clock: Clock,
) -> Result<EvolutionResult> {
    opts.validate()?;
    let adm = admissible(sys, s, t, alpha, alpha_prime, opts.rho_max)?;
    let kb = sys.horizon.k_bound;
    let growth = if adm.horizon.is_infinite() { 1.0 } else { adm.horizon / (adm.horizon - adm.span) };
    let input_tail = if k.tail_bound() == 0.0 { 0.0 } else { kb * growth * k.tail_at(alpha) };
    let dim = sys.working_dim(k.support_len());
    let w_in = sys.grading.weights(alpha, dim)?;
    let w_out = sys.grading.weights(alpha_prime, dim)?;
    let k_full = k.padded(dim);
    let k_norm = weighted_l1(&k_full, &w_in);
    let bound = kb * k_norm * growth;

    let finish = |value: Vec<f64>, plan: Plan, tail: f64, quad: f64, term_norms: Vec<f64>, traj: Option<Trajectory>| {
        let quad_error = quad.max(roundoff_floor(bound, plan.n_terms));
        let total = tail + quad_error + input_tail;
        Ok(EvolutionResult {
            value: ScaleVector::with_tail(value, alpha_prime, total)?,
            n_terms: plan.n_terms,
            panels: plan.panels,
            series_tail: tail,
            quad_error,
            input_tail,
            rho: adm.rho,
            horizon: adm.horizon,
            k_bound: kb,
            term_norms,
            trajectory: traj,
        })
    };

    if adm.span == 0.0 {
        let tn = vec![weighted_l1(&k_full, &w_out)];
        let v = ScaleVector::with_tail(k_full, alpha_prime, input_tail)?;
        return Ok(EvolutionResult {
            value: v,
            n_terms: 0,
            panels: 0,
            series_tail: 0.0,
            quad_error: 0.0,
            input_tail,
            rho: 0.0,
            horizon: adm.horizon,
            k_bound: kb,
            term_norms: tn,
            trajectory: None,
        });
    }

    let flow = Flow::new(&sys.propagator, dim);
    let b = &sys.perturbation;
    let times = |m: usize| -> Vec<f64> {
        (0..=m).map(|i| if i == m { adm.span } else { adm.span * i as f64 / m as f64 }).collect()
    };
    let local_to_global = |tau: f64| match clock {
        Clock::Forward { s } => s + tau,
        Clock::Backward { t } => t - tau,
    };

    if b.is_zero() {
        let m = match mode {
            Mode::Fixed(p) => p.panels.max(4),
            Mode::Adaptive => opts.panels.max(4),
        };
        let sch = Scheme::new(&flow, b, clock, adm.span, m);
        let out = sch.forward(&k_full, 0, &w_out, opts.keep_trajectory);
        let traj = out.trajectory.map(|states| Trajectory { times: times(m).into_iter().map(local_to_global).collect(), states });
        return finish(out.value, Plan { panels: m, n_terms: 0 }, 0.0, 0.0, out.term_norms, traj);
    }

    let (n_terms, tail, mut m) = match mode {
        Mode::Fixed(p) => {
            if p.panels < 4 || p.n_terms > MAX_TERMS {
                return Err(Error::InvalidInput("plan needs panels >= 4 and n_terms <= 200".into()));
            }
            (p.n_terms, series_tail(k_norm, kb, adm.rho, p.n_terms), p.panels)
        }
        Mode::Adaptive => {
            let (n, tail) = choose_terms(k_norm, kb, adm.rho, opts.tol, opts.max_terms);
            (n, tail, opts.panels)
        }
    };
    let mut out = Scheme::new(&flow, b, clock, adm.span, m).forward(&k_full, n_terms, &w_out, opts.keep_trajectory);
    let mut change = 0.0;
    if let Mode::Adaptive = mode {
        change = f64::INFINITY;
        while 2 * m <= opts.max_panels {
            let finer = Scheme::new(&flow, b, clock, adm.span, 2 * m).forward(&k_full, n_terms, &w_out, opts.keep_trajectory);
            let diff: Vec<f64> = finer.value.iter().zip(&out.value).map(|(a, b)| a - b).collect();
            change = weighted_l1(&diff, &w_out);
            m *= 2;
            out = finer;
            if change < opts.tol / 4.0 {
                break;
            }
        }
    }
    let traj = out.trajectory.map(|states| Trajectory { times: times(m).into_iter().map(local_to_global).collect(), states });
    finish(out.value, Plan { panels: m, n_terms }, tail, change, out.term_norms, traj)
}

/// `W(t,s)k` for the forward system, read in the `α'`-norm.
pub fn forward_evolve(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    evolve(sys, k, s, t, alpha, alpha_prime, opts, Mode::Adaptive, Clock::Forward { s })
}

/// Forward evolution with a fixed discretization; `quad_error` is then only
/// the round-off floor.
#[allow(clippy::too_many_arguments)]
pub fn forward_evolve_with_plan(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    plan: Plan,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    evolve(sys, k, s, t, alpha, alpha_prime, opts, Mode::Fixed(plan), Clock::Forward { s })
}

/// `W(s,t)k` for the backward system: the solution at time `s` of
/// `dv/dr = -(A + B(r)) v` with `v(t) = k`.
pub fn backward_evolve(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    t: f64,
    alpha: f64,
    alpha_prime: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    evolve(sys, k, s, t, alpha, alpha_prime, opts, Mode::Adaptive, Clock::Backward { t })
}

/// `‖W(t,s)k - W(t,r)W(r,s)k‖_{α'}` together with the summed error budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResidual {
    pub residual: f64,
    pub budget: f64,
}

/// Compares the direct evaluation `W(t,s)k` with the composition through
/// the intermediate time `r` and level `α''`.
#[allow(clippy::too_many_arguments)]
pub fn evolution_property_residual(
    sys: &EvolutionSystem,
    k: &ScaleVector,
    s: f64,
    r: f64,
    t: f64,
    alpha_prime: f64,
    alpha_mid: f64,
    alpha: f64,
    opts: &EvolveOptions,
) -> Result<PropertyResidual> {
    if !(s <= r && r <= t) {
        return Err(Error::TimeOrderViolation { s: r, t });
    }
    if !(alpha_prime < alpha_mid && alpha_mid < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha });
    }
    let direct = forward_evolve(sys, k, s, t, alpha, alpha_prime, opts)?;
    let first = forward_evolve(sys, k, s, r, alpha, alpha_mid, opts)?;
    let second = forward_evolve(sys, &first.value, r, t, alpha_mid, alpha_prime, opts)?;
    let n = direct.value.support_len().max(second.value.support_len());
    let diff: Vec<f64> = (0..n).map(|i| direct.value.get(i) - second.value.get(i)).collect();
    let residual = sys.grading.norm(&diff, alpha_prime)?;
    Ok(PropertyResidual { residual, budget: direct.total_error() + second.total_error() })
}
