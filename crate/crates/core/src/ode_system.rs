//! Infinite linear ODE systems `du_n/dt = Σ_k a_{nk} u_k` with the split
//! `a = -diag(d) + b + c`: `d` and `b` generate a contraction on every level
//! of the scale, `c` is the perturbation that loses regularity.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{certify_k, DiagonalGenerator, PropagatorSpec};
use crate::ovcyannikov::{forward_evolve, forward_evolve_with_plan, EvolutionResult, EvolutionSystem, EvolveOptions};
use crate::scale_operator::{fit_majorant, MajorantM, OperatorMatrix};
use crate::scale_space::{weighted_l1, Grading, ScaleVector};

/// Sampled `‖e^{τA}‖` may exceed one by at most this much.
pub const CONTRACTION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeModel {
    pub d: DiagonalGenerator,
    /// Relatively bounded part, `Σ_n |b_{nk}| e^{αn} ≤ q(α) d_k e^{αk}`.
    pub b: OperatorMatrix,
    /// Perturbation with a majorant in the scale.
    pub c: OperatorMatrix,
    pub alpha_star: f64,
    /// Levels the majorant of `c` is fitted on.
    pub alpha_grid: Vec<f64>,
    pub safety: f64,
}

impl OdeModel {
    pub fn new(d: Vec<f64>, b: OperatorMatrix, c: OperatorMatrix, alpha_star: f64, alpha_grid: Vec<f64>, safety: f64) -> Result<Self> {
        if let Some(i) = d.iter().position(|x| !(*x > 0.0)) {
            return Err(Error::InvalidInput(format!("rate d[{i}] = {} must be positive", d[i])));
        }
        let n = d.len();
        if b.dim() > n || c.dim() > n {
            return Err(Error::InvalidInput(format!("b and c must fit inside the {n} stored rates")));
        }
        if alpha_grid.is_empty() {
            return Err(Error::InvalidInput("alpha grid is empty".into()));
        }
        Ok(Self { d: DiagonalGenerator::new(d)?, b, c, alpha_star, alpha_grid, safety })
    }

    pub fn dim(&self) -> usize {
        self.d.rates().len()
    }

    /// `-diag(d) + b`.
    pub fn generator(&self) -> OperatorMatrix {
        self.d.generator().add(&self.b)
    }

    /// The complete matrix `a`.
    pub fn full_matrix(&self) -> OperatorMatrix {
        self.generator().add(&self.c)
    }

    /// `d`, `b`, `c` cut to indices below `n`; rates past the cut are zero.
    pub fn truncated(&self, n: usize) -> Self {
        let d = self.d.rates().iter().copied().take(n).collect();
        Self {
            d: DiagonalGenerator::new(d).expect("rates were valid"),
            b: self.b.restricted(n),
            c: self.c.restricted(n),
            ..self.clone()
        }
    }

    pub fn majorant(&self) -> Result<MajorantM> {
        fit_majorant(&self.c, self.alpha_star, &self.alpha_grid, self.safety)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeBound {
    pub alpha: f64,
    /// `sup_k e^{-αk} Σ_n |b_{nk}| e^{αn} / d_k`.
    pub q: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// The largest ratio sits well inside the sample.
    Settled,
    /// The largest ratio sits in the last quarter of the sample; growth
    /// cannot be excluded.
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateGrowth {
    pub nu: f64,
    /// `max_n d_n e^{-νn}` over the stored rates.
    pub sup: f64,
    pub argmax: usize,
    pub trend: Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub relative_bound: Vec<RelativeBound>,
    pub rate_growth: Vec<RateGrowth>,
    pub majorant: MajorantM,
    /// The fit on the first half of the indices differs from the full fit,
    /// so the majorant likely depends on the truncation.
    pub majorant_grid_dependent: bool,
    pub all_pass: bool,
}

/// `q(α)` for one level.
pub fn relative_bound_quotient(m: &OdeModel, alpha: f64) -> Result<f64> {
    let n = m.dim();
    let w = Grading::Sequence.weights(alpha, n)?;
    let mut q = 0.0_f64;
    for k in 0..m.b.ncols().min(n) {
        let s: f64 = m.b.column(k).iter().map(|&(r, v)| v.abs() * w[r]).sum();
        q = q.max(s / (w[k] * m.d.rate(k)));
    }
    Ok(q)
}

/// Checks the relative bound on `alpha_grid`, samples rate growth for each
/// `ν` and fits the majorant of `c`.
pub fn validate_conditions(m: &OdeModel, alpha_grid: &[f64], nu_grid: &[f64]) -> Result<ValidationReport> {
    if alpha_grid.is_empty() || nu_grid.is_empty() {
        return Err(Error::InvalidInput("validation grids must be nonempty".into()));
    }
    let relative_bound = alpha_grid
        .iter()
        .map(|&alpha| {
            let q = relative_bound_quotient(m, alpha)?;
            Ok(RelativeBound { alpha, q, pass: q < 1.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = m.dim();
    let rate_growth = nu_grid
        .iter()
        .map(|&nu| {
            let (argmax, sup) = m
                .d
                .rates()
                .iter()
                .enumerate()
                .map(|(i, d)| (i, d * (-nu * i as f64).exp()))
                .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
            let trend = if 4 * argmax >= 3 * n.saturating_sub(1) && n > 1 { Trend::Growing } else { Trend::Settled };
            RateGrowth { nu, sup, argmax, trend }
        })
        .collect::<Vec<_>>();
    let majorant = m.majorant()?;
    let half = m.truncated(n.div_ceil(2)).majorant()?;
    let majorant_grid_dependent =
        majorant.knots.iter().zip(&half.knots).any(|(a, b)| (a.1 - b.1).abs() > 1e-9 * a.1.abs().max(1e-300));
    let all_pass = relative_bound.iter().all(|r| r.pass)
        && rate_growth.iter().any(|r| r.trend == Trend::Settled)
        && !majorant_grid_dependent;
    Ok(ValidationReport { relative_bound, rate_growth, majorant, majorant_grid_dependent, all_pass })
}

/// Evolution system with `V = e^{t(-diag(d)+b)}` and perturbation `c`,
/// after checking by sampling that `V` contracts on `[alpha_prime, alpha]`.
pub fn build_system(m: &OdeModel, alpha: f64, alpha_prime: f64, t: f64) -> Result<EvolutionSystem> {
    let propagator = if m.b.is_zero() {
        PropagatorSpec::diagonal(m.d.clone())
    } else {
        let cert = certify_k(&m.generator(), &Grading::Sequence, alpha_prime, alpha, t, true)?;
        let sampled = cert.sampled.unwrap_or(1.0);
        if sampled > 1.0 + CONTRACTION_SLACK {
            return Err(Error::ContractionCertificateFailed { sampled, limit: 1.0 + CONTRACTION_SLACK });
        }
        PropagatorSpec::matrix(m.generator(), 1.0)?
    };
    EvolutionSystem::new(propagator, m.c.clone().into(), Grading::Sequence, m.majorant()?)
}

/// `u(t)` for `u(0) = x`, read at level `alpha_prime`.
pub fn solve_system(m: &OdeModel, x: &ScaleVector, alpha: f64, alpha_prime: f64, t: f64, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let sys = build_system(m, alpha, alpha_prime, t)?;
    forward_evolve(&sys, x, 0.0, t, alpha, alpha_prime, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    /// `sup_τ ‖u^N(τ) - u^{ref}(τ)‖_{α'}` over the time grid.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    /// Truncation used as the reference solution.
    pub n_ref: usize,
    pub t: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub panels: usize,
    pub n_terms: usize,
    pub rows: Vec<StudyRow>,
    /// Errors are nonincreasing along the list.
    pub monotone: bool,
}

impl StudyReport {
    /// `N,e_N` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "e_N"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), format!("{:.16e}", r.error)])?;
        }
        w.flush()
    }
}

/// Compares the truncations in `n_list` with the one at `2·max(n_list)` on a
/// common time grid. The model must store at least that many rates.
pub fn truncation_study(
    m: &OdeModel,
    x: &ScaleVector,
    alpha: f64,
    alpha_prime: f64,
    t: f64,
    n_list: &[usize],
    opts: &EvolveOptions,
) -> Result<StudyReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidInput("truncation list must be positive and strictly increasing".into()));
    }
    let n_ref = 2 * n_list[n_list.len() - 1];
    if m.dim() < n_ref {
        return Err(Error::InvalidInput(format!("model stores {} rates, the reference needs {n_ref}", m.dim())));
    }
    let keep = EvolveOptions { keep_trajectory: true, ..opts.clone() };
    let reference = m.truncated(n_ref);
    let ref_sys = build_system(&reference, alpha, alpha_prime, t)?;
    let ref_run = forward_evolve(&ref_sys, x, 0.0, t, alpha, alpha_prime, &keep)?;
    let plan = ref_run.plan();
    let ref_traj = ref_run.trajectory.as_ref().map(|tr| tr.states.clone()).unwrap_or_else(|| vec![ref_run.value.entries().to_vec()]);
    let w = Grading::Sequence.weights(alpha_prime, n_ref.max(x.support_len()))?;
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let sys = build_system(&m.truncated(n), alpha, alpha_prime, t)?;
            let run = forward_evolve_with_plan(&sys, x, 0.0, t, alpha, alpha_prime, plan, &keep)?;
            let traj = run.trajectory.map(|tr| tr.states).unwrap_or_else(|| vec![run.value.entries().to_vec()]);
            let error = traj
                .iter()
                .zip(&ref_traj)
                .map(|(a, b)| {
                    let len = a.len().max(b.len()).min(w.len());
                    let d: Vec<f64> = (0..len).map(|i| a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).collect();
                    weighted_l1(&d, &w[..len])
                })
                .fold(0.0, f64::max);
            Ok(StudyRow { n, error })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|p| p[1].error <= p[0].error);
    Ok(StudyReport { n_ref, t, alpha, alpha_prime, panels: plan.panels, n_terms: plan.n_terms, rows, monotone })
}

/// Rates `1 + n`, a birth term `b_{n+1,n} = 0.05 d_n` and a coupling band
/// of half-width 2 with entries `gamma`; `n` rates stored.
pub fn decaying_band_model(n: usize, gamma: f64) -> Result<OdeModel> {
    let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let b = OperatorMatrix::band(n, 1, 0, |r, k| if r == k { 0.0 } else { 0.05 * d[k] })?;
    let c = OperatorMatrix::band(n, 2, 2, |r, k| gamma / (1.0 + (r as f64 - k as f64).abs()))?;
    OdeModel::new(d, b, c, 0.0, (1..=20).map(|i| 0.05 * i as f64).collect(), 1.1)
}

/// Upper-triangular band model: every `span{e_0, …, e_j}` is invariant.
pub fn invariant_model(n: usize, gamma: f64) -> Result<OdeModel> {
    let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let b = OperatorMatrix::band(n, 0, 1, |r, k| if r == k { 0.0 } else { 0.05 * d[k] })?;
    let c = OperatorMatrix::band(n, 0, 2, |_, _| gamma)?;
    OdeModel::new(d, b, c, 0.0, (1..=20).map(|i| 0.05 * i as f64).collect(), 1.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relative_bound_for_subdiagonal_birth() {
        let beta = 0.2;
        let d: Vec<f64> = (0..30).map(|k| ((k + 1) * (k + 1)) as f64).collect();
        let b = OperatorMatrix::band(30, 1, 0, |r, k| if r == k { 0.0 } else { beta * d[k] }).unwrap();
        let m = OdeModel::new(d, b, OperatorMatrix::zeros(30), 0.0, vec![1.0], 1.0).unwrap();
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            let q = relative_bound_quotient(&m, alpha).unwrap();
            assert_relative_eq!(q, beta * f64::exp(alpha), max_relative = 1e-14);
        }
        let rep = validate_conditions(&m, &[1.0, 1.7], &[1.0]).unwrap();
        assert!(rep.relative_bound[0].pass);
        // -ln 0.2 ≈ 1.609
        assert!(!rep.relative_bound[1].pass);
    }

    #[test]
    fn empty_couplings_pass() {
        let m = OdeModel::new(vec![1.0, 2.0, 3.0, 4.0], OperatorMatrix::zeros(4), OperatorMatrix::zeros(4), 0.0, vec![0.5, 1.0], 1.0).unwrap();
        let rep = validate_conditions(&m, &[0.5, 1.0], &[1.0]).unwrap();
        assert!(rep.all_pass, "{rep:?}");
        assert!(rep.relative_bound.iter().all(|r| r.q == 0.0));
        assert!(rep.majorant.is_zero());
    }

    #[test]
    fn dense_coupling_is_flagged() {
        let n = 16;
        let c = OperatorMatrix::from_dense(n, n, &vec![1.0; n * n]).unwrap();
        let m = OdeModel::new(vec![1.0; n], OperatorMatrix::zeros(n), c, 0.0, vec![0.5, 1.0], 1.0).unwrap();
        let rep = validate_conditions(&m, &[0.5], &[0.5]).unwrap();
        assert!(rep.majorant_grid_dependent);
        let small = m.truncated(8).majorant().unwrap();
        assert!(rep.majorant.sup() > small.sup());
    }

    #[test]
    fn growing_rates_warn() {
        let d: Vec<f64> = (0..20).map(|k| f64::exp(k as f64)).collect();
        let m = OdeModel::new(d, OperatorMatrix::zeros(20), OperatorMatrix::zeros(20), 0.0, vec![1.0], 1.0).unwrap();
        let rep = validate_conditions(&m, &[1.0], &[0.5, 2.0]).unwrap();
        assert_eq!(rep.rate_growth[0].trend, Trend::Growing);
        assert_eq!(rep.rate_growth[1].trend, Trend::Settled);
    }

    #[test]
    fn pure_death() {
        let m = OdeModel::new(vec![1.0, 2.0], OperatorMatrix::zeros(2), OperatorMatrix::zeros(2), 0.0, vec![1.0, 2.0], 1.0).unwrap();
        let r = solve_system(&m, &ScaleVector::unit(0), 1.0, 0.5, 0.7, &EvolveOptions::default()).unwrap();
        assert_eq!(r.value.get(0), f64::exp(-0.7));
        assert_eq!(r.value.get(1), 0.0);
    }

    #[test]
    fn growing_generator_fails_certificate() {
        let b = OperatorMatrix::band(4, 1, 0, |r, k| if r == k { 0.0 } else { 3.0 }).unwrap();
        let m = OdeModel::new(vec![1.0; 4], b, OperatorMatrix::zeros(4), 0.0, vec![1.0, 2.0], 1.0).unwrap();
        let err = solve_system(&m, &ScaleVector::unit(0), 1.0, 0.5, 0.5, &EvolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ContractionCertificateFailed { .. }));
    }

    #[test]
    fn invariant_subspace_gives_exact_truncation() {
        let m = invariant_model(32, 0.1).unwrap();
        let x = ScaleVector::new((0..6).map(|i| 1.0 / (1.0 + i as f64)).collect()).unwrap();
        let t = 0.5 * build_system(&m, 0.25, 0.1, 1.0).unwrap().existence_time(0.1, 0.25).unwrap();
        let rep = truncation_study(&m, &x, 0.25, 0.1, t, &[2, 4, 8, 16], &EvolveOptions::default()).unwrap();
        assert!(rep.rows[0].error > 0.0);
        assert_eq!(rep.rows[2].error, 0.0);
        assert_eq!(rep.rows[3].error, 0.0);
    }
}
