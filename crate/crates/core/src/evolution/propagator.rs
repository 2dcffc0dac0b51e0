//! Unperturbed propagators `V(t,s) = e^{(t-s)A}` realized on a finite
//! working dimension.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scale_operator::OperatorMatrix;
use crate::scale_space::Grading;

/// Death rates `d_n ≥ 0` of `A = -diag(d)`. Indices past the stored rates
/// have rate zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalGenerator {
    d: Vec<f64>,
}

impl DiagonalGenerator {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput(format!("rate d[{i}] = {} must be finite and >= 0", d[i])));
        }
        Ok(Self { d })
    }

    pub fn rates(&self) -> &[f64] {
        &self.d
    }

    pub fn rate(&self, n: usize) -> f64 {
        self.d.get(n).copied().unwrap_or(0.0)
    }

    /// `A = -diag(d)` as a matrix.
    pub fn generator(&self) -> OperatorMatrix {
        let neg: Vec<f64> = self.d.iter().map(|x| -x).collect();
        OperatorMatrix::diagonal(&neg).expect("finite rates")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropagatorKind {
    Diagonal(DiagonalGenerator),
    /// Semigroup of a finite (truncated) generator matrix.
    Matrix(OperatorMatrix),
}

/// `V` together with its amplification constant `K ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSpec {
    pub kind: PropagatorKind,
    k_bound: f64,
}

impl PropagatorSpec {
    /// Diagonal contraction semigroup, `K = 1`.
    pub fn diagonal(g: DiagonalGenerator) -> Self {
        Self { kind: PropagatorKind::Diagonal(g), k_bound: 1.0 }
    }

    /// Matrix semigroup with a caller-supplied `K`.
    pub fn matrix(a: OperatorMatrix, k_bound: f64) -> Result<Self> {
        Self::with_kind(PropagatorKind::Matrix(a), k_bound)
    }

    pub fn with_kind(kind: PropagatorKind, k_bound: f64) -> Result<Self> {
        if !(k_bound >= 1.0) || !k_bound.is_finite() {
            return Err(Error::InvalidInput(format!("K = {k_bound} must be finite and >= 1")));
        }
        Ok(Self { kind, k_bound })
    }

    /// Identity propagator (`A = 0`).
    pub fn identity() -> Self {
        Self::diagonal(DiagonalGenerator { d: Vec::new() })
    }

    /// Chooses the diagonal representation when `a` has no off-diagonal
    /// entries and a nonpositive diagonal, and certifies `K` on the scale
    /// interval `[alpha_lo, alpha_hi]` for spans up to `tau_max`.
    pub fn from_generator(
        a: &OperatorMatrix,
        grading: &Grading,
        alpha_lo: f64,
        alpha_hi: f64,
        tau_max: f64,
    ) -> Result<(Self, KCertificate)> {
        let diagonal = a.triplets().all(|(n, k, v)| n == k && v <= 0.0);
        if diagonal {
            let mut d = vec![0.0; a.dim()];
            for (n, _, v) in a.triplets() {
                d[n] = -v;
            }
            let cert = KCertificate {
                k_bound: 1.0,
                method: KMethod::Diagonal,
                log_norm: d.iter().fold(f64::NEG_INFINITY, |m, x| m.max(-x)).min(0.0),
                sampled: None,
            };
            return Ok((Self::diagonal(DiagonalGenerator::new(d)?), cert));
        }
        let cert = certify_k(a, grading, alpha_lo, alpha_hi, tau_max, false)?;
        Ok((Self::matrix(a.clone(), cert.k_bound)?, cert))
    }

    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    /// The generator `A` as a matrix.
    pub fn generator(&self) -> OperatorMatrix {
        match &self.kind {
            PropagatorKind::Diagonal(g) => g.generator(),
            PropagatorKind::Matrix(a) => a.clone(),
        }
    }

    /// Largest index reachable from `0..len` under `A`.
    pub fn reach(&self, len: usize) -> usize {
        match &self.kind {
            PropagatorKind::Diagonal(_) => len,
            PropagatorKind::Matrix(a) => a.reach(len),
        }
    }

    pub fn restricted(&self, dim: usize) -> Self {
        let kind = match &self.kind {
            PropagatorKind::Diagonal(g) => PropagatorKind::Diagonal(DiagonalGenerator {
                d: g.d.iter().copied().take(dim).collect(),
            }),
            PropagatorKind::Matrix(a) => PropagatorKind::Matrix(a.restricted(dim)),
        };
        Self { kind, k_bound: self.k_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KMethod {
    /// Diagonal contraction; `K = 1` exactly.
    Diagonal,
    /// Weighted log-norm `≤ 0` on the whole scale interval; `K = 1` exactly.
    LogNorm,
    /// Sampled norms of `e^{τA}` inflated by 5%.
    Sampled,
}

/// How `K` was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCertificate {
    pub k_bound: f64,
    pub method: KMethod,
    /// Largest weighted log-norm of `A` over the sampled levels.
    pub log_norm: f64,
    /// Largest sampled `‖e^{τA}‖_{ββ}`, if sampling ran.
    pub sampled: Option<f64>,
}

/// `μ_β(A) = max_k (a_kk + Σ_{n≠k} |a_nk| w_n / w_k)`.
pub fn weighted_log_norm(a: &OperatorMatrix, g: &Grading, beta: f64) -> Result<f64> {
    let dim = a.dim();
    let w = g.weights(beta, dim)?;
    let wi = g.dual_weights(beta, dim)?;
    let mut best = f64::NEG_INFINITY;
    for k in 0..a.ncols() {
        let mut s = 0.0;
        for &(n, v) in a.column(k) {
            s += if n == k { v } else { v.abs() * w[n] * wi[k] };
        }
        best = best.max(s);
    }
    // columns that are not stored are zero and contribute a log-norm of 0
    if a.ncols() < dim {
        best = best.max(0.0);
    }
    Ok(best)
}

/// Same-level norm `sup_k w_k^{-1} Σ_n |m_nk| w_n` of a dense matrix.
pub(crate) fn dense_level_norm(m: &DMatrix<f64>, w: &[f64], wi: &[f64]) -> f64 {
    let n = m.nrows();
    (0..m.ncols())
        .map(|k| wi[k] * (0..n).map(|i| m[(i, k)].abs() * w[i]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Certifies `K` for `e^{τA}`, `0 ≤ τ ≤ tau_max`, on levels in
/// `[alpha_lo, alpha_hi]`.
///
/// The log-norm of a column is a sum of exponentials in `β`, hence convex, so
/// nonpositivity at both interval ends covers the interior. Sampling is run
/// when that test fails or when `force_sampling` is set.
pub fn certify_k(
    a: &OperatorMatrix,
    g: &Grading,
    alpha_lo: f64,
    alpha_hi: f64,
    tau_max: f64,
    force_sampling: bool,
) -> Result<KCertificate> {
    if !(alpha_lo <= alpha_hi) || !(tau_max >= 0.0) {
        return Err(Error::InvalidInput("certify_k needs alpha_lo <= alpha_hi and tau_max >= 0".into()));
    }
    let betas: Vec<f64> = (0..=4).map(|i| alpha_lo + (alpha_hi - alpha_lo) * i as f64 / 4.0).collect();
    let mut log_norm = f64::NEG_INFINITY;
    for &b in &betas {
        log_norm = log_norm.max(weighted_log_norm(a, g, b)?);
    }
    let contraction = log_norm <= 0.0;
    let sampled = if !contraction || force_sampling {
        let dim = a.dim();
        let dense = DMatrix::from_row_slice(dim, dim, &a.to_dense(dim));
        let mut best = 0.0_f64;
        for j in 1..=4 {
            let v = (&dense * (tau_max * j as f64 / 4.0)).exp();
            for &b in [betas[0], betas[2], betas[4]].iter() {
                let w = g.weights(b, dim)?;
                let wi = g.dual_weights(b, dim)?;
                best = best.max(dense_level_norm(&v, &w, &wi));
            }
        }
        Some(best)
    } else {
        None
    };
    let (k_bound, method) = if contraction {
        (1.0, KMethod::LogNorm)
    } else {
        (sampled.unwrap_or(1.0).max(1.0) * 1.05, KMethod::Sampled)
    };
    Ok(KCertificate { k_bound, method, log_norm, sampled })
}

/// `V` realized on indices `0..dim`.
#[derive(Debug, Clone)]
pub(crate) enum Flow {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Flow {
    pub fn new(spec: &PropagatorSpec, dim: usize) -> Self {
        match &spec.kind {
            PropagatorKind::Diagonal(g) => Flow::Diagonal((0..dim).map(|n| g.rate(n)).collect()),
            PropagatorKind::Matrix(a) => Flow::Dense(DMatrix::from_row_slice(dim, dim, &a.to_dense(dim))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Flow::Diagonal(d) => d.len(),
            Flow::Dense(a) => a.nrows(),
        }
    }

    /// `V(τ)`.
    pub fn step(&self, tau: f64) -> Step {
        match self {
            Flow::Diagonal(d) => Step::Diagonal(d.iter().map(|x| (-tau * x).exp()).collect()),
            Flow::Dense(a) => {
                if tau == 0.0 {
                    Step::Dense(DMatrix::identity(a.nrows(), a.ncols()))
                } else {
                    Step::Dense((a * tau).exp())
                }
            }
        }
    }
}

/// A fixed linear map `V(τ)` on the working dimension.
#[derive(Debug, Clone)]
pub(crate) enum Step {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Step {
    /// `y += c · S x`.
    pub fn apply_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        match self {
            Step::Diagonal(f) => {
                for ((yi, xi), fi) in y.iter_mut().zip(x).zip(f) {
                    *yi += c * fi * xi;
                }
            }
            Step::Dense(m) => {
                let n = m.nrows();
                let data = m.as_slice();
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    let s = c * xj;
                    for (yi, mij) in y.iter_mut().zip(&data[j * n..(j + 1) * n]) {
                        *yi += mij * s;
                    }
                }
            }
        }
    }

    /// `y += c · Sᵀ x`.
    pub fn apply_t_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        match self {
            Step::Diagonal(_) => self.apply_add(c, x, y),
            Step::Dense(m) => {
                let n = m.nrows();
                let data = m.as_slice();
                for (j, yj) in y.iter_mut().enumerate() {
                    let col = &data[j * n..(j + 1) * n];
                    *yj += c * col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    /// `S x` as a new vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_add(1.0, x, &mut y);
        y
    }

    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_t_add(1.0, x, &mut y);
        y
    }
}
