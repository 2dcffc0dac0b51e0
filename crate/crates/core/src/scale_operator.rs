//! Column-sparse infinite matrices acting on the scale, their exact weighted
//! operator norms and the fitted majorant `M(α)`.
//!
//! For a column-finite matrix the norm `E_α → E_{α'}` is
//! `sup_k e^{-αk} Σ_n |b_{nk}| e^{α'n}`; it is evaluated exactly as a maximum
//! over stored columns.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scale_space::{compensated_sum, Grading, ScaleVector};

/// Column count above which norm evaluation fans out over threads.
const PAR_COLUMNS: usize = 512;

/// Column-sparse matrix `b_{nk}`; columns beyond the stored ones are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorMatrix {
    columns: Vec<Vec<(usize, f64)>>,
    nrows: usize,
    bandwidth: Option<usize>,
    tail_cap: Option<f64>,
}

impl OperatorMatrix {
    /// Zero matrix with `ncols` empty columns.
    pub fn zeros(ncols: usize) -> Self {
        Self { columns: vec![Vec::new(); ncols], ..Self::default() }
    }

    /// Builds from `(row, col, value)` triples. Zero values are dropped and
    /// repeated positions are rejected.
    pub fn from_triplets(triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut columns: Vec<Vec<(usize, f64)>> = Vec::new();
        for (n, k, v) in triplets {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite matrix entry at ({n}, {k})")));
            }
            if k >= columns.len() {
                columns.resize(k + 1, Vec::new());
            }
            columns[k].push((n, v));
        }
        for (k, col) in columns.iter_mut().enumerate() {
            col.sort_by_key(|&(n, _)| n);
            if let Some(w) = col.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!("duplicate matrix entry at ({}, {k})", w[0].0)));
            }
            col.retain(|&(_, v)| v != 0.0);
        }
        Ok(Self::from_columns_unchecked(columns))
    }

    fn from_columns_unchecked(columns: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = columns
            .iter()
            .filter_map(|c| c.last().map(|&(n, _)| n + 1))
            .max()
            .unwrap_or(0);
        Self { columns, nrows, bandwidth: None, tail_cap: None }
    }

    /// Builds from explicit columns; rows must be strictly increasing.
    pub fn from_columns(columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (k, col) in columns.iter().enumerate() {
            if col.iter().any(|&(_, v)| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite entry in column {k}")));
            }
            if col.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidInput(format!("rows of column {k} not strictly increasing")));
            }
        }
        Ok(Self::from_columns_unchecked(columns))
    }

    /// Row-major dense block (rows × cols) to sparse.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput("dense data has wrong length".into()));
        }
        Self::from_triplets(
            (0..rows).flat_map(|n| (0..cols).map(move |k| (n, k, data[n * cols + k]))),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n]).expect("finite")
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let mut m = Self::from_triplets(d.iter().enumerate().map(|(i, &v)| (i, i, v)))?;
        m.columns.resize(d.len(), Vec::new());
        m.bandwidth = Some(0);
        Ok(m)
    }

    /// `(Bu)_n = n u_n` on indices `0..n`.
    pub fn number(n: usize) -> Self {
        let d: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Self::diagonal(&d).expect("finite")
    }

    /// `b_{k+offset, k} = value` for columns `0..ncols` whose target row is
    /// nonnegative. `offset = -1` moves entries down one index, `+1` raises.
    pub fn shift(ncols: usize, offset: i64, value: f64) -> Result<Self> {
        let mut m = Self::from_triplets((0..ncols).filter_map(|k| {
            let n = k as i64 + offset;
            (n >= 0).then_some((n as usize, k, value))
        }))?;
        m.columns.resize(ncols, Vec::new());
        m.bandwidth = Some(offset.unsigned_abs() as usize);
        Ok(m)
    }

    /// Band matrix on `0..n` with `b_{nk} = f(n, k)` for `-upper <= n-k <= lower`
    /// (`lower` subdiagonals, `upper` superdiagonals).
    pub fn band(n: usize, lower: usize, upper: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut trip = Vec::new();
        for k in 0..n {
            let lo = k.saturating_sub(upper);
            let hi = (k + lower).min(n.saturating_sub(1));
            for row in lo..=hi {
                trip.push((row, k, f(row, k)));
            }
        }
        let mut m = Self::from_triplets(trip)?;
        m.columns.resize(n, Vec::new());
        m.bandwidth = Some(lower.max(upper));
        Ok(m)
    }

    /// Declares a bound on how the operator acts on mass outside the stored
    /// support; used to propagate tail bounds through [`apply`].
    pub fn with_tail_cap(mut self, cap: f64) -> Self {
        self.tail_cap = Some(cap);
        self
    }

    pub fn tail_cap(&self) -> Option<f64> {
        self.tail_cap
    }

    pub fn bandwidth(&self) -> Option<usize> {
        self.bandwidth
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// One past the largest stored row index.
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Index of the last stored column, `None` if there are none.
    pub fn max_col(&self) -> Option<usize> {
        self.columns.len().checked_sub(1)
    }

    /// `max(nrows, ncols)`.
    pub fn dim(&self) -> usize {
        self.nrows.max(self.columns.len())
    }

    pub fn column(&self, k: usize) -> &[(usize, f64)] {
        self.columns.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.columns.iter().all(Vec::is_empty)
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.column(k)
            .binary_search_by_key(&n, |&(r, _)| r)
            .map(|i| self.columns[k][i].1)
            .unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&(n, v)| (n, k, v)))
    }

    /// Keeps entries with `n < dim` and `k < dim`.
    pub fn restricted(&self, dim: usize) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = self
            .columns
            .iter()
            .take(dim)
            .map(|c| c.iter().copied().filter(|&(n, _)| n < dim).collect())
            .collect();
        cols.resize(dim.min(self.columns.len()), Vec::new());
        let mut m = Self::from_columns_unchecked(cols);
        m.bandwidth = self.bandwidth;
        m
    }

    /// Row-major dense `dim × dim` block.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim * dim];
        for (n, k, v) in self.triplets() {
            if n < dim && k < dim {
                out[n * dim + k] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut trip: Vec<(usize, usize, f64)> = self.triplets().map(|(n, k, v)| (k, n, v)).collect();
        trip.sort_by_key(|&(n, k, _)| (k, n));
        let mut m = Self::from_triplets(trip).expect("entries already validated");
        m.columns.resize(self.nrows, Vec::new());
        m.bandwidth = self.bandwidth;
        m
    }

    pub fn scaled(&self, c: f64) -> Self {
        let cols = self
            .columns
            .iter()
            .map(|col| col.iter().map(|&(n, v)| (n, c * v)).filter(|&(_, v)| v != 0.0).collect())
            .collect();
        let mut m = Self::from_columns_unchecked(cols);
        m.bandwidth = self.bandwidth;
        m.tail_cap = self.tail_cap.map(|t| t * c.abs());
        m
    }

    /// Linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let ncols = self.columns.len().max(other.columns.len());
        let mut cols = Vec::with_capacity(ncols);
        for k in 0..ncols {
            let (x, y) = (self.column(k), other.column(k));
            let (mut i, mut j) = (0, 0);
            let mut col = Vec::with_capacity(x.len().max(y.len()));
            while i < x.len() || j < y.len() {
                let (n, v) = match (x.get(i), y.get(j)) {
                    (Some(&(nx, vx)), Some(&(ny, vy))) if nx == ny => {
                        i += 1;
                        j += 1;
                        (nx, a * vx + b * vy)
                    }
                    (Some(&(nx, vx)), Some(&(ny, _))) if nx < ny => {
                        i += 1;
                        (nx, a * vx)
                    }
                    (Some(&(nx, vx)), None) => {
                        i += 1;
                        (nx, a * vx)
                    }
                    (_, Some(&(ny, vy))) => {
                        j += 1;
                        (ny, b * vy)
                    }
                    (None, None) => unreachable!(),
                };
                if v != 0.0 {
                    col.push((n, v));
                }
            }
            cols.push(col);
        }
        let mut m = Self::from_columns_unchecked(cols);
        m.bandwidth = match (self.bandwidth, other.bandwidth) {
            (Some(p), Some(q)) => Some(p.max(q)),
            _ => None,
        };
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(1.0, other, 1.0)
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut cols = Vec::with_capacity(other.columns.len());
        let mut acc = vec![0.0; self.nrows];
        let mut touched = vec![false; self.nrows];
        let mut rows: Vec<usize> = Vec::new();
        for col in &other.columns {
            rows.clear();
            for &(j, bjk) in col {
                for &(n, anj) in self.column(j) {
                    if !touched[n] {
                        touched[n] = true;
                        rows.push(n);
                    }
                    acc[n] += anj * bjk;
                }
            }
            rows.sort_unstable();
            let mut out = Vec::with_capacity(rows.len());
            for &n in &rows {
                if acc[n] != 0.0 {
                    out.push((n, acc[n]));
                }
                acc[n] = 0.0;
                touched[n] = false;
            }
            cols.push(out);
        }
        Self::from_columns_unchecked(cols)
    }

    /// `y += c · B x` on raw slices. Entries of `x` beyond the stored columns
    /// are ignored; rows beyond `y.len()` are dropped.
    pub fn apply_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        for (col, &xk) in self.columns.iter().zip(x) {
            if xk == 0.0 {
                continue;
            }
            let s = c * xk;
            for &(n, v) in col {
                if let Some(slot) = y.get_mut(n) {
                    *slot += v * s;
                }
            }
        }
    }

    /// `y += c · Bᵀ x` on raw slices.
    pub fn transpose_apply_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        for (col, slot) in self.columns.iter().zip(y.iter_mut()) {
            let s = compensated_sum(
                col.iter().map(|&(n, v)| v * x.get(n).copied().unwrap_or(0.0)),
            );
            *slot += c * s;
        }
    }

    /// Largest row index reachable from indices `0..len`, plus one.
    pub fn reach(&self, len: usize) -> usize {
        self.columns
            .iter()
            .take(len)
            .filter_map(|c| c.last().map(|&(n, _)| n + 1))
            .max()
            .unwrap_or(0)
    }
}

/// `Bu` as a new vector. The tail bound of `u` is multiplied by the declared
/// tail cap, or becomes `+∞` when the matrix has none.
pub fn apply(b: &OperatorMatrix, u: &ScaleVector) -> ScaleVector {
    let len = b.reach(u.support_len());
    let mut out = vec![0.0; len];
    b.apply_add(1.0, u.entries(), &mut out);
    let tail = if u.tail_bound() == 0.0 {
        0.0
    } else {
        b.tail_cap.map_or(f64::INFINITY, |c| c * u.tail_bound())
    };
    ScaleVector::with_tail(out, u.tail_alpha(), tail).expect("finite products of finite entries")
}

/// `‖B‖_{E_α → E_{α'}}` for the plain sequence weights.
pub fn operator_norm(b: &OperatorMatrix, alpha: f64, alpha_prime: f64) -> Result<f64> {
    operator_norm_graded(b, &Grading::Sequence, alpha, alpha_prime)
}

/// Operator norm with respect to an arbitrary grading.
pub fn operator_norm_graded(b: &OperatorMatrix, g: &Grading, alpha: f64, alpha_prime: f64) -> Result<f64> {
    if !(alpha_prime < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha });
    }
    let w_in = g.dual_weights(alpha, b.ncols())?;
    let w_out = g.weights(alpha_prime, b.nrows())?;
    let col_norm = |k: usize| -> f64 {
        let col = &b.columns[k];
        if col.is_empty() {
            return 0.0;
        }
        w_in[k] * compensated_sum(col.iter().map(|&(n, v)| v.abs() * w_out[n]))
    };
    let norm = if b.ncols() >= PAR_COLUMNS {
        (0..b.ncols()).into_par_iter().map(col_norm).reduce(|| 0.0, f64::max)
    } else {
        (0..b.ncols()).map(col_norm).fold(0.0, f64::max)
    };
    Ok(norm)
}

/// A time-dependent matrix family `B(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorFamily {
    Constant(OperatorMatrix),
    /// `B(t) = mats[i]` for `times[i] <= t < times[i+1]`, clamped at the ends.
    PiecewiseConstant { times: Vec<f64>, mats: Vec<OperatorMatrix> },
    /// Linear interpolation between knots, clamped at the ends.
    Linear { times: Vec<f64>, mats: Vec<OperatorMatrix> },
}

impl From<OperatorMatrix> for OperatorFamily {
    fn from(m: OperatorMatrix) -> Self {
        OperatorFamily::Constant(m)
    }
}

fn check_knots(times: &[f64], n: usize) -> Result<()> {
    if times.is_empty() || times.len() != n {
        return Err(Error::InvalidInput("family needs one matrix per knot and at least one knot".into()));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("family knots must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl OperatorFamily {
    pub fn piecewise_constant(times: Vec<f64>, mats: Vec<OperatorMatrix>) -> Result<Self> {
        check_knots(&times, mats.len())?;
        Ok(Self::PiecewiseConstant { times, mats })
    }

    pub fn linear(times: Vec<f64>, mats: Vec<OperatorMatrix>) -> Result<Self> {
        check_knots(&times, mats.len())?;
        Ok(Self::Linear { times, mats })
    }

    pub fn matrices(&self) -> &[OperatorMatrix] {
        match self {
            Self::Constant(m) => std::slice::from_ref(m),
            Self::PiecewiseConstant { mats, .. } | Self::Linear { mats, .. } => mats,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    pub fn is_zero(&self) -> bool {
        self.matrices().iter().all(OperatorMatrix::is_zero)
    }

    /// Largest index any member touches.
    pub fn dim(&self) -> usize {
        self.matrices().iter().map(OperatorMatrix::dim).max().unwrap_or(0)
    }

    /// Largest row reachable from `0..len` by any member.
    pub fn reach(&self, len: usize) -> usize {
        self.matrices().iter().map(|m| m.reach(len)).max().unwrap_or(0)
    }

    /// Interpolation weights `(i, 1-θ, θ)` at time `t`.
    fn locate(times: &[f64], t: f64) -> (usize, f64) {
        if t <= times[0] {
            return (0, 0.0);
        }
        let last = times.len() - 1;
        if t >= times[last] {
            return (last, 0.0);
        }
        let i = times.partition_point(|&x| x <= t) - 1;
        (i, (t - times[i]) / (times[i + 1] - times[i]))
    }

    /// `y += c · B(t) x`.
    pub fn apply_add_at(&self, t: f64, c: f64, x: &[f64], y: &mut [f64]) {
        match self {
            Self::Constant(m) => m.apply_add(c, x, y),
            Self::PiecewiseConstant { times, mats } => mats[Self::locate(times, t).0].apply_add(c, x, y),
            Self::Linear { times, mats } => {
                let (i, th) = Self::locate(times, t);
                if th == 0.0 {
                    mats[i].apply_add(c, x, y);
                } else {
                    mats[i].apply_add(c * (1.0 - th), x, y);
                    mats[i + 1].apply_add(c * th, x, y);
                }
            }
        }
    }

    /// `y += c · B(t)ᵀ x`.
    pub fn transpose_apply_add_at(&self, t: f64, c: f64, x: &[f64], y: &mut [f64]) {
        match self {
            Self::Constant(m) => m.transpose_apply_add(c, x, y),
            Self::PiecewiseConstant { times, mats } => {
                mats[Self::locate(times, t).0].transpose_apply_add(c, x, y)
            }
            Self::Linear { times, mats } => {
                let (i, th) = Self::locate(times, t);
                if th == 0.0 {
                    mats[i].transpose_apply_add(c, x, y);
                } else {
                    mats[i].transpose_apply_add(c * (1.0 - th), x, y);
                    mats[i + 1].transpose_apply_add(c * th, x, y);
                }
            }
        }
    }

    /// Materialized `B(t)`.
    pub fn at(&self, t: f64) -> OperatorMatrix {
        match self {
            Self::Constant(m) => m.clone(),
            Self::PiecewiseConstant { times, mats } => mats[Self::locate(times, t).0].clone(),
            Self::Linear { times, mats } => {
                let (i, th) = Self::locate(times, t);
                if th == 0.0 {
                    mats[i].clone()
                } else {
                    mats[i].combine(1.0 - th, &mats[i + 1], th)
                }
            }
        }
    }

    pub fn restricted(&self, dim: usize) -> Self {
        match self {
            Self::Constant(m) => Self::Constant(m.restricted(dim)),
            Self::PiecewiseConstant { times, mats } => Self::PiecewiseConstant {
                times: times.clone(),
                mats: mats.iter().map(|m| m.restricted(dim)).collect(),
            },
            Self::Linear { times, mats } => Self::Linear {
                times: times.clone(),
                mats: mats.iter().map(|m| m.restricted(dim)).collect(),
            },
        }
    }

    /// Family obtained by applying `f` to every member.
    pub fn map(&self, f: impl Fn(&OperatorMatrix) -> OperatorMatrix) -> Self {
        match self {
            Self::Constant(m) => Self::Constant(f(m)),
            Self::PiecewiseConstant { times, mats } => Self::PiecewiseConstant {
                times: times.clone(),
                mats: mats.iter().map(&f).collect(),
            },
            Self::Linear { times, mats } => Self::Linear {
                times: times.clone(),
                mats: mats.iter().map(&f).collect(),
            },
        }
    }

    /// `sup_t ‖B(t)‖`; for both interpolation modes the sup over time is
    /// attained at a knot.
    pub fn norm_graded(&self, g: &Grading, alpha: f64, alpha_prime: f64) -> Result<f64> {
        self.matrices()
            .iter()
            .map(|m| operator_norm_graded(m, g, alpha, alpha_prime))
            .try_fold(0.0_f64, |acc, r| r.map(|v| acc.max(v)))
    }

    pub fn norm(&self, alpha: f64, alpha_prime: f64) -> Result<f64> {
        self.norm_graded(&Grading::Sequence, alpha, alpha_prime)
    }
}

/// Fitted majorant `M(α)` on a finite grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MajorantM {
    pub alpha_star: f64,
    /// `(α, sup_{α'} (α-α')‖B‖_{αα'})` after cumulative max, without safety.
    pub knots: Vec<(f64, f64)>,
    pub safety: f64,
}

impl MajorantM {
    /// Majorant that is a constant `m` on `(alpha_star, alpha_max]`.
    pub fn constant(alpha_star: f64, alpha_max: f64, m: f64) -> Result<Self> {
        if !(alpha_max > alpha_star) || !(m >= 0.0) {
            return Err(Error::InvalidInput("constant majorant needs alpha_max > alpha_star and m >= 0".into()));
        }
        Ok(Self { alpha_star, knots: vec![(alpha_max, m)], safety: 1.0 })
    }

    pub fn zero(alpha_star: f64, alpha_max: f64) -> Self {
        Self { alpha_star, knots: vec![(alpha_max, 0.0)], safety: 1.0 }
    }

    pub fn alpha_max(&self) -> f64 {
        self.knots.last().map_or(self.alpha_star, |k| k.0)
    }

    /// `safety × M(α)` by linear interpolation between knots, constant below
    /// the first knot.
    pub fn eval(&self, alpha: f64) -> Result<f64> {
        let hi = self.alpha_max();
        if !(alpha > self.alpha_star) || alpha > hi * (1.0 + 1e-14) + 1e-14 {
            return Err(Error::MajorantOutOfRange { alpha, lo: self.alpha_star, hi });
        }
        let k = &self.knots;
        let raw = if alpha <= k[0].0 {
            k[0].1
        } else if alpha >= hi {
            k[k.len() - 1].1
        } else {
            let i = k.partition_point(|&(a, _)| a <= alpha) - 1;
            let th = (alpha - k[i].0) / (k[i + 1].0 - k[i].0);
            k[i].1 + th * (k[i + 1].1 - k[i].1)
        };
        Ok(self.safety * raw)
    }

    /// `sup M = M*` over the fitted range.
    pub fn sup(&self) -> f64 {
        self.safety * self.knots.iter().fold(0.0_f64, |m, k| m.max(k.1))
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|k| k.1 == 0.0)
    }
}

/// Fits `M` for a single matrix.
pub fn fit_majorant(b: &OperatorMatrix, alpha_star: f64, alpha_grid: &[f64], safety: f64) -> Result<MajorantM> {
    fit_majorant_graded(&OperatorFamily::Constant(b.clone()), &Grading::Sequence, alpha_star, alpha_grid, safety)
}

/// Fits `M` for a family under a grading. For every grid `α` the raw value is
/// the largest `(α-α')‖B‖_{αα'}` over `α' ∈ {α_*} ∪ {grid points below α}`.
pub fn fit_majorant_graded(
    b: &OperatorFamily,
    g: &Grading,
    alpha_star: f64,
    alpha_grid: &[f64],
    safety: f64,
) -> Result<MajorantM> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidInput("majorant grid is empty".into()));
    }
    if !(safety >= 1.0) {
        return Err(Error::InvalidInput(format!("safety factor {safety} must be >= 1")));
    }
    if alpha_grid.windows(2).any(|w| w[0] >= w[1]) || !(alpha_grid[0] > alpha_star) {
        return Err(Error::InvalidInput("majorant grid must be strictly increasing and above alpha_star".into()));
    }
    let mut knots = Vec::with_capacity(alpha_grid.len());
    let mut running = 0.0_f64;
    for (i, &a) in alpha_grid.iter().enumerate() {
        let mut best = 0.0_f64;
        for &ap in std::iter::once(&alpha_star).chain(&alpha_grid[..i]) {
            best = best.max((a - ap) * b.norm_graded(g, a, ap)?);
        }
        running = running.max(best);
        knots.push((a, running));
    }
    Ok(MajorantM { alpha_star, knots, safety })
}
