//! Grid discretization of the spatial logistic birth-and-death model:
//! quasi-observables `G`, correlation functions `k`, the operators acting on
//! them, the stability condition on the kernels and hierarchy evolution.
//!
//! Space is a periodic 1-D grid of `L` cells with spacing `h`. Integrals
//! `∫ dy` become `h Σ_y`, and configurations are multisets of cells.

mod evolve;
mod hierarchy;
mod operators;

pub use evolve::{evolve_hierarchy, logistic_system, HierarchyEvolution, LogisticOptions, LogisticSystem};
pub use hierarchy::{k_inverse, k_transform, lp_integral, lp_norm, Hierarchy, HierarchyKind, KValue, OrbitBasis};
pub use operators::{apply_operator, build_discrete_operators, ClosureDefect, DiscreteOperators, OperatorKind};

use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic grid of `cells` cells of width `spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: usize,
    pub spacing: f64,
}

impl Grid {
    pub fn new(cells: usize, spacing: f64) -> Result<Self> {
        if cells == 0 || !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidInput("grid needs at least one cell and a positive spacing".into()));
        }
        Ok(Self { cells, spacing })
    }

    /// Offset index of `x - y` on the ring.
    pub fn offset(&self, x: usize, y: usize) -> usize {
        (x + self.cells - y) % self.cells
    }

    /// Signed distance represented by an offset index, in `(-L h/2, L h/2]`.
    pub fn distance(&self, offset: usize) -> f64 {
        let j = offset.min(self.cells - offset);
        j as f64 * self.spacing
    }

    pub fn length(&self) -> f64 {
        self.cells as f64 * self.spacing
    }
}

/// Nonnegative, symmetric kernel sampled at every grid offset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel {
    values: Vec<f64>,
}

impl Kernel {
    /// Kernel from raw offset samples; symmetrized by averaging `a(j)` and
    /// `a(-j)`.
    pub fn from_samples(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("kernel needs at least one sample".into()));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!("kernel sample {i} = {} must be finite and >= 0", values[i])));
        }
        let l = values.len();
        let sym = (0..l).map(|j| 0.5 * (values[j] + values[(l - j) % l])).collect();
        Ok(Self { values: sym })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.cells] }
    }

    /// Normalized Gaussian of total mass `mass` and standard deviation `width`,
    /// rescaled so that `h Σ a = mass` on the grid.
    pub fn gaussian(grid: &Grid, mass: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(mass >= 0.0) {
            return Err(Error::InvalidInput("gaussian kernel needs width > 0 and mass >= 0".into()));
        }
        let raw: Vec<f64> = (0..grid.cells).map(|j| (-0.5 * (grid.distance(j) / width).powi(2)).exp()).collect();
        Self::normalized(grid, raw, mass)
    }

    /// Constant on `|x| ≤ radius`, with `h Σ a = mass`.
    pub fn tophat(grid: &Grid, mass: f64, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !(mass >= 0.0) {
            return Err(Error::InvalidInput("tophat kernel needs radius >= 0 and mass >= 0".into()));
        }
        let raw: Vec<f64> = (0..grid.cells).map(|j| if grid.distance(j) <= radius * (1.0 + 1e-12) { 1.0 } else { 0.0 }).collect();
        Self::normalized(grid, raw, mass)
    }

    fn normalized(grid: &Grid, raw: Vec<f64>, mass: f64) -> Result<Self> {
        let total: f64 = grid.spacing * raw.iter().sum::<f64>();
        Self::from_samples(raw.into_iter().map(|v| v * mass / total).collect())
    }

    /// Reads `offset,value` rows (header required); missing offsets are zero.
    pub fn from_csv<R: std::io::Read>(grid: &Grid, reader: R) -> Result<Self> {
        let mut values = vec![0.0; grid.cells];
        let mut rdr = csv::Reader::from_reader(reader);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidInput(format!("kernel csv: {e}")))?;
            let parse = |i: usize| -> Result<&str> {
                rec.get(i).map(str::trim).ok_or_else(|| Error::InvalidInput(format!("kernel csv row {}: missing column", line + 2)))
            };
            let j: usize = parse(0)?.parse().map_err(|e| Error::InvalidInput(format!("kernel csv row {}: {e}", line + 2)))?;
            let v: f64 = parse(1)?.parse().map_err(|e| Error::InvalidInput(format!("kernel csv row {}: {e}", line + 2)))?;
            if j >= grid.cells {
                return Err(Error::InvalidInput(format!("kernel csv row {}: offset {j} outside the grid", line + 2)));
            }
            values[j] = v;
        }
        Self::from_samples(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, offset: usize) -> f64 {
        self.values[offset]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// `h Σ a`.
    pub fn l1(&self, grid: &Grid) -> f64 {
        grid.spacing * self.values.iter().sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect() }
    }
}

/// Mortality `m`, competition kernel `a⁻`, dispersal kernel `a⁺` and the
/// constants `ϑ`, `b` of the stability condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticParams {
    pub grid: Grid,
    pub mortality: f64,
    pub a_minus: Kernel,
    pub a_plus: Kernel,
    pub theta: f64,
    pub b: f64,
}

impl LogisticParams {
    pub fn new(grid: Grid, mortality: f64, a_minus: Kernel, a_plus: Kernel, theta: f64, b: f64) -> Result<Self> {
        if !(mortality >= 0.0) || !(theta > 0.0) || !(b >= 0.0) {
            return Err(Error::InvalidInput("need mortality >= 0, theta > 0 and b >= 0".into()));
        }
        if a_minus.values.len() != grid.cells || a_plus.values.len() != grid.cells {
            return Err(Error::InvalidInput(format!("kernels must have {} samples", grid.cells)));
        }
        Ok(Self { grid, mortality, a_minus, a_plus, theta, b })
    }

    /// Lowest admissible level, `ln ϑ`.
    pub fn alpha_star(&self) -> f64 {
        self.theta.ln()
    }
}

/// Sampling controls for [`check_g`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GSampler {
    /// Largest configuration size drawn.
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GSampler {
    fn default() -> Self {
        Self { n_max: 6, samples: 2000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GReport {
    /// Smallest `Σ_x Σ_{y≠x} (a⁻ - ϑ a⁺)(x-y) + b|η|` over the samples.
    pub min_margin: f64,
    /// Configuration attaining it.
    pub worst: Vec<usize>,
    pub pass: bool,
    /// Smallest `a⁻(x) - ϑ a⁺(x) + b` over offsets, a necessary condition
    /// coming from two-point configurations.
    pub pair_min: f64,
    pub worst_pair: [usize; 2],
    pub pair_pass: bool,
    pub samples: usize,
}

/// `Σ_x Σ_{y∈η∖x} (a⁻(x-y) - ϑ a⁺(x-y)) + b|η|` for a configuration of cells.
pub fn stability_margin(p: &LogisticParams, eta: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &x) in eta.iter().enumerate() {
        for (j, &y) in eta.iter().enumerate() {
            if i != j {
                let o = p.grid.offset(x, y);
                s += p.a_minus.at(o) - p.theta * p.a_plus.at(o);
            }
        }
    }
    s + p.b * eta.len() as f64
}

/// Checks the stability condition exhaustively on two-point
/// configurations and by sampling on configurations up to `n_max` points.
pub fn check_g(p: &LogisticParams, sampler: &GSampler) -> Result<GReport> {
    if sampler.n_max < 1 {
        return Err(Error::InvalidInput("sampler n_max must be >= 1".into()));
    }
    let l = p.grid.cells;
    let (mut pair_min, mut worst_pair) = (f64::INFINITY, [0, 0]);
    for o in 0..l {
        let v = p.a_minus.at(o) - p.theta * p.a_plus.at(o) + p.b;
        if v < pair_min {
            pair_min = v;
            worst_pair = [o, 0];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let (mut min_margin, mut worst) = (f64::INFINITY, Vec::new());
    let mut consider = |eta: Vec<usize>| {
        let v = stability_margin(p, &eta);
        if v < min_margin {
            min_margin = v;
            worst = eta;
        }
    };
    // all two-point configurations first, then random ones
    for o in 0..l {
        if sampler.n_max >= 2 {
            consider(vec![o, 0]);
        } else {
            consider(vec![o]);
        }
    }
    for i in 0..sampler.samples {
        let size = 1 + i % sampler.n_max;
        consider((0..size).map(|_| rng.gen_range(0..l)).collect());
    }
    Ok(GReport {
        min_margin,
        worst,
        pass: min_margin >= 0.0,
        pair_min,
        worst_pair,
        pair_pass: pair_min >= 0.0,
        samples: l + sampler.samples,
    })
}

/// Right-hand sides of the norm estimates for the two parts of the
/// quasi-observable generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBounds {
    /// `m/(e δ) + (‖a⁻‖_∞ + ‖a⁺‖_∞)/(4 e² δ²)`, `δ = α - α'`. Not a true
    /// upper bound: a constant competition kernel on three points already
    /// exceeds it.
    pub l0: f64,
    /// `(‖a⁻‖_{L¹} e^α + ‖a⁺‖_{L¹})/(e δ)`.
    pub l1: f64,
    /// The same with `b` added to the numerator, for the shifted split.
    pub l1_shifted: f64,
}

pub fn continuum_bounds(p: &LogisticParams, alpha: f64, alpha_prime: f64) -> Result<NormBounds> {
    if !(alpha_prime < alpha) {
        return Err(Error::InvalidScalePair { alpha_prime, alpha });
    }
    let d = alpha - alpha_prime;
    let am1 = p.a_minus.l1(&p.grid);
    let ap1 = p.a_plus.l1(&p.grid);
    Ok(NormBounds {
        l0: p.mortality / (E * d) + (p.a_minus.sup() + p.a_plus.sup()) / (4.0 * E * E * d * d),
        l1: (am1 * alpha.exp() + ap1) / (E * d),
        l1_shifted: (am1 * alpha.exp() + p.b + ap1) / (E * d),
    })
}

#[cfg(test)]
mod tests;
