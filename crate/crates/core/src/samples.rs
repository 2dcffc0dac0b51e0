//! Seeded random test systems shared by the test suites and the `verify`
//! command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::evolution::{DiagonalGenerator, PropagatorSpec};
use crate::logistic::{Grid, Hierarchy, HierarchyKind, Kernel, LogisticParams};
use crate::ovcyannikov::EvolutionSystem;
use crate::scale_operator::{OperatorFamily, OperatorMatrix};
use crate::scale_space::{Grading, ScaleVector};

/// Level the inputs of the band instances live in.
pub const BAND_ALPHA: f64 = 1.5;
/// Level the outputs are measured in.
pub const BAND_ALPHA_PRIME: f64 = 0.5;
pub const BAND_ALPHA_STAR: f64 = 0.0;

/// Majorant grid `0.05, 0.10, …, 2.0`.
pub fn band_alpha_grid() -> Vec<f64> {
    (1..=40).map(|i| 0.05 * i as f64).collect()
}

/// A random band system with the full generator kept for oracle runs.
#[derive(Debug, Clone)]
pub struct BandInstance {
    pub system: EvolutionSystem,
    /// `A` as a matrix.
    pub generator: OperatorMatrix,
    /// Input with `‖k‖_α = 1` at [`BAND_ALPHA`].
    pub k: ScaleVector,
    pub dim: usize,
    /// Whether `B` varies in time.
    pub time_dependent: bool,
}

/// Rates `d_n ∈ [0.5, 2]`. Even seeds give a diagonal `A`, odd seeds add a
/// subdiagonal `β d_n` with `β ≤ 0.2`, which keeps the weighted log-norm
/// negative up to level 1.6. `B` has bandwidth 2 with entries in
/// `[-0.5, 0.5]`; for half of the seeds it interpolates linearly between two
/// such matrices over `[0, 1]`.
pub fn random_band_instance(seed: u64, dim: usize) -> Result<BandInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
    let dense = seed % 2 == 1;
    let generator = if dense {
        let beta = rng.gen_range(0.05..0.2);
        OperatorMatrix::band(dim, 1, 0, |n, k| if n == k { -d[k] } else { beta * d[k] })?
    } else {
        OperatorMatrix::diagonal(&d.iter().map(|x| -x).collect::<Vec<_>>())?
    };
    let propagator = if dense {
        let (spec, _) = PropagatorSpec::from_generator(&generator, &Grading::Sequence, BAND_ALPHA_STAR, 1.6, 1.0)?;
        spec
    } else {
        PropagatorSpec::diagonal(DiagonalGenerator::new(d.clone())?)
    };
    let mut band = || OperatorMatrix::band(dim, 2, 2, |_, _| rng.gen_range(-0.5..0.5));
    let time_dependent = (seed / 2) % 2 == 1;
    let perturbation = if time_dependent {
        OperatorFamily::linear(vec![0.0, 1.0], vec![band()?, band()?])?
    } else {
        OperatorFamily::Constant(band()?)
    };
    let system = EvolutionSystem::fit(propagator, perturbation, Grading::Sequence, BAND_ALPHA_STAR, &band_alpha_grid(), 1.1)?;
    let raw: Vec<f64> = (0..dim).map(|n| rng.gen_range(-1.0..1.0) * (-2.0 * BAND_ALPHA * n as f64).exp()).collect();
    let norm = Grading::Sequence.norm(&raw, BAND_ALPHA)?;
    let k = ScaleVector::new(raw.iter().map(|x| x / norm).collect())?;
    Ok(BandInstance { system, generator, k, dim, time_dependent })
}

/// Cells of the random logistic instances.
pub const LOGISTIC_CELLS: usize = 16;
/// Grid spacing of the random logistic instances.
pub const LOGISTIC_SPACING: f64 = 0.25;

/// Random logistic parameters on the standard 16-cell grid. `a⁺` is a
/// Gaussian of mass in `[0.2, 1]`; `a⁻ = ϑ a⁺` plus a second Gaussian, so the
/// stability condition holds pointwise with `b = 0`. `ϑ ∈ [1, 1.5]`.
pub fn random_logistic_params(seed: u64) -> Result<LogisticParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(LOGISTIC_CELLS, LOGISTIC_SPACING)?;
    let theta = rng.gen_range(1.0..1.5);
    let a_plus = Kernel::gaussian(&grid, rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0))?;
    let extra = Kernel::gaussian(&grid, rng.gen_range(0.1..1.0), rng.gen_range(0.2..1.0))?;
    let a_minus = Kernel::from_samples(a_plus.values().iter().zip(extra.values()).map(|(p, e)| theta * p + e).collect())?;
    LogisticParams::new(grid, rng.gen_range(0.5..1.5), a_minus, a_plus, theta, rng.gen_range(0.0..0.2))
}

/// Symmetric hierarchy with entries in `[-1, 1]` on levels `0..=support`
/// and zero above, stored up to `n_max`.
pub fn random_hierarchy(seed: u64, kind: HierarchyKind, grid: Grid, n_max: usize, support: usize) -> Hierarchy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Hierarchy::from_fn(kind, grid, n_max, |t| if t.len() <= support { rng.gen_range(-1.0..1.0) } else { 0.0 }).symmetrized()
}
