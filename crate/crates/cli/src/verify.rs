//! The `verify` suite: eleven seeded checks of the library against closed
//! forms, independent oracles and its own error budgets.
//!
//! Reports hold only seeded, deterministic quantities; wall-clock times are
//! returned separately.

use std::f64::consts::E;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use scale_evolve::evolution::{integrate, oracle_evolve, oracle_evolve_backward, DiagonalGenerator, OracleOptions, PropagatorSpec};
use scale_evolve::logistic::{
    apply_operator, build_discrete_operators, continuum_bounds, evolve_hierarchy, logistic_system, lp_norm, Grid, Hierarchy,
    HierarchyKind, Kernel, LogisticOptions, LogisticParams, OperatorKind,
};
use scale_evolve::ode_system::{build_system, decaying_band_model, invariant_model, truncation_study};
use scale_evolve::ovcyannikov::{
    backward_evolve, dual_evolve, evolution_property_residual, existence_time, forward_evolve, forward_evolve_with_plan,
    stability_compare, EvolutionSystem, EvolveOptions, HorizonTable,
};
use scale_evolve::samples::{
    random_band_instance, random_hierarchy, random_logistic_params, BandInstance, BAND_ALPHA, BAND_ALPHA_PRIME, LOGISTIC_CELLS,
    LOGISTIC_SPACING,
};
use scale_evolve::{dual_pairing, operator_norm_graded, DualVector, Grading, MajorantM, ScaleVector};

use crate::error::CliError;
use crate::report::{obj, Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Criteria 1 to 11.
    All,
    /// Criteria 1 to 7.
    Core,
    /// Criteria 8 to 10.
    Logistic,
}

impl Suite {
    pub fn ids(self) -> Vec<u32> {
        match self {
            Suite::All => (1..=11).collect(),
            Suite::Core => (1..=7).collect(),
            Suite::Logistic => (8..=10).collect(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Core => "core",
            Suite::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub details: Json,
}

impl Outcome {
    pub fn to_json(&self) -> Json {
        obj().field("id", self.id as usize).field("name", self.name).field("pass", self.pass).field("details", self.details.clone()).build()
    }
}

pub fn criterion_name(id: u32) -> &'static str {
    match id {
        1 => "horizon formula",
        2 => "geometric term bound",
        3 => "oracle equivalence",
        4 => "evolution property",
        5 => "duality",
        6 => "stability",
        7 => "truncation study",
        8 => "logistic duality",
        9 => "logistic bounds",
        10 => "hierarchy oracle",
        11 => "determinism",
        _ => "unknown",
    }
}

/// Wall-clock limit of a criterion, where one is set.
pub fn runtime_limit(id: u32) -> Option<Duration> {
    match id {
        1 => Some(Duration::from_secs(1)),
        2 => Some(Duration::from_secs(60)),
        3 | 10 => Some(Duration::from_secs(300)),
        _ => None,
    }
}

const A: f64 = BAND_ALPHA;
const AP: f64 = BAND_ALPHA_PRIME;

fn opts() -> EvolveOptions {
    EvolveOptions { tol: 1e-10, ..Default::default() }
}

fn diff_norm(x: &ScaleVector, y: &ScaleVector, alpha: f64) -> f64 {
    let n = x.support_len().max(y.support_len());
    let d: Vec<f64> = (0..n).map(|i| x.get(i) - y.get(i)).collect();
    Grading::Sequence.norm(&d, alpha).expect("finite weights")
}

fn seeds(base: u64, count: u64) -> Vec<u64> {
    (0..count).map(|i| base.wrapping_mul(1000).wrapping_add(i)).collect()
}

fn instances(base: u64, count: u64, dim: usize) -> Result<Vec<(u64, BandInstance)>, CliError> {
    seeds(base, count).into_par_iter().map(|s| Ok((s, random_band_instance(s, dim)?))).collect()
}

fn horizon_formula_check(seed: u64) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0001);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let ap = rng.gen_range(0.0..2.0);
        let a = ap + rng.gen_range(0.1..2.0);
        let k = rng.gen_range(1.0..3.0);
        let m = rng.gen_range(0.01..5.0);
        let table = HorizonTable::new(k, MajorantM::constant(-1.0, a + 1.0, m)?)?;
        let got = existence_time(ap, a, &table)?;
        let want = (a - ap) / (2.0 * k * E * m);
        worst = worst.max((got - want).abs() / want);
    }
    let zero = HorizonTable::new(1.0, MajorantM::zero(-1.0, 4.0))?;
    let infinite = existence_time(0.5, 1.5, &zero)? == f64::INFINITY;
    let pass = worst <= 4.0 * f64::EPSILON && infinite;
    Ok(Outcome {
        id: 1,
        name: criterion_name(1),
        pass,
        details: obj().field("tuples", 100usize).field("max_rel_error", worst).field("zero_majorant_infinite", infinite).build(),
    })
}

fn term_bound_check(seed: u64) -> Result<Outcome, CliError> {
    let inst = instances(seed, 25, 64)?;
    let ratios: Vec<f64> = inst
        .par_iter()
        .map(|(_, i)| {
            let h = i.system.existence_time(AP, A)?;
            let r = forward_evolve(&i.system, &i.k, 0.0, 0.5 * h, A, AP, &opts())?;
            let kn = i.k.norm(A)?;
            Ok(r.term_norms.iter().enumerate().map(|(n, tn)| tn / (r.k_bound * kn * r.rho.powi(n as i32))).fold(0.0, f64::max))
        })
        .collect::<Result<_, CliError>>()?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        id: 2,
        name: criterion_name(2),
        pass: worst <= 1.1,
        details: obj().field("systems", 25usize).field("dim", 64usize).field("max_ratio", worst).field("limit", 1.1).build(),
    })
}

fn oracle_check(seed: u64) -> Result<Outcome, CliError> {
    let inst = instances(seed, 25, 64)?;
    let errs: Vec<(f64, f64)> = inst
        .par_iter()
        .map(|(_, i)| {
            let h = i.system.existence_time(AP, A)?;
            let (s, t) = (0.1, 0.1 + 0.5 * h);
            let o = OracleOptions::weighted(1e-12, &Grading::Sequence, AP, i.dim)?;
            let f = forward_evolve(&i.system, &i.k, s, t, A, AP, &opts())?;
            let want = oracle_evolve(&i.generator, &i.system.perturbation, i.dim, s, t, &i.k, &o)?;
            let ef = diff_norm(&f.value, &want, AP) / want.norm(AP)?;
            let b = backward_evolve(&i.system, &i.k, s, t, A, AP, &opts())?;
            let want = oracle_evolve_backward(&i.generator, &i.system.perturbation, i.dim, s, t, &i.k, &o)?;
            let eb = diff_norm(&b.value, &want, AP) / want.norm(AP)?;
            Ok((ef, eb))
        })
        .collect::<Result<_, CliError>>()?;
    let fwd = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    let bwd = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(Outcome {
        id: 3,
        name: criterion_name(3),
        pass: fwd <= 1e-6 && bwd <= 1e-6,
        details: obj()
            .field("systems", 25usize)
            .field("dim", 64usize)
            .field("max_forward_rel_error", fwd)
            .field("max_backward_rel_error", bwd)
            .field("limit", 1e-6)
            .build(),
    })
}

fn property_check(seed: u64) -> Result<Outcome, CliError> {
    let inst = instances(seed.wrapping_add(7), 25, 32)?;
    let ratios: Vec<f64> = inst
        .par_iter()
        .map(|(s, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(*s ^ 0x0004);
            let mid = rng.gen_range(0.7..1.3);
            let start = rng.gen_range(0.0..0.5);
            let room = i.system.existence_time(AP, A)?.min(i.system.existence_time(AP, mid)?).min(i.system.existence_time(mid, A)?);
            let span = rng.gen_range(0.2..0.6) * room;
            let r = start + rng.gen_range(0.0..1.0) * span;
            let res = evolution_property_residual(&i.system, &i.k, start, r, start + span, AP, mid, A, &opts())?;
            Ok(if res.residual == 0.0 { 0.0 } else { res.residual / res.budget })
        })
        .collect::<Result<_, CliError>>()?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        id: 4,
        name: criterion_name(4),
        pass: worst <= 3.0,
        details: obj().field("draws", 25usize).field("max_residual_over_budget", worst).field("limit", 3.0).build(),
    })
}

fn duality_check(seed: u64) -> Result<Outcome, CliError> {
    let inst = instances(seed.wrapping_add(11), 50, 32)?;
    let errs: Vec<f64> = inst
        .par_iter()
        .map(|(s, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(*s ^ 0x0005);
            let ell = DualVector::new((0..i.dim).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            let h = i.system.existence_time(AP, A)?;
            let t = rng.gen_range(0.1..0.7) * h;
            let plan = forward_evolve(&i.system, &i.k, 0.0, t, A, AP, &opts())?.plan();
            let w = forward_evolve_with_plan(&i.system, &i.k, 0.0, t, A, AP, plan, &opts())?;
            let d = dual_evolve(&i.system, &ell, 0.0, t, A, AP, &opts(), Some(plan))?;
            let lhs = dual_pairing(&w.value, &ell);
            let rhs = dual_pairing(&i.k, &d.value);
            Ok((lhs - rhs).abs() / (1.0 + lhs.abs()))
        })
        .collect::<Result<_, CliError>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        id: 5,
        name: criterion_name(5),
        pass: worst <= 1e-10,
        details: obj().field("pairs", 50usize).field("dim", 32usize).field("max_scaled_gap", worst).field("limit", 1e-10).build(),
    })
}

/// `Ã = A - ε diag(1 + n mod 3)` with the perturbation and majorant kept.
fn shifted_system(inst: &BandInstance, eps: f64) -> Result<EvolutionSystem, CliError> {
    let d: Vec<f64> = (0..inst.dim).map(|n| -inst.generator.get(n, n) + eps * (1.0 + (n % 3) as f64)).collect();
    let spec = PropagatorSpec::diagonal(DiagonalGenerator::new(d)?);
    Ok(EvolutionSystem::new(spec, inst.system.perturbation.clone(), Grading::Sequence, inst.system.horizon.majorant.clone())?)
}

fn stability_check(seed: u64) -> Result<Outcome, CliError> {
    // even seeds carry a diagonal generator
    let list: Vec<u64> = seeds(seed.wrapping_add(13), 10).into_iter().filter(|s| s % 2 == 0).collect();
    let rows: Vec<(u64, f64, f64)> = list
        .par_iter()
        .map(|&s| {
            let i = random_band_instance(s, 32)?;
            let chain = [AP, 0.8, 1.2, A];
            let span = 0.4 * i.system.existence_time(AP, 0.8)?.min(i.system.existence_time(1.2, A)?);
            let mut pts = Vec::new();
            let mut worst = 0.0_f64;
            for eps in [1e-2, 1e-3, 1e-4] {
                let r = stability_compare(&i.system, &shifted_system(&i, eps)?, &i.k, 0.0, span, chain, &opts())?;
                worst = worst.max(r.measured / (r.bound + r.budget));
                pts.push((eps.ln(), r.measured.ln()));
            }
            // least-squares slope through the three points
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
            let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            Ok((s, slope, worst))
        })
        .collect::<Result<_, CliError>>()?;
    let pass = rows.iter().all(|&(_, slope, w)| (slope - 1.0).abs() <= 0.2 && w <= 1.0);
    Ok(Outcome {
        id: 6,
        name: criterion_name(6),
        pass,
        details: obj()
            .field(
                "systems",
                Json::Arr(rows.iter().map(|&(s, slope, w)| obj().field("seed", s).field("slope", slope).field("max_measured_over_bound", w).build()).collect()),
            )
            .field("eps", vec![1e-2, 1e-3, 1e-4])
            .build(),
    })
}

fn truncation_check(_seed: u64) -> Result<Outcome, CliError> {
    let (alpha, alpha_prime) = (0.25, 0.1);
    let m = decaying_band_model(256, 0.1)?;
    let x = ScaleVector::new((0..256).map(|i| (-2.0 * alpha * i as f64).exp()).collect())?;
    let t = 0.5 * build_system(&m, alpha, alpha_prime, 1.0)?.existence_time(alpha_prime, alpha)?;
    let rep = truncation_study(&m, &x, alpha, alpha_prime, t, &[16, 32, 64, 128], &EvolveOptions::default())?;
    let e: Vec<f64> = rep.rows.iter().map(|r| r.error).collect();
    let decay = e[3] <= 1e-8 * e[0];

    let inv = invariant_model(64, 0.1)?;
    let x = ScaleVector::new(vec![1.0, -0.5, 0.25, 0.125])?;
    let t = 0.5 * build_system(&inv, alpha, alpha_prime, 1.0)?.existence_time(alpha_prime, alpha)?;
    let rep_inv = truncation_study(&inv, &x, alpha, alpha_prime, t, &[2, 4, 8, 16, 32], &EvolveOptions::default())?;
    let exact = rep_inv.rows.iter().filter(|r| r.n >= 4).all(|r| r.error == 0.0);
    Ok(Outcome {
        id: 7,
        name: criterion_name(7),
        pass: rep.monotone && decay && exact,
        details: obj()
            .field("n", vec![16usize, 32, 64, 128])
            .field("e_n", e)
            .field("monotone", rep.monotone)
            .field("e128_over_e16", rep.rows[3].error / rep.rows[0].error)
            .field("invariant_support", 4usize)
            .field("invariant_e_n", rep_inv.rows.iter().map(|r| r.error).collect::<Vec<_>>())
            .field("invariant_exact", exact)
            .build(),
    })
}

fn logistic_duality_check(seed: u64) -> Result<Outcome, CliError> {
    let errs: Vec<f64> = seeds(seed.wrapping_add(17), 50)
        .into_par_iter()
        .map(|s| {
            let p = random_logistic_params(s)?;
            let g = random_hierarchy(s ^ 0x0008, HierarchyKind::Quasiobservable, p.grid, 3, 2);
            let k = random_hierarchy(s ^ 0x0080, HierarchyKind::Correlation, p.grid, 3, 2);
            let (lg, _) = apply_operator(&p, OperatorKind::Lhat, &g)?;
            let (lk, _) = apply_operator(&p, OperatorKind::Ldelta, &k)?;
            let (lhs, rhs) = (lg.pairing(&k), g.pairing(&lk));
            Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
        })
        .collect::<Result<_, CliError>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        id: 8,
        name: criterion_name(8),
        pass: worst <= 1e-12,
        details: obj()
            .field("hierarchies", 50usize)
            .field("cells", LOGISTIC_CELLS)
            .field("n_max", 3usize)
            .field("max_rel_gap", worst)
            .field("limit", 1e-12)
            .build(),
    })
}

fn logistic_bounds_check(seed: u64) -> Result<Outcome, CliError> {
    let pairs = [(0.5, 1.0), (0.5, 2.0), (1.0, 1.5), (0.8, 2.5), (1.5, 3.0)];
    let ratios: Vec<f64> = seeds(seed.wrapping_add(19), 20)
        .into_par_iter()
        .map(|s| {
            let p = random_logistic_params(s)?;
            let ops = build_discrete_operators(&p, 3)?;
            let g = ops.basis.grading();
            let mut worst = 0.0_f64;
            for &(ap, a) in &pairs {
                worst = worst.max(operator_norm_graded(&ops.lhat1, &g, a, ap)? / continuum_bounds(&p, a, ap)?.l1);
            }
            Ok(worst)
        })
        .collect::<Result<_, CliError>>()?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);

    let grid = Grid::new(LOGISTIC_CELLS, LOGISTIC_SPACING)?;
    let m = 0.8;
    let t = 1.3;
    let p = LogisticParams::new(grid, m, Kernel::zero(&grid), Kernel::zero(&grid), 1.0, 0.0)?;
    let mut mort = 0.0_f64;
    for (i, kind) in [HierarchyKind::Quasiobservable, HierarchyKind::Correlation].into_iter().enumerate() {
        let h0 = random_hierarchy(seed.wrapping_add(i as u64), kind, grid, 2, 2);
        let r = evolve_hierarchy(&p, &h0, t, 1.0, 0.5, &LogisticOptions::default())?;
        for (n, (a, b)) in r.value.comps.iter().zip(&h0.comps).enumerate() {
            let f = (-m * n as f64 * t).exp();
            for (x, y) in a.iter().zip(b) {
                mort = mort.max((x - f * y).abs() / (f * y.abs()).max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok(Outcome {
        id: 9,
        name: criterion_name(9),
        pass: worst <= 1.0 && mort <= 1e-12,
        details: obj()
            .field("kernels", 20usize)
            .field("scale_pairs", pairs.iter().map(|&(a, b)| Json::from(vec![a, b])).collect::<Vec<_>>())
            .field("max_measured_over_bound", worst)
            .field("mortality_max_rel_error", mort)
            .build(),
    })
}

/// Dense stacked-tensor integration of `dG/dt = L̂G`, error controlled in
/// the weighted integrable norm at `alpha_prime`.
pub fn tensor_oracle(p: &LogisticParams, g0: &Hierarchy, t: f64, alpha_prime: f64) -> Result<Hierarchy, CliError> {
    let n_max = g0.n_max();
    let f = |_: f64, y: &[f64], dy: &mut [f64]| {
        let h = Hierarchy::from_stacked(g0.kind, g0.grid, n_max, y).expect("stacked length is fixed");
        let (out, _) = apply_operator(p, OperatorKind::Lhat, &h).expect("kinds match");
        dy.copy_from_slice(&out.stacked());
    };
    let weights: Vec<f64> = (0..=n_max)
        .flat_map(|n| {
            let w = p.grid.spacing.powi(n as i32) * (alpha_prime * n as f64).exp() / (1..=n).product::<usize>() as f64;
            std::iter::repeat_n(w, p.grid.cells.pow(n as u32))
        })
        .collect();
    let opts = OracleOptions { tol: 1e-11, weights: Some(weights), ..Default::default() };
    let y = integrate(f, 0.0, t, &g0.stacked(), &opts)?;
    Ok(Hierarchy::from_stacked(g0.kind, g0.grid, n_max, &y)?)
}

fn hierarchy_oracle_check(seed: u64) -> Result<Outcome, CliError> {
    let (alpha, alpha_prime) = (1.5, 0.75);
    let rows: Vec<(f64, f64)> = seeds(seed.wrapping_add(23), 3)
        .into_par_iter()
        .map(|s| {
            let p = random_logistic_params(s)?;
            let g0 = random_hierarchy(s ^ 0x0010, HierarchyKind::Quasiobservable, p.grid, 2, 2);
            let t = 0.5 * logistic_system(&p, 2, alpha, alpha_prime, 1.0, 1.1)?.existence_time(alpha_prime, alpha)?;
            let opts = LogisticOptions { evolve: EvolveOptions { tol: 1e-10, ..Default::default() }, ..Default::default() };
            let r = evolve_hierarchy(&p, &g0, t, alpha, alpha_prime, &opts)?;
            let want = tensor_oracle(&p, &g0, t, alpha_prime)?;
            let mut diff = r.value.clone();
            diff.axpy(-1.0, &want);
            Ok((t, lp_norm(&diff, alpha_prime) / lp_norm(&want, alpha_prime)))
        })
        .collect::<Result<_, CliError>>()?;
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(Outcome {
        id: 10,
        name: criterion_name(10),
        pass: worst <= 1e-5,
        details: obj()
            .field("cells", LOGISTIC_CELLS)
            .field("n_max", 2usize)
            .field("times", rows.iter().map(|r| r.0).collect::<Vec<_>>())
            .field("max_rel_error", worst)
            .field("limit", 1e-5)
            .build(),
    })
}

fn determinism_check(seed: u64) -> Result<Outcome, CliError> {
    let render = || -> Result<String, CliError> {
        let parts = [horizon_formula_check(seed)?, duality_check(seed)?, logistic_duality_check(seed)?];
        Ok(Json::Arr(parts.iter().map(Outcome::to_json).collect()).render())
    };
    let (a, b) = (render()?, render()?);
    Ok(Outcome {
        id: 11,
        name: criterion_name(11),
        pass: a == b,
        details: obj().field("rerun_criteria", vec![1usize, 5, 8]).field("bytes", a.len()).field("identical", a == b).build(),
    })
}

pub fn run_criterion(id: u32, seed: u64) -> Result<Outcome, CliError> {
    match id {
        1 => horizon_formula_check(seed),
        2 => term_bound_check(seed),
        3 => oracle_check(seed),
        4 => property_check(seed),
        5 => duality_check(seed),
        6 => stability_check(seed),
        7 => truncation_check(seed),
        8 => logistic_duality_check(seed),
        9 => logistic_bounds_check(seed),
        10 => hierarchy_oracle_check(seed),
        11 => determinism_check(seed),
        _ => Err(CliError::Usage(format!("no criterion {id}"))),
    }
}

/// Runs every criterion of the suite in order, timing each.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<(Outcome, Duration)>, CliError> {
    suite
        .ids()
        .into_iter()
        .map(|id| {
            let start = Instant::now();
            let o = run_criterion(id, seed)?;
            Ok((o, start.elapsed()))
        })
        .collect()
}

pub fn suite_json(suite: Suite, seed: u64, outcomes: &[Outcome]) -> Json {
    obj()
        .field("command", "verify")
        .field("suite", suite.name())
        .field("seed", seed)
        .field("pass", outcomes.iter().all(|o| o.pass))
        .field("criteria", Json::Arr(outcomes.iter().map(Outcome::to_json).collect()))
        .build()
}

/// One line per criterion.
pub fn table_line(o: &Outcome, elapsed: Duration) -> String {
    format!("{:>2}  {:<22} {}  ({:.2} s)", o.id, o.name, if o.pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64())
}
