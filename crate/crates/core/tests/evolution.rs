use scale_evolve::evolution::{oracle_evolve, oracle_evolve_backward, DiagonalGenerator, OracleOptions, PropagatorSpec};
use scale_evolve::ovcyannikov::{
    backward_evolve, dual_evolve, evolution_property_residual, forward_evolve, forward_evolve_with_plan, global_evolve,
    stability_compare, EvolutionSystem, EvolveOptions,
};
use scale_evolve::samples::{band_alpha_grid, random_band_instance, BandInstance, BAND_ALPHA as A, BAND_ALPHA_PRIME as AP};
use scale_evolve::{dual_pairing, DualVector, Grading, MajorantM, OperatorFamily, OperatorMatrix, ScaleVector};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> EvolveOptions {
    EvolveOptions { tol: 1e-10, ..Default::default() }
}

fn diff_norm(x: &ScaleVector, y: &ScaleVector, alpha: f64) -> f64 {
    let n = x.support_len().max(y.support_len());
    let d: Vec<f64> = (0..n).map(|i| x.get(i) - y.get(i)).collect();
    Grading::Sequence.norm(&d, alpha).unwrap()
}

fn oracle_opts(dim: usize) -> OracleOptions {
    OracleOptions::weighted(1e-12, &Grading::Sequence, AP, dim).unwrap()
}

#[test]
fn forward_and_backward_match_oracle() {
    for seed in 0..4 {
        let inst = random_band_instance(seed, 32).unwrap();
        let h = inst.system.existence_time(AP, A).unwrap();
        let (s, t) = (0.1, 0.1 + 0.5 * h);
        let fwd = forward_evolve(&inst.system, &inst.k, s, t, A, AP, &opts()).unwrap();
        let orc = oracle_evolve(&inst.generator, &inst.system.perturbation, inst.dim, s, t, &inst.k, &oracle_opts(inst.dim)).unwrap();
        let rel = diff_norm(&fwd.value, &orc, AP) / orc.norm(AP).unwrap();
        assert!(rel < 1e-6, "seed {seed}: forward relative error {rel}");

        let bwd = backward_evolve(&inst.system, &inst.k, s, t, A, AP, &opts()).unwrap();
        let orc = oracle_evolve_backward(&inst.generator, &inst.system.perturbation, inst.dim, s, t, &inst.k, &oracle_opts(inst.dim)).unwrap();
        let rel = diff_norm(&bwd.value, &orc, AP) / orc.norm(AP).unwrap();
        assert!(rel < 1e-6, "seed {seed}: backward relative error {rel}");
    }
}

#[test]
fn terms_obey_geometric_bound() {
    for seed in 0..4 {
        let inst = random_band_instance(seed, 48).unwrap();
        let h = inst.system.existence_time(AP, A).unwrap();
        let r = forward_evolve(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, &opts()).unwrap();
        for (n, tn) in r.term_norms.iter().enumerate() {
            assert!(*tn <= 1.1 * r.k_bound * r.rho.powi(n as i32), "seed {seed} term {n}");
        }
        let total = r.value.norm(AP).unwrap();
        assert!(total <= r.k_bound / (1.0 - r.rho) + r.total_error());
    }
}

#[test]
fn composition_through_intermediate_time() {
    let inst = random_band_instance(5, 32).unwrap();
    let mid = 1.0;
    let t_full = inst.system.existence_time(AP, A).unwrap();
    let t_lo = inst.system.existence_time(mid, A).unwrap();
    let t_hi = inst.system.existence_time(AP, mid).unwrap();
    let span = 0.5 * t_full.min(t_lo).min(t_hi);
    let res = evolution_property_residual(&inst.system, &inst.k, 0.0, 0.5 * span, span, AP, mid, A, &opts()).unwrap();
    assert!(res.residual <= 3.0 * res.budget, "{} vs {}", res.residual, res.budget);
    // r = s makes the first factor the identity
    let res = evolution_property_residual(&inst.system, &inst.k, 0.0, 0.0, span, AP, mid, A, &opts()).unwrap();
    assert!(res.residual <= res.budget);
}

#[test]
fn diagonal_composition_is_exact() {
    let spec = PropagatorSpec::diagonal(DiagonalGenerator::new(vec![0.0, 0.5, 1.0, 1.5]).unwrap());
    let sys = EvolutionSystem::new(spec, OperatorMatrix::zeros(4).into(), Grading::Sequence, MajorantM::zero(0.0, 3.0)).unwrap();
    let k = ScaleVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let res = evolution_property_residual(&sys, &k, 0.0, 0.3, 1.0, 0.5, 1.0, 2.0, &opts()).unwrap();
    assert!(res.residual <= 1e-14, "{}", res.residual);
}

#[test]
fn intermediate_levels_agree() {
    let inst = random_band_instance(3, 32).unwrap();
    let span = 0.3 * inst.system.existence_time(AP, 1.0).unwrap().min(inst.system.existence_time(1.0, A).unwrap());
    let quart = 0.75;
    let a = evolution_property_residual(&inst.system, &inst.k, 0.0, 0.4 * span, span, AP, 1.0, A, &opts()).unwrap();
    let b = evolution_property_residual(&inst.system, &inst.k, 0.0, 0.4 * span, span, AP, quart, A, &opts()).unwrap();
    assert!(a.residual <= a.budget && b.residual <= b.budget);
}

#[test]
fn pairing_identity_on_basis_vectors() {
    let inst = random_band_instance(7, 32).unwrap();
    let h = inst.system.existence_time(AP, A).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ell = DualVector::new((0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let plan = forward_evolve(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, &opts()).unwrap().plan();
    let dual = dual_evolve(&inst.system, &ell, 0.0, 0.5 * h, A, AP, &opts(), Some(plan)).unwrap();
    for j in 0..32 {
        let w = forward_evolve_with_plan(&inst.system, &ScaleVector::unit(j), 0.0, 0.5 * h, A, AP, plan, &opts()).unwrap();
        let lhs = dual_pairing(&w.value, &ell);
        let rhs = dual.value.entries()[j];
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "basis {j}: {lhs} vs {rhs}");
    }
    // the coordinate functional reads off one entry
    let e0 = dual_evolve(&inst.system, &DualVector::coordinate(0), 0.0, 0.5 * h, A, AP, &opts(), Some(plan)).unwrap();
    let w = forward_evolve_with_plan(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, plan, &opts()).unwrap();
    let via_dual: f64 = inst.k.entries().iter().zip(e0.value.entries()).map(|(a, b)| a * b).sum();
    assert!((via_dual - w.value.get(0)).abs() <= 1e-12);
    // adaptive runs agree within their budgets
    let adaptive = dual_evolve(&inst.system, &ell, 0.0, 0.5 * h, A, AP, &opts(), None).unwrap();
    let fwd = forward_evolve(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, &opts()).unwrap();
    let lhs = dual_pairing(&fwd.value, &ell);
    let rhs = dual_pairing(&inst.k, &adaptive.value);
    let budget = fwd.total_error() * ell.norm(AP).unwrap() + inst.k.norm(A).unwrap() * adaptive.total_error();
    assert!((lhs - rhs).abs() <= budget + 1e-12);
}

#[test]
fn dual_at_equal_times_is_identity() {
    let inst = random_band_instance(2, 16).unwrap();
    let ell = DualVector::new(vec![1.0, -2.0, 3.0]).unwrap();
    let r = dual_evolve(&inst.system, &ell, 0.4, 0.4, A, AP, &opts(), None).unwrap();
    assert_eq!(&r.value.entries()[..3], ell.entries());
    assert!(r.value.entries()[3..].iter().all(|x| *x == 0.0));
}

fn perturbed(inst: &BandInstance, eps: f64) -> EvolutionSystem {
    let d: Vec<f64> = (0..inst.dim).map(|n| -inst.generator.get(n, n) + eps * (1.0 + (n % 3) as f64)).collect();
    let spec = PropagatorSpec::diagonal(DiagonalGenerator::new(d).unwrap());
    EvolutionSystem::new(spec, inst.system.perturbation.clone(), Grading::Sequence, inst.system.horizon.majorant.clone()).unwrap()
}

#[test]
fn stability_is_linear_in_the_perturbation() {
    let inst = random_band_instance(0, 32).unwrap();
    let alphas = [AP, 0.8, 1.2, A];
    let span = 0.4 * inst.system.existence_time(AP, 0.8).unwrap().min(inst.system.existence_time(1.2, A).unwrap());
    let same = stability_compare(&inst.system, &inst.system, &inst.k, 0.0, span, alphas, &opts()).unwrap();
    assert_eq!((same.measured, same.bound), (0.0, 0.0));
    let mut pts = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let r = stability_compare(&inst.system, &perturbed(&inst, eps), &inst.k, 0.0, span, alphas, &opts()).unwrap();
        assert!(r.measured <= r.bound + r.budget, "eps {eps}: {} > {}", r.measured, r.bound);
        pts.push((eps.ln(), r.measured.ln()));
    }
    let slope = (pts[0].1 - pts[2].1) / (pts[0].0 - pts[2].0);
    assert!((slope - 1.0).abs() <= 0.2, "slope {slope}");
}

#[test]
fn shift_perturbation_vanishes() {
    let inst = random_band_instance(4, 24).unwrap();
    let alphas = [AP, 0.8, 1.2, A];
    let span = 0.3 * inst.system.existence_time(AP, 0.8).unwrap().min(inst.system.existence_time(1.2, A).unwrap());
    let mut last = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let shift = OperatorMatrix::shift(inst.dim, 1, eps).unwrap();
        let b2 = inst.system.perturbation.map(|m| m.add(&shift));
        let sys2 = EvolutionSystem::fit(inst.system.propagator.clone(), b2, Grading::Sequence, 0.0, &band_alpha_grid(), 1.1).unwrap();
        let r = stability_compare(&inst.system, &sys2, &inst.k, 0.0, span, alphas, &opts()).unwrap();
        assert!(r.measured < last);
        assert!(r.measured <= r.bound + r.budget);
        last = r.measured;
    }
}

fn number_system(dim: usize) -> EvolutionSystem {
    let b = OperatorMatrix::number(dim);
    EvolutionSystem::new(PropagatorSpec::identity(), b.into(), Grading::Sequence, MajorantM::constant(0.0, 20.0, (-1.0f64).exp()).unwrap()).unwrap()
}

#[test]
fn global_evolution_over_many_horizons() {
    let dim = 12;
    let sys = number_system(dim);
    let k = ScaleVector::new((0..dim).map(|n| (-8.0 * n as f64).exp()).collect()).unwrap();
    let t = 10.0 * sys.existence_time(0.5, 1.5).unwrap();
    let g = global_evolve(&sys, &k, 0.0, t, 0.5, 3.0, &opts(), None).unwrap();
    assert!(g.steps > 1);
    let want: Vec<f64> = (0..dim).map(|n| ((t - 8.0) * n as f64).exp()).collect();
    let want = ScaleVector::new(want).unwrap();
    let rel = diff_norm(&g.result.value, &want, 0.5) / want.norm(0.5).unwrap();
    assert!(rel < 1e-5, "{rel}");

    let two = global_evolve(&sys, &k, 0.0, t, 0.5, 12.0, &opts(), Some(2)).unwrap();
    let seven = global_evolve(&sys, &k, 0.0, t, 0.5, 12.0, &opts(), Some(7)).unwrap();
    let gap = diff_norm(&two.result.value, &seven.result.value, 0.5);
    assert!(gap <= two.result.total_error() + seven.result.total_error());
    assert!(gap <= 1e-8 * want.norm(0.5).unwrap(), "{gap}");
}

#[test]
fn global_without_perturbation_is_one_jump() {
    let spec = PropagatorSpec::diagonal(DiagonalGenerator::new(vec![0.0, 1.0, 2.0]).unwrap());
    let sys = EvolutionSystem::new(spec, OperatorMatrix::zeros(3).into(), Grading::Sequence, MajorantM::zero(0.0, 4.0)).unwrap();
    let k = ScaleVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    let g = global_evolve(&sys, &k, 0.0, 50.0, 0.5, 2.0, &opts(), None).unwrap();
    assert_eq!(g.steps, 1);
    assert_eq!(g.result.value.entries(), &[1.0, (-50.0f64).exp(), (-100.0f64).exp()]);
}

#[test]
fn global_rejects_missing_headroom() {
    let sys = number_system(6);
    let k = ScaleVector::unit(0);
    let err = global_evolve(&sys, &k, 0.0, 1.0, 0.5, 0.5, &opts(), None).unwrap_err();
    assert!(matches!(err, scale_evolve::Error::HorizonExhausted { .. }));
    let err = global_evolve(&sys, &k, 0.0, 1e6, 0.5, 0.6, &opts(), None).unwrap_err();
    assert!(matches!(err, scale_evolve::Error::HorizonExhausted { .. }));
}

/// `(A + B(t)) u` on the truncation.
fn generator_action(inst: &BandInstance, t: f64, u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    inst.generator.apply_add(1.0, u, &mut y);
    inst.system.perturbation.apply_add_at(t, 1.0, u, &mut y);
    y
}

#[test]
fn time_derivative_matches_generator() {
    let inst = random_band_instance(6, 24).unwrap();
    let o = EvolveOptions { tol: 1e-13, ..Default::default() };
    let t = 0.4 * inst.system.existence_time(AP, A).unwrap();
    let w = forward_evolve(&inst.system, &inst.k, 0.0, t, A, AP, &o).unwrap();
    let exact = generator_action(&inst, t, &w.value.padded(inst.dim));
    let mut errs = Vec::new();
    for h in [2e-3, 1e-3] {
        let p = forward_evolve(&inst.system, &inst.k, 0.0, t + h, A, AP, &o).unwrap();
        let m = forward_evolve(&inst.system, &inst.k, 0.0, t - h, A, AP, &o).unwrap();
        let fd: Vec<f64> = (0..inst.dim).map(|i| (p.value.get(i) - m.value.get(i)) / (2.0 * h)).collect();
        let e: Vec<f64> = fd.iter().zip(&exact).map(|(a, b)| a - b).collect();
        errs.push(Grading::Sequence.norm(&e, 0.0).unwrap());
    }
    let ratio = errs[0] / errs[1];
    assert!(ratio > 3.0 && ratio < 5.0, "errors {errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn result_respects_total_bound(seed in 0u64..1000, frac in 0.05f64..0.9) {
        let inst = random_band_instance(seed, 16).unwrap();
        let h = inst.system.existence_time(AP, A).unwrap();
        let r = forward_evolve(&inst.system, &inst.k, 0.0, frac * h, A, AP, &opts()).unwrap();
        let norm = r.value.norm(AP).unwrap();
        prop_assert!(norm <= r.k_bound * h / (h - frac * h) + r.total_error());
        for (n, tn) in r.term_norms.iter().enumerate() {
            prop_assert!(*tn <= 1.1 * r.k_bound * r.rho.powi(n as i32));
        }
    }

    #[test]
    fn forward_is_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
        let inst = random_band_instance(seed, 16).unwrap();
        let h = inst.system.existence_time(AP, A).unwrap();
        let plan = forward_evolve(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, &opts()).unwrap().plan();
        let ck = ScaleVector::new(inst.k.entries().iter().map(|x| c * x).collect()).unwrap();
        let a = forward_evolve_with_plan(&inst.system, &inst.k, 0.0, 0.5 * h, A, AP, plan, &opts()).unwrap();
        let b = forward_evolve_with_plan(&inst.system, &ck, 0.0, 0.5 * h, A, AP, plan, &opts()).unwrap();
        for i in 0..inst.dim {
            prop_assert!((c * a.value.get(i) - b.value.get(i)).abs() <= 1e-13 * (1.0 + b.value.get(i).abs()));
        }
    }
}

#[test]
fn families_are_clamped_outside_knots() {
    let m0 = OperatorMatrix::identity(2);
    let m1 = OperatorMatrix::identity(2).scaled(3.0);
    let f = OperatorFamily::linear(vec![0.0, 1.0], vec![m0, m1]).unwrap();
    assert_eq!(f.at(5.0).get(0, 0), 3.0);
    assert_eq!(f.at(-5.0).get(0, 0), 1.0);
}
