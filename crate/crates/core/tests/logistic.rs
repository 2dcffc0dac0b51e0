use scale_evolve::evolution::{integrate, OracleOptions};
use scale_evolve::logistic::{
    apply_operator, build_discrete_operators, continuum_bounds, evolve_hierarchy, logistic_system, lp_norm, Grid, Hierarchy,
    HierarchyKind, Kernel, LogisticOptions, LogisticParams, OperatorKind,
};
use scale_evolve::operator_norm_graded;
use scale_evolve::ovcyannikov::EvolveOptions;
use scale_evolve::samples::{random_hierarchy, random_logistic_params, LOGISTIC_CELLS, LOGISTIC_SPACING};

#[test]
fn generators_are_dual_on_representable_data() {
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let p = random_logistic_params(seed).unwrap();
        let g = random_hierarchy(1000 + seed, HierarchyKind::Quasiobservable, p.grid, 3, 2);
        let k = random_hierarchy(2000 + seed, HierarchyKind::Correlation, p.grid, 3, 2);
        let (lg, dg) = apply_operator(&p, OperatorKind::Lhat, &g).unwrap();
        let (lk, dk) = apply_operator(&p, OperatorKind::Ldelta, &k).unwrap();
        assert_eq!(dg.dropped, 0.0);
        assert_eq!(dk.dropped, 0.0);
        let (lhs, rhs) = (lg.pairing(&k), g.pairing(&lk));
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn one_application_keeps_symmetry() {
    let p = random_logistic_params(7).unwrap();
    for (kind, hk) in [
        (OperatorKind::Lhat, HierarchyKind::Quasiobservable),
        (OperatorKind::Ldelta, HierarchyKind::Correlation),
    ] {
        let h = random_hierarchy(3, hk, p.grid, 3, 3);
        let (out, _) = apply_operator(&p, kind, &h).unwrap();
        assert!(out.asymmetry() < 1e-13);
    }
}

#[test]
fn measured_lowering_norm_respects_its_estimate() {
    let pairs = [(0.5, 1.0), (0.5, 2.0), (1.0, 1.5), (0.8, 2.5), (1.5, 3.0)];
    for seed in 0..20 {
        let p = random_logistic_params(500 + seed).unwrap();
        let ops = build_discrete_operators(&p, 3).unwrap();
        let grading = ops.basis.grading();
        for &(ap, a) in &pairs {
            let measured = operator_norm_graded(&ops.lhat1, &grading, a, ap).unwrap();
            let bound = continuum_bounds(&p, a, ap).unwrap().l1;
            assert!(measured <= bound, "seed {seed}, ({ap}, {a}): {measured} > {bound}");
        }
    }
}

#[test]
fn mortality_only_decays_exactly() {
    let grid = Grid::new(LOGISTIC_CELLS, LOGISTIC_SPACING).unwrap();
    let m = 0.8;
    let p = LogisticParams::new(grid, m, Kernel::zero(&grid), Kernel::zero(&grid), 1.0, 0.0).unwrap();
    let t = 1.3;
    for kind in [HierarchyKind::Quasiobservable, HierarchyKind::Correlation] {
        let h0 = random_hierarchy(11, kind, grid, 2, 2);
        let r = evolve_hierarchy(&p, &h0, t, 1.0, 0.5, &LogisticOptions::default()).unwrap();
        for (n, (a, b)) in r.value.comps.iter().zip(&h0.comps).enumerate() {
            let f = (-m * n as f64 * t).exp();
            for (x, y) in a.iter().zip(b) {
                assert!((x - f * y).abs() <= 1e-12 * y.abs().max(1e-300), "{kind:?} level {n}");
            }
        }
        assert_eq!(r.closure_defect, 0.0);
    }
}

fn tensor_oracle(p: &LogisticParams, g0: &Hierarchy, t: f64, alpha_prime: f64) -> Hierarchy {
    let n_max = g0.n_max();
    let f = |_: f64, y: &[f64], dy: &mut [f64]| {
        let h = Hierarchy::from_stacked(g0.kind, g0.grid, n_max, y).unwrap();
        let (out, _) = apply_operator(p, OperatorKind::Lhat, &h).unwrap();
        dy.copy_from_slice(&out.stacked());
    };
    let weights: Vec<f64> = (0..=n_max)
        .flat_map(|n| {
            let w = p.grid.spacing.powi(n as i32) * (alpha_prime * n as f64).exp() / (1..=n).product::<usize>() as f64;
            std::iter::repeat_n(w, p.grid.cells.pow(n as u32))
        })
        .collect();
    let opts = OracleOptions { tol: 1e-11, weights: Some(weights), ..Default::default() };
    let y = integrate(f, 0.0, t, &g0.stacked(), &opts).unwrap();
    Hierarchy::from_stacked(g0.kind, g0.grid, n_max, &y).unwrap()
}

#[test]
fn hierarchy_evolution_matches_tensor_oracle() {
    let (alpha, alpha_prime) = (1.5, 0.75);
    for seed in 0..3 {
        let p = random_logistic_params(40 + seed).unwrap();
        let g0 = random_hierarchy(60 + seed, HierarchyKind::Quasiobservable, p.grid, 2, 2);
        let horizon = logistic_system(&p, 2, alpha, alpha_prime, 1.0, 1.1).unwrap().existence_time(alpha_prime, alpha).unwrap();
        let t = 0.5 * horizon;
        let opts = LogisticOptions { evolve: EvolveOptions { tol: 1e-10, ..Default::default() }, ..Default::default() };
        let r = evolve_hierarchy(&p, &g0, t, alpha, alpha_prime, &opts).unwrap();
        let want = tensor_oracle(&p, &g0, t, alpha_prime);
        let mut diff = r.value.clone();
        diff.axpy(-1.0, &want);
        let rel = lp_norm(&diff, alpha_prime) / lp_norm(&want, alpha_prime);
        assert!(rel <= 1e-5, "seed {seed}: {rel:e}");
        assert!(r.closure_defect > 0.0 && r.reads_above_top);
    }
}

#[test]
fn correlation_path_is_dual_to_quasiobservable_path() {
    let (alpha, alpha_prime) = (1.5, 0.75);
    let p = random_logistic_params(90).unwrap();
    let g0 = random_hierarchy(91, HierarchyKind::Quasiobservable, p.grid, 2, 2);
    let k0 = random_hierarchy(92, HierarchyKind::Correlation, p.grid, 2, 2);
    let t = 0.3 * logistic_system(&p, 2, alpha, alpha_prime, 1.0, 1.1).unwrap().existence_time(alpha_prime, alpha).unwrap();
    let opts = LogisticOptions { evolve: EvolveOptions { tol: 1e-11, ..Default::default() }, ..Default::default() };
    let gt = evolve_hierarchy(&p, &g0, t, alpha, alpha_prime, &opts).unwrap();
    let kt = evolve_hierarchy(&p, &k0, t, alpha, alpha_prime, &opts).unwrap();
    let (lhs, rhs) = (gt.value.pairing(&k0), g0.pairing(&kt.value));
    assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
}

#[test]
fn defect_tolerance_is_enforced() {
    let p = random_logistic_params(5).unwrap();
    let g0 = random_hierarchy(6, HierarchyKind::Quasiobservable, p.grid, 2, 2);
    let opts = LogisticOptions { defect_tol: 1e-30, ..Default::default() };
    let t = 0.1 * logistic_system(&p, 2, 1.5, 0.75, 1.0, 1.1).unwrap().existence_time(0.75, 1.5).unwrap();
    assert!(matches!(
        evolve_hierarchy(&p, &g0, t, 1.5, 0.75, &opts),
        Err(scale_evolve::Error::ClosureUnsound { .. })
    ));
}

#[test]
fn competition_term_exceeds_quadratic_l0_estimate() {
    // with a constant competition kernel the diagonal of L̂₀ is -n(n-1)a on
    // level n, so its norm is max_n n(n-1)e^{-(α-α')n}; the quadratic-pole
    // estimate with constant 1/(4e²) falls short of this while 4/(e²) covers it
    let grid = Grid::new(4, 1.0).unwrap();
    let one = Kernel::from_samples(vec![1.0; 4]).unwrap();
    let p = LogisticParams::new(grid, 0.0, one, Kernel::zero(&grid), 1.0, 0.0).unwrap();
    let ops = build_discrete_operators(&p, 3).unwrap();
    let measured = operator_norm_graded(&ops.lhat0, &ops.basis.grading(), 2.0, 1.0).unwrap();
    let exact = 6.0 * (-3.0_f64).exp();
    assert!((measured - exact).abs() <= 1e-14, "{measured} vs {exact}");
    let stated = continuum_bounds(&p, 2.0, 1.0).unwrap().l0;
    assert!(measured > stated);
    assert!(measured <= 4.0 / std::f64::consts::E.powi(2));
}
