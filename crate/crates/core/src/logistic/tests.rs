use super::*;
use approx::assert_relative_eq;

fn grid(l: usize) -> Grid {
    Grid::new(l, 0.5).unwrap()
}

fn indicator(g: Grid, level: usize, n_max: usize) -> Hierarchy {
    Hierarchy::from_fn(HierarchyKind::Quasiobservable, g, n_max, |t| if t.len() == level { 1.0 } else { 0.0 })
}

fn params(g: Grid, m: f64, am: Kernel, ap: Kernel, theta: f64, b: f64) -> LogisticParams {
    LogisticParams::new(g, m, am, ap, theta, b).unwrap()
}

#[test]
fn lebesgue_poisson_of_level_indicators() {
    let g = grid(6);
    assert_relative_eq!(lp_integral(&indicator(g, 0, 3), 0.0), 1.0);
    assert_relative_eq!(lp_integral(&indicator(g, 1, 3), 0.0), 3.0, max_relative = 1e-14);
    assert_relative_eq!(lp_integral(&indicator(g, 2, 3), 0.0), 4.5, max_relative = 1e-14);
    assert_relative_eq!(lp_norm(&indicator(g, 1, 3), 1.0), 3.0 * 1f64.exp(), max_relative = 1e-14);
}

#[test]
fn k_transform_examples() {
    let g = grid(5);
    let singles = indicator(g, 1, 3);
    assert_eq!(k_transform(&singles, &[0, 2, 4]).unwrap().value, 3.0);
    let c = Hierarchy::from_fn(HierarchyKind::Quasiobservable, g, 2, |t| if t.is_empty() { 2.5 } else { 0.0 });
    for gamma in [vec![], vec![1], vec![1, 3, 3, 4]] {
        let v = k_transform(&c, &gamma).unwrap();
        assert_eq!(v.value, 2.5);
        assert!(!v.truncated);
    }
    let top = indicator(g, 2, 2);
    assert!(k_transform(&top, &[0, 1, 2]).unwrap().truncated);
}

#[test]
fn k_inverse_undoes_k_transform() {
    let g = grid(4);
    let mut x = 0.3_f64;
    let h = Hierarchy::from_fn(HierarchyKind::Quasiobservable, g, 3, |_| {
        x = (x * 7.13 + 0.17).fract();
        x - 0.5
    })
    .symmetrized();
    for eta in [vec![], vec![2], vec![0, 3], vec![1, 1, 2], vec![0, 1, 3]] {
        let back = k_inverse(|xi| k_transform(&h, xi).unwrap().value, &eta).unwrap();
        assert!((back - h.get(&eta)).abs() < 1e-12);
    }
}

#[test]
fn condition_g_examples() {
    let g = grid(8);
    let ap = Kernel::gaussian(&g, 1.0, 0.7).unwrap();
    let p = params(g, 1.0, ap.scaled(2.0), ap.clone(), 2.0, 0.0);
    let r = check_g(&p, &GSampler::default()).unwrap();
    assert!(r.pass && r.pair_pass);
    assert!(r.min_margin.abs() < 1e-12);

    let p = params(g, 1.0, Kernel::zero(&g), ap.clone(), 1.0, 0.0);
    let r = check_g(&p, &GSampler::default()).unwrap();
    assert!(!r.pass && !r.pair_pass);
    assert!(r.pair_min < 0.0 && stability_margin(&p, &r.worst_pair) < 0.0);

    let n_max = 5;
    let b = ap.sup() * (n_max - 1) as f64;
    let p = params(g, 1.0, Kernel::zero(&g), ap, 1.0, b);
    let r = check_g(&p, &GSampler { n_max, ..Default::default() }).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn dominating_competition_passes_without_b() {
    let g = grid(10);
    let ap = Kernel::tophat(&g, 1.0, 1.0).unwrap();
    let am = Kernel::gaussian(&g, 1.0, 2.0).unwrap().values().iter().zip(ap.values()).map(|(a, b)| a + 1.5 * b).collect();
    let p = params(g, 0.0, Kernel::from_samples(am).unwrap(), ap, 1.5, 0.0);
    assert!(check_g(&p, &GSampler { n_max: 8, samples: 500, seed: 3 }).unwrap().pass);
}

#[test]
fn norm_bound_examples() {
    let g = grid(4);
    let one = Kernel::from_samples(vec![1.0; 4]).unwrap();
    let p = params(g, 1.0, one.clone(), one.clone(), 1.0, 0.0);
    let b = continuum_bounds(&p, 2.0, 1.0).unwrap();
    assert_relative_eq!(b.l0, 1.0 / E + 1.0 / (2.0 * E * E), max_relative = 1e-14);
    assert!((b.l0 - 0.4355).abs() < 1e-4);
    let p0 = params(g, 0.0, one.clone(), one, 1.0, 0.0);
    let d = 0.5;
    assert_relative_eq!(continuum_bounds(&p0, 1.0, 1.0 - d).unwrap().l0, 2.0 / (4.0 * E * E * d * d), max_relative = 1e-14);
    let mut last = 0.0;
    for gap in [1.0, 0.1, 0.01, 0.001] {
        let v = continuum_bounds(&p, 1.0, 1.0 - gap).unwrap();
        assert!(v.l0 > last && v.l1.is_finite());
        last = v.l0;
    }
    assert!(matches!(continuum_bounds(&p, 1.0, 1.0), Err(Error::InvalidScalePair { .. })));
}

#[test]
fn zero_kernels_leave_only_mortality() {
    let g = grid(3);
    let p = params(g, 0.7, Kernel::zero(&g), Kernel::zero(&g), 1.0, 0.0);
    let ops = build_discrete_operators(&p, 3).unwrap();
    assert!(ops.lhat1.is_zero() && ops.ldelta1.is_zero());
    for i in 0..ops.basis.len() {
        let want = -0.7 * ops.basis.level(i) as f64;
        assert_eq!(ops.lhat0.get(i, i), want);
        assert_eq!(ops.ldelta0.get(i, i), want);
    }
    assert_eq!(ops.lhat0.nnz(), ops.basis.len() - 1);
}

#[test]
fn top_level_one_drops_the_birth_term() {
    let g = grid(6);
    let ap = Kernel::gaussian(&g, 1.0, 0.8).unwrap();
    let p = params(g, 0.4, Kernel::zero(&g), ap, 1.0, 0.0);
    let h = Hierarchy::from_fn(HierarchyKind::Quasiobservable, g, 1, |t| if t.len() == 1 { 1.0 + t[0] as f64 } else { 0.0 });
    let (out, defect) = apply_operator(&p, OperatorKind::Lhat0, &h).unwrap();
    for x in 0..6 {
        assert_relative_eq!(out.get(&[x]), -0.4 * h.get(&[x]), max_relative = 1e-15);
    }
    assert!(defect.reads_above_top);
    assert_eq!(defect.dropped, 0.0);
}

#[test]
fn orbit_matrices_match_tensor_application() {
    let g = grid(5);
    let p = params(
        g,
        0.3,
        Kernel::gaussian(&g, 0.8, 0.6).unwrap(),
        Kernel::tophat(&g, 0.5, 0.5).unwrap(),
        1.0,
        0.2,
    );
    let ops = build_discrete_operators(&p, 3).unwrap();
    let mut x = 0.1_f64;
    let coords: Vec<f64> = (0..ops.basis.len())
        .map(|_| {
            x = (x * 3.7 + 0.31).fract();
            x - 0.5
        })
        .collect();
    for (kind, m, hk) in [
        (OperatorKind::Lhat0, &ops.lhat0, HierarchyKind::Quasiobservable),
        (OperatorKind::Lhat1, &ops.lhat1, HierarchyKind::Quasiobservable),
        (OperatorKind::Ldelta0, &ops.ldelta0, HierarchyKind::Correlation),
        (OperatorKind::Ldelta1, &ops.ldelta1, HierarchyKind::Correlation),
    ] {
        let h = ops.basis.expand(hk, &coords).unwrap();
        let (out, _) = apply_operator(&p, kind, &h).unwrap();
        let mut y = vec![0.0; ops.basis.len()];
        m.apply_add(1.0, &coords, &mut y);
        let want = ops.basis.flatten(&out).unwrap();
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13, "{kind:?}: {a} vs {b}");
        }
        assert!(out.asymmetry() < 1e-13);
    }
}

#[test]
fn orbit_operators_are_mass_adjoint() {
    let g = grid(4);
    let p = params(g, 0.2, Kernel::gaussian(&g, 1.0, 0.5).unwrap(), Kernel::gaussian(&g, 0.6, 0.9).unwrap(), 1.0, 0.0);
    let ops = build_discrete_operators(&p, 3).unwrap();
    let mass = ops.basis.mass();
    for (a, d) in [(&ops.lhat0, &ops.ldelta0), (&ops.lhat1, &ops.ldelta1)] {
        for (i, j, v) in a.triplets() {
            let w = d.get(j, i);
            assert!((mass[i] * v - mass[j] * w).abs() <= 1e-14 * (mass[i] * v).abs().max(1e-300), "({i},{j})");
        }
    }
}

#[test]
fn log_norm_certifies_contraction_under_condition_g() {
    let g = grid(6);
    let ap = Kernel::gaussian(&g, 1.0, 0.6).unwrap();
    let p = params(g, 1.0, ap.scaled(2.0), ap, 2.0, 0.1);
    let ls = logistic_system(&p, 2, 1.5, 1.0, 0.1, 1.1).unwrap();
    assert_eq!(ls.k_certificate.k_bound, 1.0);
    assert!(ls.k_certificate.log_norm <= 0.0);
    assert!(ls.existence_time(1.0, 1.5).unwrap().is_finite());
}

#[test]
fn scale_levels_must_sit_above_ln_theta() {
    let g = grid(4);
    let p = params(g, 1.0, Kernel::zero(&g), Kernel::zero(&g), 2.0, 0.0);
    assert!(logistic_system(&p, 2, 1.0, 0.5, 0.1, 1.1).is_err());
    assert!(logistic_system(&p, 2, 1.0, 0.8, 0.1, 1.1).is_ok());
}

#[test]
fn zero_time_is_identity() {
    let g = grid(4);
    let ap = Kernel::gaussian(&g, 1.0, 0.6).unwrap();
    let p = params(g, 1.0, ap.scaled(2.0), ap, 1.0, 0.0);
    let h = Hierarchy::from_fn(HierarchyKind::Quasiobservable, g, 2, |t| (-(t.len() as f64)).exp());
    let r = evolve_hierarchy(&p, &h, 0.0, 1.0, 0.5, &LogisticOptions::default()).unwrap();
    assert_eq!(r.value, h);
}
