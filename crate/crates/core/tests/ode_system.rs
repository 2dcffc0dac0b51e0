use scale_evolve::evolution::{oracle_evolve, OracleOptions};
use scale_evolve::ode_system::{build_system, decaying_band_model, invariant_model, solve_system, truncation_study, OdeModel};
use scale_evolve::ovcyannikov::EvolveOptions;
use scale_evolve::{Grading, OperatorFamily, OperatorMatrix, ScaleVector};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.25;
const ALPHA_PRIME: f64 = 0.1;

fn geometric(n: usize) -> ScaleVector {
    ScaleVector::new((0..n).map(|i| (-2.0 * ALPHA * i as f64).exp()).collect()).unwrap()
}

fn rel_err(x: &ScaleVector, y: &ScaleVector, alpha: f64) -> f64 {
    let n = x.support_len().max(y.support_len());
    let d: Vec<f64> = (0..n).map(|i| x.get(i) - y.get(i)).collect();
    Grading::Sequence.norm(&d, alpha).unwrap() / y.norm(alpha).unwrap()
}

fn oracle(m: &OdeModel, a: &OperatorMatrix, x: &ScaleVector, t: f64) -> ScaleVector {
    let zero = OperatorFamily::Constant(OperatorMatrix::zeros(0));
    let o = OracleOptions::weighted(1e-12, &Grading::Sequence, ALPHA_PRIME, m.dim()).unwrap();
    oracle_evolve(a, &zero, m.dim(), 0.0, t, x, &o).unwrap()
}

#[test]
fn random_model_matches_oracle() {
    let n = 48;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * rng.gen_range(0.5..1.5)).collect();
    let b = OperatorMatrix::band(n, 1, 0, |r, k| if r == k { 0.0 } else { 0.1 * d[k] }).unwrap();
    let c = OperatorMatrix::band(n, 2, 2, |_, _| rng.gen_range(-0.1..0.1)).unwrap();
    let m = OdeModel::new(d, b, c, 0.0, (1..=20).map(|i| 0.05 * i as f64).collect(), 1.1).unwrap();
    let x = geometric(n);
    let opts = EvolveOptions { tol: 1e-10, ..Default::default() };
    let t = 0.5 * build_system(&m, ALPHA, ALPHA_PRIME, 1.0).unwrap().existence_time(ALPHA_PRIME, ALPHA).unwrap();
    let r = solve_system(&m, &x, ALPHA, ALPHA_PRIME, t, &opts).unwrap();
    let want = oracle(&m, &m.full_matrix(), &x, t);
    assert!(rel_err(&r.value, &want, ALPHA_PRIME) < 1e-6);

    let unperturbed = OdeModel { c: OperatorMatrix::zeros(n), ..m.clone() };
    let r = solve_system(&unperturbed, &x, ALPHA, ALPHA_PRIME, 2.0, &opts).unwrap();
    let want = oracle(&unperturbed, &unperturbed.generator(), &x, 2.0);
    assert!(rel_err(&r.value, &want, ALPHA_PRIME) < 1e-9);
}

#[test]
fn truncation_errors_decay() {
    let m = decaying_band_model(256, 0.1).unwrap();
    let x = geometric(256);
    let t = 0.5 * build_system(&m, ALPHA, ALPHA_PRIME, 1.0).unwrap().existence_time(ALPHA_PRIME, ALPHA).unwrap();
    let rep = truncation_study(&m, &x, ALPHA, ALPHA_PRIME, t, &[16, 32, 64, 128], &EvolveOptions::default()).unwrap();
    assert!(rep.monotone, "{:?}", rep.rows);
    assert!(rep.rows[3].error <= 1e-8 * rep.rows[0].error, "{:?}", rep.rows);
    // columns decay exponentially, so doubling N at least halves the error
    assert!(rep.rows[1].error <= 0.5 * rep.rows[0].error);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("N,e_N\n16,"));
}

#[test]
fn invariant_case_is_exact_beyond_support() {
    let m = invariant_model(64, 0.1).unwrap();
    let x = ScaleVector::new(vec![1.0, -0.5, 0.25, 0.125]).unwrap();
    let t = 0.5 * build_system(&m, ALPHA, ALPHA_PRIME, 1.0).unwrap().existence_time(ALPHA_PRIME, ALPHA).unwrap();
    let rep = truncation_study(&m, &x, ALPHA, ALPHA_PRIME, t, &[2, 4, 8, 16, 32], &EvolveOptions::default()).unwrap();
    assert!(rep.rows[0].error > 0.0);
    assert!(rep.rows[1..].iter().all(|r| r.error == 0.0), "{:?}", rep.rows);
}

#[test]
fn solution_satisfies_the_equation() {
    let m = decaying_band_model(40, 0.1).unwrap();
    let x = geometric(40);
    let opts = EvolveOptions { tol: 1e-13, ..Default::default() };
    let t = 0.4 * build_system(&m, ALPHA, ALPHA_PRIME, 1.0).unwrap().existence_time(ALPHA_PRIME, ALPHA).unwrap();
    let u = solve_system(&m, &x, ALPHA, ALPHA_PRIME, t, &opts).unwrap();
    let a = m.full_matrix();
    let mut exact = vec![0.0; 40];
    a.apply_add(1.0, &u.value.padded(40), &mut exact);
    let mut errs = Vec::new();
    for h in [4e-3, 2e-3] {
        let p = solve_system(&m, &x, ALPHA, ALPHA_PRIME, t + h, &opts).unwrap();
        let q = solve_system(&m, &x, ALPHA, ALPHA_PRIME, t - h, &opts).unwrap();
        let e: Vec<f64> = (0..40).map(|i| (p.value.get(i) - q.value.get(i)) / (2.0 * h) - exact[i]).collect();
        errs.push(Grading::Sequence.norm(&e, 0.0).unwrap());
    }
    let ratio = errs[0] / errs[1];
    assert!(ratio > 3.0 && ratio < 5.0, "{errs:?}");
}
