//! Brute-force reference solutions of finite linear systems by adaptive
//! Dormand–Prince 5(4) integration.
//!
//! This code path shares nothing with the series solver beyond the matrix
//! containers, so agreement between the two is a meaningful check.

use crate::error::{Error, Result};
use crate::scale_operator::{OperatorFamily, OperatorMatrix};
use crate::scale_space::{Grading, ScaleVector};

/// Controls for [`integrate`].
#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Target error, relative to the solution size, over the whole span.
    pub tol: f64,
    pub max_steps: usize,
    /// Weights of the ℓ¹ norm used for error control (plain ℓ¹ if absent).
    pub weights: Option<Vec<f64>>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_steps: 2_000_000, weights: None }
    }
}

impl OracleOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    /// Error control in the `alpha`-norm of `grading` on `dim` indices.
    pub fn weighted(tol: f64, grading: &Grading, alpha: f64, dim: usize) -> Result<Self> {
        Ok(Self { tol, weights: Some(grading.weights(alpha, dim)?), ..Self::default() })
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order solution minus embedded fourth-order solution.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn wnorm(x: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => x.iter().zip(w).map(|(a, b)| a.abs() * b).sum(),
        None => x.iter().map(|a| a.abs()).sum(),
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 >= t0`.
///
/// A step of size `h` is accepted when its estimated error, relative to the
/// solution size, is at most `tol · h / (t1 - t0)`, so the local errors sum
/// to roughly `tol` over the span.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], opts: &OracleOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut h = f64::NAN;
    integrate_segment(&mut f, t0, t1, y0.to_vec(), opts, &mut h)
}

/// Solution values at each of the increasing `times`, starting from `y0` at
/// `times[0]`.
pub fn integrate_at<F>(mut f: F, times: &[f64], y0: &[f64], opts: &OracleOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = vec![y0.to_vec()];
    let mut h = f64::NAN;
    for w in times.windows(2) {
        let y = integrate_segment(&mut f, w[0], w[1], out.last().unwrap().clone(), opts, &mut h)?;
        out.push(y);
    }
    Ok(out)
}

fn integrate_segment<F>(f: &mut F, t0: f64, t1: f64, mut y: Vec<f64>, opts: &OracleOptions, h_carry: &mut f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t1 >= t0) {
        return Err(Error::TimeOrderViolation { s: t0, t: t1 });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("oracle tolerance {} must be positive", opts.tol)));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y);
    }
    let n = y.len();
    let w = opts.weights.as_deref();
    if let Some(w) = w {
        if w.len() < n {
            return Err(Error::InvalidInput("oracle weights shorter than state".into()));
        }
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = t0;
    let mut h = if h_carry.is_finite() { h_carry.min(span) } else { span / 64.0 };
    let h_min = 1e-14 * t0.abs().max(t1.abs()).max(span);
    f(t, &y, &mut k[0]);
    let mut steps = 0usize;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::OracleFailure(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
        }
        steps += 1;
        let last = t + h >= t1 - 1e-15 * span;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            stage.copy_from_slice(&y);
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for (x, v) in stage.iter_mut().zip(kj) {
                        *x += h * a * v;
                    }
                }
            }
            f(t + C[s] * h, &stage, &mut k[s]);
        }
        // the seventh stage is evaluated at the fifth-order solution
        y_new.copy_from_slice(&stage);
        for e in err.iter_mut() {
            *e = 0.0;
        }
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                for (e, v) in err.iter_mut().zip(kj) {
                    *e += h * E[j] * v;
                }
            }
        }
        let scale = wnorm(&y, w).max(wnorm(&y_new, w)).max(f64::MIN_POSITIVE);
        let rel = wnorm(&err, w) / scale;
        let target = opts.tol * h / span;
        if !rel.is_finite() {
            return Err(Error::OracleFailure(format!("non-finite error estimate at t = {t}")));
        }
        if rel <= target {
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            *h_carry = h;
        }
        let fac = if rel == 0.0 { 5.0 } else { (0.9 * (target / rel).powf(0.2)).clamp(0.2, 5.0) };
        if t < t1 {
            h *= fac;
            if h < h_min {
                return Err(Error::OracleFailure(format!("step size underflow (h = {h:e}) at t = {t}")));
            }
        }
    }
    Ok(y)
}

/// `du/dt = a u` on the `n × n` truncation of `a`.
pub fn oracle_propagate(a: &OperatorMatrix, n: usize, s: f64, t: f64, u: &ScaleVector, tol: f64) -> Result<ScaleVector> {
    oracle_evolve(a, &OperatorFamily::Constant(OperatorMatrix::zeros(0)), n, s, t, u, &OracleOptions::with_tol(tol))
}

/// `du/dt = (a + b(t)) u` forward from `s` to `t` on the `n × n` truncation.
pub fn oracle_evolve(
    a: &OperatorMatrix,
    b: &OperatorFamily,
    n: usize,
    s: f64,
    t: f64,
    u: &ScaleVector,
    opts: &OracleOptions,
) -> Result<ScaleVector> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let a = a.restricted(n);
    let b = b.restricted(n);
    let y0 = u.padded(n);
    let y = integrate(
        |tt, y, dy| {
            dy.iter_mut().for_each(|v| *v = 0.0);
            a.apply_add(1.0, y, dy);
            b.apply_add_at(tt, 1.0, y, dy);
        },
        s,
        t,
        &y0,
        opts,
    )?;
    ScaleVector::new(y)
}

/// Backward problem: solves `dv/dr = -(a + b(r)) v` from `v(t) = u` down to
/// `r = s`, integrated in reversed time `σ = t - r`.
pub fn oracle_evolve_backward(
    a: &OperatorMatrix,
    b: &OperatorFamily,
    n: usize,
    s: f64,
    t: f64,
    u: &ScaleVector,
    opts: &OracleOptions,
) -> Result<ScaleVector> {
    if t < s {
        return Err(Error::TimeOrderViolation { s, t });
    }
    let a = a.restricted(n);
    let b = b.restricted(n);
    let y0 = u.padded(n);
    let y = integrate(
        |sigma, y, dy| {
            dy.iter_mut().for_each(|v| *v = 0.0);
            a.apply_add(1.0, y, dy);
            b.apply_add_at(t - sigma, 1.0, y, dy);
        },
        0.0,
        t - s,
        &y0,
        opts,
    )?;
    ScaleVector::new(y)
}
