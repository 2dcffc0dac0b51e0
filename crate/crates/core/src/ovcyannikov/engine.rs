//! Discrete series scheme on a uniform time grid and its exact transpose.
//!
//! Terms obey `W_{n+1}(τ_{i+1}) = V(h) W_{n+1}(τ_i) + ∫_{τ_i}^{τ_{i+1}} V(τ_{i+1}-r) g_n(r) dr`
//! with `g_n = B W_n`. Each panel integral is Simpson's rule; the midpoint
//! value of `g_n` comes from cubic interpolation of the four nearest nodes.

use crate::evolution::{Flow, Step};
use crate::scale_operator::OperatorFamily;
use crate::scale_space::weighted_l1;

/// Maps local time `τ ∈ [0, span]` to the time at which `B` is evaluated.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Clock {
    Forward { s: f64 },
    Backward { t: f64 },
}

impl Clock {
    fn at(self, tau: f64) -> f64 {
        match self {
            Clock::Forward { s } => s + tau,
            Clock::Backward { t } => t - tau,
        }
    }
}

/// Cubic interpolation stencil for the midpoint of panel `i` of `m`.
fn stencil(i: usize, m: usize) -> [(usize, f64); 4] {
    const S: f64 = 1.0 / 16.0;
    if i == 0 {
        [(0, 5.0 * S), (1, 15.0 * S), (2, -5.0 * S), (3, S)]
    } else if i == m - 1 {
        [(m - 3, S), (m - 2, -5.0 * S), (m - 1, 15.0 * S), (m, 5.0 * S)]
    } else {
        [(i - 1, -S), (i, 9.0 * S), (i + 1, 9.0 * S), (i + 2, -S)]
    }
}

pub(crate) struct ForwardOut {
    pub value: Vec<f64>,
    pub term_norms: Vec<f64>,
    /// Partial sums at every node, when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

pub(crate) struct Scheme<'a> {
    flow: &'a Flow,
    b: &'a OperatorFamily,
    clock: Clock,
    m: usize,
    h: f64,
    vh: Step,
    vh2: Step,
    vfull: Step,
}

impl<'a> Scheme<'a> {
    pub fn new(flow: &'a Flow, b: &'a OperatorFamily, clock: Clock, span: f64, m: usize) -> Self {
        assert!(m >= 4, "the scheme needs at least four panels");
        let h = span / m as f64;
        Self { flow, b, clock, m, h, vh: flow.step(h), vh2: flow.step(h / 2.0), vfull: flow.step(span) }
    }

    fn dim(&self) -> usize {
        self.flow.dim()
    }

    /// `V(τ_i) k` at every node; the last node uses `V(span)` directly.
    fn zeroth(&self, k: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(k.to_vec());
        for i in 1..self.m {
            let next = match self.flow {
                Flow::Diagonal(_) => self.flow.step(i as f64 * self.h).apply(k),
                Flow::Dense(_) => self.vh.apply(&out[i - 1]),
            };
            out.push(next);
        }
        out.push(self.vfull.apply(k));
        out
    }

    fn perturb(&self, cur: &[Vec<f64>]) -> Vec<Vec<f64>> {
        cur.iter()
            .enumerate()
            .map(|(i, x)| {
                let mut g = vec![0.0; x.len()];
                self.b.apply_add_at(self.clock.at(i as f64 * self.h), 1.0, x, &mut g);
                g
            })
            .collect()
    }

    fn next_term(&self, cur: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let g = self.perturb(cur);
        let (h6, h23) = (self.h / 6.0, 2.0 * self.h / 3.0);
        let mut next = Vec::with_capacity(self.m + 1);
        next.push(vec![0.0; dim]);
        let mut mid = vec![0.0; dim];
        for i in 0..self.m {
            let mut tmp = next[i].clone();
            tmp.iter_mut().zip(&g[i]).for_each(|(a, b)| *a += h6 * b);
            let mut out = vec![0.0; dim];
            self.vh.apply_add(1.0, &tmp, &mut out);
            mid.iter_mut().for_each(|v| *v = 0.0);
            for (j, w) in stencil(i, self.m) {
                mid.iter_mut().zip(&g[j]).for_each(|(a, b)| *a += w * b);
            }
            self.vh2.apply_add(h23, &mid, &mut out);
            out.iter_mut().zip(&g[i + 1]).for_each(|(a, b)| *a += h6 * b);
            next.push(out);
        }
        next
    }

    /// Sum of terms `0..=n_terms` at the last node; `w_out` weighs the
    /// reported term norms.
    pub fn forward(&self, k: &[f64], n_terms: usize, w_out: &[f64], keep: bool) -> ForwardOut {
        let mut cur = self.zeroth(k);
        let mut value = cur[self.m].clone();
        let mut term_norms = vec![weighted_l1(&value, w_out)];
        let mut traj = keep.then(|| cur.clone());
        for _ in 0..n_terms {
            cur = self.next_term(&cur);
            let last = &cur[self.m];
            term_norms.push(weighted_l1(last, w_out));
            value.iter_mut().zip(last).for_each(|(a, b)| *a += b);
            if let Some(tr) = traj.as_mut() {
                for (acc, x) in tr.iter_mut().zip(&cur) {
                    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                }
            }
        }
        ForwardOut { value, term_norms, trajectory: traj }
    }

    /// Transpose of `k ↦ forward(k, n_terms).value` applied to `ell`.
    pub fn adjoint(&self, ell: &[f64], n_terms: usize) -> Vec<f64> {
        let dim = self.dim();
        let m = self.m;
        let (h6, h23) = (self.h / 6.0, 2.0 * self.h / 3.0);
        // mu[i]: sensitivity of the output with respect to the current term at node i
        let seed = |i: usize| if i == m { ell.to_vec() } else { vec![0.0; dim] };
        let mut mu: Vec<Vec<f64>> = (0..=m).map(seed).collect();
        for _ in 0..n_terms {
            // adjoint of the recursion producing the current term from g
            let mut gamma = vec![vec![0.0; dim]; m + 1];
            let mut nu = mu[m].clone();
            for i in (0..m).rev() {
                // nu holds the sensitivity of node i+1
                let q = self.vh.apply_t(&nu);
                gamma[i].iter_mut().zip(&q).for_each(|(a, b)| *a += h6 * b);
                gamma[i + 1].iter_mut().zip(&nu).for_each(|(a, b)| *a += h6 * b);
                let mut ma = vec![0.0; dim];
                self.vh2.apply_t_add(h23, &nu, &mut ma);
                for (j, w) in stencil(i, m) {
                    gamma[j].iter_mut().zip(&ma).for_each(|(a, b)| *a += w * b);
                }
                if i > 0 {
                    nu = q;
                    nu.iter_mut().zip(&mu[i]).for_each(|(a, b)| *a += b);
                }
            }
            // adjoint of g = B cur, plus the direct output seed
            mu = (0..=m)
                .map(|i| {
                    let mut x = seed(i);
                    self.b.transpose_apply_add_at(self.clock.at(i as f64 * self.h), 1.0, &gamma[i], &mut x);
                    x
                })
                .collect();
        }
        // adjoint of the zeroth term
        let mut out = self.vfull.apply_t(&mu[m]);
        match self.flow {
            Flow::Diagonal(_) => {
                for (i, x) in mu.iter().enumerate().take(m) {
                    self.flow.step(i as f64 * self.h).apply_t_add(1.0, x, &mut out);
                }
            }
            Flow::Dense(_) => {
                let mut acc = mu[m - 1].clone();
                for i in (0..m - 1).rev() {
                    let mut next = self.vh.apply_t(&acc);
                    next.iter_mut().zip(&mu[i]).for_each(|(a, b)| *a += b);
                    acc = next;
                }
                out.iter_mut().zip(&acc).for_each(|(a, b)| *a += b);
            }
        }
        out
    }
}
