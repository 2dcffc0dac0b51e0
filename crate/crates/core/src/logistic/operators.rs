//! The quasi-observable operators `L̂₀`, `L̂₁` and the correlation operators
//! `L^Δ₀`, `L^Δ₁`, both as maps on full tensors and as sparse matrices in
//! orbit coordinates.
//!
//! Levels above the top of the hierarchy are not stored: terms that would
//! write there are dropped and measured as a closure defect, and terms that
//! would read from there use zero.

use serde::Serialize;

use super::hierarchy::{tuple_of, Hierarchy, HierarchyKind, OrbitBasis};
use super::LogisticParams;
use crate::error::{Error, Result};
use crate::scale_operator::OperatorMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Lhat0,
    Lhat1,
    /// `L̂₀ - b|η|`.
    Lhat0Shifted,
    /// `L̂₁ + b|η|`.
    Lhat1Shifted,
    /// `L̂₀ + L̂₁`.
    Lhat,
    Ldelta0,
    Ldelta1,
    /// `L^Δ₀ + L^Δ₁`.
    Ldelta,
}

impl OperatorKind {
    fn parts(self) -> (bool, bool, bool, bool, f64) {
        // (lhat0, lhat1, ldelta0, ldelta1, coefficient of b|η|)
        match self {
            Self::Lhat0 => (true, false, false, false, 0.0),
            Self::Lhat1 => (false, true, false, false, 0.0),
            Self::Lhat0Shifted => (true, false, false, false, -1.0),
            Self::Lhat1Shifted => (false, true, false, false, 1.0),
            Self::Lhat => (true, true, false, false, 0.0),
            Self::Ldelta0 => (false, false, true, false, 0.0),
            Self::Ldelta1 => (false, false, false, true, 0.0),
            Self::Ldelta => (false, false, true, true, 0.0),
        }
    }

    fn acts_on(self) -> HierarchyKind {
        match self {
            Self::Ldelta0 | Self::Ldelta1 | Self::Ldelta => HierarchyKind::Correlation,
            _ => HierarchyKind::Quasiobservable,
        }
    }
}

/// What a single application lost to the finite top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureDefect {
    /// Size of the discarded output one level above the top: its
    /// Lebesgue–Poisson integral of `|·|` for quasi-observables, its sup for
    /// correlation functions.
    pub dropped: f64,
    /// The operator has nonzero terms that read one level above the top,
    /// where zero was used.
    pub reads_above_top: bool,
}

/// `m n + Σ_{i≠j} a⁻(x_i - x_j)`.
fn loss_rate(p: &LogisticParams, eta: &[usize]) -> f64 {
    let mut s = p.mortality * eta.len() as f64;
    for (i, &x) in eta.iter().enumerate() {
        for (j, &y) in eta.iter().enumerate() {
            if i != j {
                s += p.a_minus.at(p.grid.offset(x, y));
            }
        }
    }
    s
}

fn without(eta: &[usize], i: usize) -> Vec<usize> {
    let mut v = eta.to_vec();
    v.remove(i);
    v
}

/// Applies `kind` to the tensors of `g` directly, tuple by tuple.
pub fn apply_operator(p: &LogisticParams, kind: OperatorKind, g: &Hierarchy) -> Result<(Hierarchy, ClosureDefect)> {
    if g.kind != kind.acts_on() {
        return Err(Error::InvalidInput(format!("{kind:?} does not act on a {:?} hierarchy", g.kind)));
    }
    if g.grid != p.grid {
        return Err(Error::InvalidInput("hierarchy grid differs from the model grid".into()));
    }
    let (l0, l1, d0, d1, bcoef) = kind.parts();
    let l = p.grid.cells;
    let h = p.grid.spacing;
    let top = g.n_max();
    let ap = |o: usize| p.a_plus.at(o);
    let am = |o: usize| p.a_minus.at(o);
    let eval = |eta: &[usize]| -> f64 {
        let n = eta.len();
        let mut v = 0.0;
        if l0 || d0 {
            v -= loss_rate(p, eta) * g.get(eta);
        }
        if bcoef != 0.0 {
            v += bcoef * p.b * n as f64 * g.get(eta);
        }
        let mut ext = eta.to_vec();
        ext.push(0);
        for (i, &x) in eta.iter().enumerate() {
            if l0 && n < top {
                // Σ_y h a⁺(x - y) G(η ∪ y)
                for y in 0..l {
                    ext[n] = y;
                    v += h * ap(p.grid.offset(x, y)) * g.get(&ext);
                }
            }
            if l1 || d0 {
                let rest = without(eta, i);
                let k_rest = g.get(&rest);
                for (j, &z) in eta.iter().enumerate() {
                    if j != i {
                        let o = p.grid.offset(x, z);
                        v += if l1 { -am(o) } else { ap(o) } * k_rest;
                    }
                }
            }
            if d1 && n < top {
                // -Σ_y h a⁻(x - y) k(η ∪ y)
                for y in 0..l {
                    ext[n] = y;
                    v -= h * am(p.grid.offset(x, y)) * g.get(&ext);
                }
            }
            if l1 || d1 {
                let mut moved = eta.to_vec();
                for y in 0..l {
                    moved[i] = y;
                    v += h * ap(p.grid.offset(x, y)) * g.get(&moved);
                }
            }
        }
        v
    };
    let out = Hierarchy::from_fn(g.kind, g.grid, top, |eta| eval(eta));

    // output one level above the top, written only by the lowering-read terms
    let mut dropped = 0.0_f64;
    if (l1 || d0) && g.comps[top].iter().any(|v| *v != 0.0) {
        let n = top + 1;
        let weight = h.powi(n as i32) / (1..=n).map(|i| i as f64).product::<f64>();
        for idx in 0..l.pow(n as u32) {
            let eta = tuple_of(l, n, idx);
            let mut v = 0.0;
            for (i, &x) in eta.iter().enumerate() {
                let rest = g.get(&without(&eta, i));
                for (j, &z) in eta.iter().enumerate() {
                    if j != i {
                        let o = p.grid.offset(x, z);
                        v += if l1 { -am(o) } else { ap(o) } * rest;
                    }
                }
            }
            dropped = match g.kind {
                HierarchyKind::Quasiobservable => dropped + weight * v.abs(),
                HierarchyKind::Correlation => dropped.max(v.abs()),
            };
        }
    }
    let reads_above_top = (l0 && p.a_plus.sup() > 0.0) || (d1 && p.a_minus.sup() > 0.0);
    Ok((out, ClosureDefect { dropped, reads_above_top }))
}

/// Sparse orbit-coordinate matrices of the four operators on levels
/// `0..=n_max`.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub basis: OrbitBasis,
    pub lhat0: OperatorMatrix,
    pub lhat1: OperatorMatrix,
    pub ldelta0: OperatorMatrix,
    pub ldelta1: OperatorMatrix,
    b: f64,
}

impl DiscreteOperators {
    /// `b |η|` as a diagonal matrix.
    fn number_term(&self) -> OperatorMatrix {
        let d: Vec<f64> = (0..self.basis.len()).map(|i| self.b * self.basis.level(i) as f64).collect();
        OperatorMatrix::diagonal(&d).expect("finite")
    }

    /// `L̂₀ - b|η|`, the generator of the unperturbed part.
    pub fn lhat0_shifted(&self) -> OperatorMatrix {
        self.lhat0.combine(1.0, &self.number_term(), -1.0)
    }

    /// `L̂₁ + b|η|`, the perturbation.
    pub fn lhat1_shifted(&self) -> OperatorMatrix {
        self.lhat1.add(&self.number_term())
    }

    pub fn lhat(&self) -> OperatorMatrix {
        self.lhat0.add(&self.lhat1)
    }

    pub fn ldelta(&self) -> OperatorMatrix {
        self.ldelta0.add(&self.ldelta1)
    }
}

/// Row `η` of an operator as `(tuple, coefficient)` pairs.
fn row_terms(p: &LogisticParams, kind: OperatorKind, eta: &[usize], n_max: usize, emit: &mut impl FnMut(&[usize], f64)) {
    let l = p.grid.cells;
    let h = p.grid.spacing;
    let n = eta.len();
    let (l0, l1, d0, d1, _) = kind.parts();
    if l0 || d0 {
        emit(eta, -loss_rate(p, eta));
    }
    let mut ext = eta.to_vec();
    ext.push(0);
    for (i, &x) in eta.iter().enumerate() {
        let rest = without(eta, i);
        if (l0 || d1) && n < n_max {
            for y in 0..l {
                ext[n] = y;
                let o = p.grid.offset(x, y);
                let c = if l0 { h * p.a_plus.at(o) } else { -h * p.a_minus.at(o) };
                emit(&ext, c);
            }
        }
        if l1 || d0 {
            for (j, &z) in eta.iter().enumerate() {
                if j != i {
                    let o = p.grid.offset(x, z);
                    emit(&rest, if l1 { -p.a_minus.at(o) } else { p.a_plus.at(o) });
                }
            }
        }
        if l1 || d1 {
            let mut moved = eta.to_vec();
            for y in 0..l {
                moved[i] = y;
                emit(&moved, h * p.a_plus.at(p.grid.offset(x, y)));
            }
        }
    }
}

fn orbit_matrix(p: &LogisticParams, kind: OperatorKind, basis: &OrbitBasis) -> Result<OperatorMatrix> {
    let mut trip = Vec::new();
    let mut row: Vec<(usize, f64)> = Vec::new();
    for o in 0..basis.len() {
        row.clear();
        row_terms(p, kind, basis.rep(o), basis.n_max, &mut |t, c| {
            if let Some(j) = basis.index_of(t) {
                row.push((j, c));
            }
        });
        row.sort_by_key(|e| e.0);
        let mut i = 0;
        while i < row.len() {
            let col = row[i].0;
            let mut s = 0.0;
            while i < row.len() && row[i].0 == col {
                s += row[i].1;
                i += 1;
            }
            trip.push((o, col, s));
        }
    }
    let m = OperatorMatrix::from_triplets(trip)?;
    // keep every coordinate as a column so that dimensions line up
    Ok(m.add(&OperatorMatrix::zeros(basis.len())))
}

/// Orbit-coordinate matrices on levels `0..=n_max`.
pub fn build_discrete_operators(p: &LogisticParams, n_max: usize) -> Result<DiscreteOperators> {
    if n_max < 1 {
        return Err(Error::InvalidInput("n_max must be >= 1".into()));
    }
    let basis = OrbitBasis::new(p.grid, n_max)?;
    Ok(DiscreteOperators {
        lhat0: orbit_matrix(p, OperatorKind::Lhat0, &basis)?,
        lhat1: orbit_matrix(p, OperatorKind::Lhat1, &basis)?,
        ldelta0: orbit_matrix(p, OperatorKind::Ldelta0, &basis)?,
        ldelta1: orbit_matrix(p, OperatorKind::Ldelta1, &basis)?,
        basis,
        b: p.b,
    })
}
