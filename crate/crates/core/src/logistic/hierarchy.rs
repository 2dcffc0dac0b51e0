//! Finite hierarchies of symmetric functions on grid configurations.

use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};
use crate::scale_space::Grading;

/// Whether a hierarchy holds a quasi-observable or a correlation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyKind {
    Quasiobservable,
    Correlation,
}

/// Components `0..=n_max`; component `n` is the full tensor over `gridⁿ`,
/// stored row-major (first coordinate slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub kind: HierarchyKind,
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

/// Row-major index of a tuple of cells.
pub(crate) fn tuple_index(cells: usize, tuple: &[usize]) -> usize {
    tuple.iter().fold(0, |acc, &x| acc * cells + x)
}

/// Tuple with row-major index `idx` at level `n`.
pub(crate) fn tuple_of(cells: usize, n: usize, mut idx: usize) -> Vec<usize> {
    let mut t = vec![0; n];
    for slot in t.iter_mut().rev() {
        *slot = idx % cells;
        idx /= cells;
    }
    t
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

impl Hierarchy {
    pub fn zeros(kind: HierarchyKind, grid: Grid, n_max: usize) -> Self {
        let comps = (0..=n_max).map(|n| vec![0.0; grid.cells.pow(n as u32)]).collect();
        Self { kind, grid, comps }
    }

    pub fn new(kind: HierarchyKind, grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        for (n, c) in comps.iter().enumerate() {
            if c.len() != grid.cells.pow(n as u32) {
                return Err(Error::InvalidInput(format!("component {n} needs {} entries, got {}", grid.cells.pow(n as u32), c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("component {n} has non-finite entries")));
            }
        }
        if comps.is_empty() {
            return Err(Error::InvalidInput("hierarchy needs at least the empty-set component".into()));
        }
        Ok(Self { kind, grid, comps })
    }

    /// Builds every component from a function of the tuple.
    pub fn from_fn(kind: HierarchyKind, grid: Grid, n_max: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let comps = (0..=n_max)
            .map(|n| (0..grid.cells.pow(n as u32)).map(|i| f(&tuple_of(grid.cells, n, i))).collect())
            .collect();
        Self { kind, grid, comps }
    }

    pub fn n_max(&self) -> usize {
        self.comps.len() - 1
    }

    /// Value at a tuple; zero above the top level.
    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.comps.get(tuple.len()).map_or(0.0, |c| c[tuple_index(self.grid.cells, tuple)])
    }

    pub fn set(&mut self, tuple: &[usize], v: f64) {
        let i = tuple_index(self.grid.cells, tuple);
        self.comps[tuple.len()][i] = v;
    }

    /// Average over coordinate permutations.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        let l = self.grid.cells;
        for (n, comp) in self.comps.iter().enumerate() {
            let perms = permutations(n);
            for (i, slot) in out.comps[n].iter_mut().enumerate() {
                let t = tuple_of(l, n, i);
                let s: f64 = perms.iter().map(|p| comp[tuple_index(l, &p.iter().map(|&k| t[k]).collect::<Vec<_>>())]).sum();
                *slot = s / perms.len() as f64;
            }
        }
        out
    }

    /// Largest `|G(x) - G(σx)|` over all tuples and transpositions `σ`.
    pub fn asymmetry(&self) -> f64 {
        let l = self.grid.cells;
        let mut worst = 0.0_f64;
        for (n, comp) in self.comps.iter().enumerate() {
            for (i, v) in comp.iter().enumerate() {
                let t = tuple_of(l, n, i);
                for a in 0..n {
                    for b in a + 1..n {
                        let mut s = t.clone();
                        s.swap(a, b);
                        worst = worst.max((v - comp[tuple_index(l, &s)]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `⟨G, k⟩ = Σ_n (hⁿ/n!) Σ_tuples G k`.
    pub fn pairing(&self, other: &Hierarchy) -> f64 {
        let h = self.grid.spacing;
        self.comps
            .iter()
            .zip(&other.comps)
            .enumerate()
            .map(|(n, (a, b))| h.powi(n as i32) / factorial(n) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// Largest absolute entry per level.
    pub fn level_sup(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect()
    }

    /// `sup |k(η)| e^{-α|η|}`.
    pub fn correlation_norm(&self, alpha: f64) -> f64 {
        self.level_sup().iter().enumerate().map(|(n, s)| s * (-alpha * n as f64).exp()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, c: f64, other: &Hierarchy) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
    }

    /// All components concatenated, level by level.
    pub fn stacked(&self) -> Vec<f64> {
        self.comps.concat()
    }

    pub fn from_stacked(kind: HierarchyKind, grid: Grid, n_max: usize, data: &[f64]) -> Result<Self> {
        let mut comps = Vec::with_capacity(n_max + 1);
        let mut at = 0;
        for n in 0..=n_max {
            let len = grid.cells.pow(n as u32);
            let slice = data.get(at..at + len).ok_or_else(|| Error::InvalidInput("stacked data too short".into()))?;
            comps.push(slice.to_vec());
            at += len;
        }
        Self::new(kind, grid, comps)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `Σ_n (hⁿ/n!) e^{αn} Σ_tuples G`; `alpha = 0` is the plain Lebesgue–Poisson integral.
pub fn lp_integral(g: &Hierarchy, alpha: f64) -> f64 {
    let h = g.grid.spacing;
    g.comps
        .iter()
        .enumerate()
        .map(|(n, c)| (h.powi(n as i32) / factorial(n)) * (alpha * n as f64).exp() * c.iter().sum::<f64>())
        .sum()
}

/// `Σ_n (hⁿ/n!) e^{αn} Σ_tuples |G|`, the weighted integrable norm.
pub fn lp_norm(g: &Hierarchy, alpha: f64) -> f64 {
    let h = g.grid.spacing;
    g.comps
        .iter()
        .enumerate()
        .map(|(n, c)| (h.powi(n as i32) / factorial(n)) * (alpha * n as f64).exp() * c.iter().map(|v| v.abs()).sum::<f64>())
        .sum()
}

/// Value of a combinatorial transform together with a truncation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KValue {
    pub value: f64,
    /// `γ` has subsets above the top level while the top level of `G` is
    /// nonzero, so the value may miss contributions.
    pub truncated: bool,
}

/// Largest configuration the subset enumeration accepts.
pub const MAX_SUBSET_POINTS: usize = 24;

/// `(KG)(γ) = Σ_{η ⊆ γ} G(η)` over sub-configurations (points of `γ` are
/// distinguished by position).
pub fn k_transform(g: &Hierarchy, gamma: &[usize]) -> Result<KValue> {
    if gamma.len() > MAX_SUBSET_POINTS {
        return Err(Error::InvalidInput(format!("configurations are limited to {MAX_SUBSET_POINTS} points")));
    }
    let n = gamma.len();
    let mut value = 0.0;
    let mut sub = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > g.n_max() {
            continue;
        }
        sub.clear();
        sub.extend((0..n).filter(|i| mask >> i & 1 == 1).map(|i| gamma[i]));
        value += g.get(&sub);
    }
    let top_nonzero = g.comps[g.n_max()].iter().any(|v| *v != 0.0);
    Ok(KValue { value, truncated: n > g.n_max() && top_nonzero })
}

/// `(K⁻¹F)(η) = Σ_{ξ ⊆ η} (-1)^{|η∖ξ|} F(ξ)`.
pub fn k_inverse(f: impl Fn(&[usize]) -> f64, eta: &[usize]) -> Result<f64> {
    if eta.len() > MAX_SUBSET_POINTS {
        return Err(Error::InvalidInput(format!("configurations are limited to {MAX_SUBSET_POINTS} points")));
    }
    let n = eta.len();
    let mut sub = Vec::with_capacity(n);
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        sub.clear();
        sub.extend((0..n).filter(|i| mask >> i & 1 == 1).map(|i| eta[i]));
        let sign = if (n - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * f(&sub);
    }
    Ok(total)
}

/// Multisets of cells up to `n_max` points, one coordinate per multiset.
/// Weights carry the Lebesgue–Poisson mass `hⁿ/∏ mult!` so that weighted
/// `ℓ¹` norms of orbit coordinates equal the integrable norm of the
/// symmetric function.
#[derive(Debug, Clone)]
pub struct OrbitBasis {
    pub grid: Grid,
    pub n_max: usize,
    /// Sorted representative tuple per coordinate.
    reps: Vec<Vec<usize>>,
    /// First coordinate of each level, plus the total at the end.
    offsets: Vec<usize>,
    /// Tuple index → local orbit index, per level.
    lookup: Vec<Vec<u32>>,
    mass: Vec<f64>,
}

impl OrbitBasis {
    pub fn new(grid: Grid, n_max: usize) -> Result<Self> {
        let l = grid.cells;
        let size = (l as f64).powi(n_max as i32);
        if size > 5e7 {
            return Err(Error::InvalidInput(format!("{l} cells with {n_max} points is too large for full tensors")));
        }
        let mut reps = Vec::new();
        let mut offsets = vec![0];
        let mut lookup = Vec::with_capacity(n_max + 1);
        let mut mass = Vec::new();
        for n in 0..=n_max {
            let mut local: Vec<Vec<usize>> = Vec::new();
            let mut cur = vec![0usize; n];
            loop {
                local.push(cur.clone());
                // next nondecreasing tuple
                let mut i = n;
                while i > 0 && cur[i - 1] == l - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                cur[i - 1] += 1;
                let v = cur[i - 1];
                cur[i..].iter_mut().for_each(|x| *x = v);
            }
            let mut table = vec![0u32; l.pow(n as u32)];
            for (idx, slot) in table.iter_mut().enumerate() {
                let mut t = tuple_of(l, n, idx);
                t.sort_unstable();
                *slot = local.binary_search(&t).expect("sorted tuples are enumerated") as u32;
            }
            for t in &local {
                let mut m = grid.spacing.powi(n as i32);
                let mut run = 1;
                for w in t.windows(2) {
                    if w[0] == w[1] {
                        run += 1;
                        m /= run as f64;
                    } else {
                        run = 1;
                    }
                }
                mass.push(m);
            }
            reps.extend(local);
            offsets.push(reps.len());
            lookup.push(table);
        }
        Ok(Self { grid, n_max, reps, offsets, lookup, mass })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// Coordinates per level.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn level_range(&self, n: usize) -> std::ops::Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    pub fn rep(&self, i: usize) -> &[usize] {
        &self.reps[i]
    }

    pub fn level(&self, i: usize) -> usize {
        self.reps[i].len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Coordinate of the multiset of `tuple`, if its level is stored.
    pub fn index_of(&self, tuple: &[usize]) -> Option<usize> {
        let n = tuple.len();
        (n <= self.n_max).then(|| self.offsets[n] + self.lookup[n][tuple_index(self.grid.cells, tuple)] as usize)
    }

    pub fn grading(&self) -> Grading {
        let degree = self.reps.iter().map(|r| r.len() as u32).collect();
        Grading::graded(degree, self.mass.clone()).expect("orbit masses are positive")
    }

    /// Orbit coordinates `G(rep)` of a symmetric hierarchy.
    pub fn flatten(&self, h: &Hierarchy) -> Result<Vec<f64>> {
        if h.n_max() != self.n_max || h.grid != self.grid {
            return Err(Error::InvalidInput("hierarchy does not match the orbit basis".into()));
        }
        Ok(self.reps.iter().map(|r| h.get(r)).collect())
    }

    /// Symmetric hierarchy with the given orbit coordinates.
    pub fn expand(&self, kind: HierarchyKind, coords: &[f64]) -> Result<Hierarchy> {
        if coords.len() != self.len() {
            return Err(Error::InvalidInput(format!("expected {} orbit coordinates, got {}", self.len(), coords.len())));
        }
        let comps = (0..=self.n_max)
            .map(|n| self.lookup[n].iter().map(|&j| coords[self.offsets[n] + j as usize]).collect())
            .collect();
        Hierarchy::new(kind, self.grid, comps)
    }
}
