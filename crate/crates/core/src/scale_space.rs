//! Weighted ℓ¹ sequence spaces `E_α` with norm `Σ |u_n| e^{αn}` and their
//! weighted ℓ∞ duals `B_α` with norm `sup |ℓ_n| e^{-αn}`.
//!
//! Vectors are finitely supported. Mass that was cut away by a truncation is
//! accounted for by a scalar `tail_bound`, certified at the weight exponent
//! `tail_alpha` and therefore valid for every smaller exponent as well.
//!
//! Besides plain sequences, a [`Grading`] can attach a degree and a base mass
//! to every index. This is how flattened correlation hierarchies reuse the
//! same machinery: index `i` then carries weight `mass_i · e^{α·degree_i}`.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest argument for which `exp` stays finite in f64.
const EXP_MAX_ARG: f64 = 709.782_712_893_384;

/// Compensated (Neumaier) summation in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Assignment of weights to indices of a finitely supported vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Grading {
    /// Index `n` has weight `e^{αn}`.
    #[default]
    Sequence,
    /// Index `i` has weight `mass[i] · e^{α·degree[i]}`.
    Graded {
        degree: Arc<[u32]>,
        mass: Arc<[f64]>,
    },
}

impl Grading {
    pub fn graded(degree: Vec<u32>, mass: Vec<f64>) -> Result<Self> {
        if degree.len() != mass.len() {
            return Err(Error::InvalidInput(format!(
                "grading degree/mass length mismatch ({} vs {})",
                degree.len(),
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidInput("grading masses must be finite and positive".into()));
        }
        Ok(Grading::Graded { degree: degree.into(), mass: mass.into() })
    }

    /// Number of indices this grading covers (`None` = unbounded).
    pub fn capacity(&self) -> Option<usize> {
        match self {
            Grading::Sequence => None,
            Grading::Graded { degree, .. } => Some(degree.len()),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        match self.capacity() {
            Some(cap) if len > cap => Err(Error::InvalidInput(format!(
                "vector of length {len} exceeds grading capacity {cap}"
            ))),
            _ => Ok(()),
        }
    }

    /// Primal weights `w_i` for `i < len`.
    pub fn weights(&self, alpha: f64, len: usize) -> Result<Vec<f64>> {
        if !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite alpha {alpha}")));
        }
        self.check_len(len)?;
        (0..len)
            .map(|i| {
                let (deg, mass) = self.degree_mass(i);
                let arg = alpha * deg as f64;
                if arg > EXP_MAX_ARG {
                    return Err(Error::RangeOverflow { alpha, index: i });
                }
                let w = mass * arg.exp();
                if !w.is_finite() {
                    return Err(Error::RangeOverflow { alpha, index: i });
                }
                Ok(w)
            })
            .collect()
    }

    /// Dual weights `1 / w_i` for `i < len`, computed without forming `w_i`.
    pub fn dual_weights(&self, alpha: f64, len: usize) -> Result<Vec<f64>> {
        if !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite alpha {alpha}")));
        }
        self.check_len(len)?;
        (0..len)
            .map(|i| {
                let (deg, mass) = self.degree_mass(i);
                let arg = -alpha * deg as f64;
                if arg > EXP_MAX_ARG {
                    return Err(Error::RangeOverflow { alpha, index: i });
                }
                let w = arg.exp() / mass;
                if !w.is_finite() {
                    return Err(Error::RangeOverflow { alpha, index: i });
                }
                Ok(w)
            })
            .collect()
    }

    #[inline]
    fn degree_mass(&self, i: usize) -> (u32, f64) {
        match self {
            Grading::Sequence => (i as u32, 1.0),
            Grading::Graded { degree, mass } => (degree[i], mass[i]),
        }
    }

    /// Degree of index `i`.
    pub fn degree(&self, i: usize) -> u32 {
        self.degree_mass(i).0
    }

    /// Weighted ℓ¹ norm of a raw slice.
    pub fn norm(&self, entries: &[f64], alpha: f64) -> Result<f64> {
        let w = self.weights(alpha, entries.len())?;
        Ok(weighted_l1(entries, &w))
    }

    /// Weighted ℓ∞ dual norm of a raw slice.
    pub fn dual_norm(&self, entries: &[f64], alpha: f64) -> Result<f64> {
        let w = self.dual_weights(alpha, entries.len())?;
        Ok(weighted_sup(entries, &w))
    }
}

/// `Σ |x_i| w_i` with compensated summation; `w` must cover `x`.
pub fn weighted_l1(x: &[f64], w: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(w).map(|(v, w)| v.abs() * w))
}

/// `sup |x_i| w_i`; `w` must cover `x`.
pub fn weighted_sup(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).fold(0.0_f64, |m, (v, w)| m.max(v.abs() * w))
}

/// Finitely supported element of `E_α` with a certified tail bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScaleVector")]
pub struct ScaleVector {
    entries: Vec<f64>,
    tail_alpha: f64,
    tail_bound: f64,
}

#[derive(Deserialize)]
struct RawScaleVector {
    entries: Vec<f64>,
    tail_alpha: f64,
    tail_bound: f64,
}

impl TryFrom<RawScaleVector> for ScaleVector {
    type Error = Error;
    fn try_from(raw: RawScaleVector) -> Result<Self> {
        ScaleVector::with_tail(raw.entries, raw.tail_alpha, raw.tail_bound)
    }
}

impl ScaleVector {
    /// Vector built from exact finite data (no tail).
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::with_tail(entries, 0.0, 0.0)
    }

    pub fn with_tail(entries: Vec<f64>, tail_alpha: f64, tail_bound: f64) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry at index {i}")));
        }
        if !(tail_bound >= 0.0) || !tail_bound.is_finite() && tail_bound != f64::INFINITY {
            return Err(Error::InvalidInput(format!("invalid tail bound {tail_bound}")));
        }
        if tail_alpha.is_nan() {
            return Err(Error::InvalidInput("tail_alpha is NaN".into()));
        }
        Ok(Self { entries, tail_alpha, tail_bound })
    }

    pub fn zeros(len: usize) -> Self {
        Self { entries: vec![0.0; len], tail_alpha: 0.0, tail_bound: 0.0 }
    }

    /// Unit coordinate vector `e_n`.
    pub fn unit(n: usize) -> Self {
        let mut entries = vec![0.0; n + 1];
        entries[n] = 1.0;
        Self { entries, tail_alpha: 0.0, tail_bound: 0.0 }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn tail_alpha(&self) -> f64 {
        self.tail_alpha
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Entry `n`, zero outside the stored support.
    pub fn get(&self, n: usize) -> f64 {
        self.entries.get(n).copied().unwrap_or(0.0)
    }

    pub fn norm(&self, alpha: f64) -> Result<f64> {
        norm_alpha(self, alpha)
    }

    /// Tail bound usable at level `alpha`: the certified value if
    /// `alpha <= tail_alpha`, otherwise unknown (+∞) unless the tail is zero.
    pub fn tail_at(&self, alpha: f64) -> f64 {
        if self.tail_bound == 0.0 || alpha <= self.tail_alpha {
            self.tail_bound
        } else {
            f64::INFINITY
        }
    }

    /// Entries zero-padded (or cut) to exactly `len`.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut v = self.entries.clone();
        v.resize(len, 0.0);
        v
    }

    /// Writes `index,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,value")?;
        for (i, v) in self.entries.iter().enumerate() {
            writeln!(out, "{i},{v:.16e}")?;
        }
        Ok(())
    }
}

/// `Σ_{n<N} |u_n| e^{αn}`; the tail bound is not included.
pub fn norm_alpha(u: &ScaleVector, alpha: f64) -> Result<f64> {
    Grading::Sequence.norm(&u.entries, alpha)
}

/// Element of the dual space `B_α` (weighted ℓ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDualVector")]
pub struct DualVector {
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDualVector {
    entries: Vec<f64>,
}

impl TryFrom<RawDualVector> for DualVector {
    type Error = Error;
    fn try_from(raw: RawDualVector) -> Result<Self> {
        DualVector::new(raw.entries)
    }
}

impl DualVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite dual entry at index {i}")));
        }
        Ok(Self { entries })
    }

    /// Coordinate functional `e_n^*`.
    pub fn coordinate(n: usize) -> Self {
        let mut entries = vec![0.0; n + 1];
        entries[n] = 1.0;
        Self { entries }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self, alpha: f64) -> Result<f64> {
        dual_norm(self, alpha)
    }
}

/// `sup_n |ℓ_n| e^{-αn}`.
pub fn dual_norm(l: &DualVector, alpha: f64) -> Result<f64> {
    Grading::Sequence.dual_norm(&l.entries, alpha)
}

/// `⟨u, ℓ⟩ = Σ u_n ℓ_n` over the common support.
pub fn dual_pairing(u: &ScaleVector, l: &DualVector) -> f64 {
    compensated_sum(u.entries.iter().zip(&l.entries).map(|(a, b)| a * b))
}

/// Keeps entries `0..n`; the dropped mass, weighted at `alpha_max`, is added
/// to the tail bound.
pub fn truncate(u: &ScaleVector, n: usize, alpha_max: f64) -> Result<ScaleVector> {
    if n >= u.entries.len() {
        return Ok(u.clone());
    }
    let w = Grading::Sequence.weights(alpha_max, u.entries.len())?;
    let dropped = weighted_l1(&u.entries[n..], &w[n..]);
    let tail_alpha = if u.tail_bound > 0.0 { u.tail_alpha.min(alpha_max) } else { alpha_max };
    Ok(ScaleVector {
        entries: u.entries[..n].to_vec(),
        tail_alpha,
        tail_bound: u.tail_bound + dropped,
    })
}
