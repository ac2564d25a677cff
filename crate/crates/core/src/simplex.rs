//! Probability vectors on a finite state space and the scalar kernels the
//! rest of the crate is built from.
//!
//! The logarithmic mean `Λ(s,t) = (s−t)/(log s − log t)` supplies the edge
//! conductances of the transport geometry, and `α(v,w) = v²/w` is the
//! integrand of the kinetic action. Both are evaluated so that they stay
//! accurate at the degenerate points (`s = t`, `w = 0`).

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute mass tolerance a [`Dist`] satisfies after construction.
pub const MASS_TOL: f64 = 1e-12;
/// Mass defects up to this size are renormalized away; larger ones are rejected.
pub const RENORM_TOL: f64 = 1e-9;
/// Entries more negative than this are rejected rather than clamped.
pub const NEG_TOL: f64 = 1e-12;

/// The finite set of sites `{1, …, d}` with human-readable labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Domain(format!(
                "state space needs at least 2 sites, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::Domain(format!("duplicate site label `{a}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Sites labelled `1..=d`.
    pub fn numbered(d: usize) -> Result<Self> {
        Self::new((1..=d).map(|i| i.to_string()).collect())
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A point of the probability simplex `P(X)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Dist(Vec<f64>);

impl Dist {
    /// Validates `p`: finite entries, no entry below `-NEG_TOL`, and total mass
    /// within `RENORM_TOL` of one. Tiny negatives are clamped and the mass is
    /// renormalized.
    pub fn new(mut p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidDist(format!("need at least 2 entries, got {}", p.len())));
        }
        for (x, v) in p.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidDist(format!("entry {x} is not finite")));
            }
            if *v < -NEG_TOL {
                return Err(Error::InvalidDist(format!("entry {x} is negative ({v:e})")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass: f64 = p.iter().sum();
        if (mass - 1.0).abs() > RENORM_TOL {
            return Err(Error::InvalidDist(format!("total mass {mass} differs from 1")));
        }
        if (mass - 1.0).abs() > 0.0 {
            p.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(Self(p))
    }

    /// Skips validation. Callers guarantee a nonnegative unit-mass vector.
    pub(crate) fn from_vec_unchecked(p: Vec<f64>) -> Self {
        debug_assert!(p.iter().all(|v| *v >= 0.0));
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        Self(p)
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn dirac(d: usize, x: usize) -> Self {
        let mut p = vec![0.0; d];
        p[x] = 1.0;
        Self(p)
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Membership in `P^a(X)`: every entry is at least `a`.
    pub fn is_interior(&self, a: f64) -> bool {
        self.0.iter().all(|&v| v >= a)
    }

    /// Membership in `P*(X)`: every entry is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    /// Convex combination `(1−s)·self + s·other`.
    pub fn mix(&self, other: &Dist, s: f64) -> Dist {
        let p = self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - s) * a + s * b).collect();
        Dist::from_vec_unchecked(p)
    }

    /// Euclidean norm of the difference.
    pub fn l2_distance(&self, other: &Dist) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `Σ p log p` with `0·log 0 = 0`.
    pub fn neg_entropy(&self) -> f64 {
        self.0.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
    }
}

impl Index<usize> for Dist {
    type Output = f64;
    fn index(&self, x: usize) -> &f64 {
        &self.0[x]
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A real number or `+∞`, used for quantities that are infinite off the
/// interior of the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// Lossy conversion for reporting; `Infinite` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Serialized as a number, or the string `"inf"`.
impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::Finite(0.0), |a, b| a + b)
    }
}

/// A real field on ordered site pairs `(x, y)`. Diagonal entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField(DMatrix<f64>);

impl EdgeField {
    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(d, d, |x, y| if x == y { 0.0 } else { f(x, y) }))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Domain("edge field must be square".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("edge field has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    /// Discrete gradient `(∇ψ)_xy = ψ_y − ψ_x`.
    pub fn gradient(psi: &[f64]) -> Self {
        Self::from_fn(psi.len(), |x, y| psi[y] - psi[x])
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.0[(x, y)] = v;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Entrywise product, e.g. `w ⊙ ∇ψ`.
    pub fn hadamard(&self, other: &EdgeField) -> EdgeField {
        EdgeField(self.0.component_mul(&other.0))
    }
}

/// Logarithmic mean `Λ(s,t)` with its continuous extension to the diagonal
/// and to the boundary of the quadrant.
pub fn log_mean(s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("log_mean needs nonnegative arguments, got ({s}, {t})")));
    }
    Ok(log_mean_unchecked(s, t))
}

/// [`log_mean`] without the sign check.
#[inline]
pub(crate) fn log_mean_unchecked(s: f64, t: f64) -> f64 {
    // Ordering the arguments makes the result exactly symmetric.
    let (hi, lo) = if s >= t { (s, t) } else { (t, s) };
    if lo <= 0.0 {
        return 0.0;
    }
    let diff = hi - lo;
    if diff <= 1e-9 * hi {
        let mid = 0.5 * (hi + lo);
        return mid - diff * diff / (12.0 * mid);
    }
    diff / (diff / lo).ln_1p()
}

/// Action integrand `α(v,w)`: `v²/w` for `w>0`, `0` for `v=w=0`, `+∞` otherwise.
pub fn action_integrand(v: f64, w: f64) -> Result<ExtReal> {
    if !(w >= 0.0) {
        return Err(Error::Domain(format!("action_integrand needs w ≥ 0, got {w}")));
    }
    Ok(if w > 0.0 {
        ExtReal::Finite(v * v / w)
    } else if v == 0.0 {
        ExtReal::Finite(0.0)
    } else {
        ExtReal::Infinite
    })
}

/// Discrete divergence `(δv)_x = ½ Σ_y (v_xy − v_yx)`.
///
/// The last component closes the balance so the output sums to zero.
pub fn divergence(v: &EdgeField) -> Vec<f64> {
    let d = v.d();
    let mut out = vec![0.0; d];
    for x in 0..d {
        for y in (x + 1)..d {
            let flux = 0.5 * (v.get(x, y) - v.get(y, x));
            out[x] += flux;
            out[y] -= flux;
        }
    }
    close_balance(&mut out);
    out
}

/// Overwrites the last entry so that the left-to-right sum is exactly zero.
pub(crate) fn close_balance(v: &mut [f64]) {
    if let Some((last, rest)) = v.split_last_mut() {
        *last = -rest.iter().sum::<f64>();
    }
}
