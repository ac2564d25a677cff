//! Mean-field Gibbs models.
//!
//! A potential `K_x(μ)` induces the interaction energy `U(μ) = Σ_x μ_x K_x(μ)`,
//! the field `H = ∇U`, and the Gibbs measure `π_x(μ) ∝ exp(−H_x(μ))`. Rates
//! `Q(μ)` are built from `H` and a symmetric adjacency `A(μ)` so that
//! `π_x Q_xy = π_y Q_yx` for every `μ`.

mod config;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{Dist, StateSpace};

pub use config::{AdjacencyConfig, ModelConfig};

/// Symmetry tolerance for interaction matrices and adjacencies.
const SYMMETRY_TOL: f64 = 1e-12;

/// A user-supplied potential together with its derivative.
pub trait PotentialFn: Send + Sync {
    /// `K_x(μ)` for every site. Must be defined on a neighborhood of the simplex.
    fn values(&self, mu: &[f64]) -> Vec<f64>;
    /// Matrix `J` with `J[(x, y)] = ∂K_y/∂μ_x`.
    fn jacobian(&self, mu: &[f64]) -> DMatrix<f64>;
}

#[derive(Clone)]
pub enum Potential {
    /// `K_x(μ) = V(x) + Σ_y W(x,y) μ_y` with `W` symmetric.
    LinearQuadratic { v: Vec<f64>, w: DMatrix<f64> },
    Custom(Arc<dyn PotentialFn>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::LinearQuadratic { v, w } => {
                f.debug_struct("LinearQuadratic").field("v", v).field("w", w).finish()
            }
            Potential::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Potential {
    pub fn linear_quadratic(v: Vec<f64>, w: DMatrix<f64>) -> Result<Self> {
        let d = v.len();
        if w.nrows() != d || w.ncols() != d {
            return Err(Error::Validation(format!(
                "interaction matrix is {}x{}, expected {d}x{d}",
                w.nrows(),
                w.ncols()
            )));
        }
        if v.iter().chain(w.iter()).any(|a| !a.is_finite()) {
            return Err(Error::Validation("potential has non-finite entries".into()));
        }
        for x in 0..d {
            for y in 0..x {
                if (w[(x, y)] - w[(y, x)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Validation(format!("interaction matrix not symmetric at ({x}, {y})")));
                }
            }
        }
        Ok(Potential::LinearQuadratic { v, w })
    }

    /// The zero potential on `d` sites.
    pub fn zero(d: usize) -> Self {
        Potential::LinearQuadratic { v: vec![0.0; d], w: DMatrix::zeros(d, d) }
    }

    /// Wraps a custom potential after checking its derivative against central
    /// finite differences at a fixed set of interior points.
    pub fn custom(d: usize, f: Arc<dyn PotentialFn>) -> Result<Self> {
        let h = 1e-6;
        for mu in validation_points(d) {
            let jac = f.jacobian(&mu);
            if jac.nrows() != d || jac.ncols() != d || f.values(&mu).len() != d {
                return Err(Error::Validation("custom potential returned wrong dimensions".into()));
            }
            for x in 0..d {
                let mut up = mu.clone();
                let mut dn = mu.clone();
                up[x] += h;
                dn[x] -= h;
                let (ku, kd) = (f.values(&up), f.values(&dn));
                for y in 0..d {
                    let fd = (ku[y] - kd[y]) / (2.0 * h);
                    let scale = 1.0 + fd.abs().max(jac[(x, y)].abs());
                    if (fd - jac[(x, y)]).abs() > 1e-5 * scale {
                        return Err(Error::Validation(format!(
                            "custom potential derivative ∂K_{y}/∂μ_{x} = {} disagrees with finite difference {fd}",
                            jac[(x, y)]
                        )));
                    }
                }
            }
        }
        Ok(Potential::Custom(f))
    }

    pub fn d(&self) -> Option<usize> {
        match self {
            Potential::LinearQuadratic { v, .. } => Some(v.len()),
            Potential::Custom(_) => None,
        }
    }

    /// `K_x(μ)`; `mu` need not be normalized.
    pub fn values(&self, mu: &[f64]) -> Vec<f64> {
        match self {
            Potential::LinearQuadratic { v, w } => (0..v.len())
                .map(|x| v[x] + (0..v.len()).map(|y| w[(x, y)] * mu[y]).sum::<f64>())
                .collect(),
            Potential::Custom(f) => f.values(mu),
        }
    }

    /// `U(μ) = Σ_x μ_x K_x(μ)`.
    pub fn energy(&self, mu: &[f64]) -> f64 {
        self.values(mu).iter().zip(mu).map(|(k, m)| k * m).sum()
    }

    /// `H_x(μ) = ∂U/∂μ_x = K_x(μ) + Σ_y μ_y ∂K_y/∂μ_x`.
    pub fn field(&self, mu: &[f64]) -> Vec<f64> {
        match self {
            Potential::LinearQuadratic { v, w } => (0..v.len())
                .map(|x| v[x] + 2.0 * (0..v.len()).map(|y| w[(x, y)] * mu[y]).sum::<f64>())
                .collect(),
            Potential::Custom(f) => {
                let k = f.values(mu);
                let jac = f.jacobian(mu);
                (0..k.len())
                    .map(|x| k[x] + (0..k.len()).map(|y| mu[y] * jac[(x, y)]).sum::<f64>())
                    .collect()
            }
        }
    }
}

fn validation_points(d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![1.0 / d as f64; d]];
    for shift in 1..=3 {
        let raw: Vec<f64> = (0..d).map(|x| 1.0 + ((x * 7 + shift * 3) % 5) as f64).collect();
        let s: f64 = raw.iter().sum();
        pts.push(raw.iter().map(|r| r / s).collect());
    }
    pts
}

/// Symmetric adjacency `A(μ)` weighting the allowed jumps.
#[derive(Clone)]
pub enum Adjacency {
    /// All-ones off the diagonal.
    Complete,
    Fixed(DMatrix<f64>),
    /// A `μ`-dependent family; symmetry is checked at every evaluation.
    Dynamic(Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adjacency::Complete => f.write_str("Complete"),
            Adjacency::Fixed(m) => f.debug_tuple("Fixed").field(m).finish(),
            Adjacency::Dynamic(_) => f.write_str("Dynamic(..)"),
        }
    }
}

impl Adjacency {
    /// Nearest-neighbour path graph `1 – 2 – … – d`.
    pub fn path(d: usize) -> Self {
        Adjacency::Fixed(DMatrix::from_fn(d, d, |x, y| if x.abs_diff(y) == 1 { 1.0 } else { 0.0 }))
    }

    pub fn cycle(d: usize) -> Self {
        Adjacency::Fixed(DMatrix::from_fn(d, d, |x, y| {
            let k = x.abs_diff(y);
            if k == 1 || (d > 2 && k == d - 1) {
                1.0
            } else {
                0.0
            }
        }))
    }

    fn evaluate(&self, d: usize, mu: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Adjacency::Complete => Ok(DMatrix::from_fn(d, d, |x, y| if x == y { 0.0 } else { 1.0 })),
            Adjacency::Fixed(m) => Ok(m.clone()),
            Adjacency::Dynamic(f) => {
                let m = f(mu);
                check_adjacency(&m, d)?;
                Ok(m)
            }
        }
    }
}

fn check_adjacency(m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Validation(format!("adjacency is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
    }
    for x in 0..d {
        for y in 0..d {
            let a = m[(x, y)];
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::Validation(format!("adjacency entry ({x}, {y}) = {a} is not a finite nonnegative number")));
            }
            if (a - m[(y, x)]).abs() > SYMMETRY_TOL {
                return Err(Error::Validation(format!("adjacency not symmetric at ({x}, {y})")));
            }
        }
    }
    if !is_connected(d, |x, y| m[(x, y)] > 0.0) {
        return Err(Error::Validation("adjacency graph is not connected".into()));
    }
    Ok(())
}

/// Connectivity of the undirected graph on `0..d` with edge predicate `edge`.
pub(crate) fn is_connected(d: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; d];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..d {
            if !seen[y] && x != y && edge(x, y) {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// How off-diagonal rates are built from the field `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `Q_xy = A_xy · exp(−(H_y − H_x)_+)`.
    Metropolis,
    /// `Q_xy = A_xy · sqrt(π_y / π_x) = A_xy · exp(−(H_y − H_x)/2)`.
    #[default]
    SqrtPi,
}

/// A generator matrix: nonnegative off-diagonal rates, rows summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(DMatrix<f64>);

impl RateMatrix {
    /// Builds the generator from off-diagonal rates, fixing `Q_xx = −Σ_{y≠x} Q_xy`.
    pub fn from_off_diagonal(mut m: DMatrix<f64>) -> Self {
        let d = m.nrows();
        for x in 0..d {
            m[(x, x)] = 0.0;
            let exit: f64 = m.row(x).iter().sum();
            m[(x, x)] = -exit;
        }
        RateMatrix(m)
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.0[(x, x)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.d()).map(|x| self.exit_rate(x)).fold(0.0, f64::max)
    }
}

/// The mean-field model every other module consumes.
#[derive(Debug, Clone)]
pub struct GibbsModel {
    space: StateSpace,
    potential: Potential,
    adjacency: Adjacency,
    scheme: Scheme,
}

impl GibbsModel {
    pub fn new(space: StateSpace, potential: Potential, adjacency: Adjacency, scheme: Scheme) -> Result<Self> {
        let d = space.d();
        if let Some(pd) = potential.d() {
            if pd != d {
                return Err(Error::Validation(format!("potential has {pd} sites, state space has {d}")));
            }
        }
        match &adjacency {
            Adjacency::Complete => {}
            Adjacency::Fixed(m) => check_adjacency(m, d)?,
            Adjacency::Dynamic(_) => {
                for mu in validation_points(d) {
                    adjacency.evaluate(d, &mu)?;
                }
            }
        }
        Ok(Self { space, potential, adjacency, scheme })
    }

    /// `K ≡ 0` on the complete graph of `d` sites.
    pub fn free(d: usize, scheme: Scheme) -> Result<Self> {
        Self::new(StateSpace::numbered(d)?, Potential::zero(d), Adjacency::Complete, scheme)
    }

    /// Two-site Curie–Weiss model on `{+, −}`: `V = 0`, `W(+,−) = W(−,+) = β`,
    /// `W(±,±) = 0`. Site 0 is `+`.
    pub fn curie_weiss(beta: f64, scheme: Scheme) -> Result<Self> {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, beta, beta, 0.0]);
        Self::new(
            StateSpace::new(vec!["+".into(), "-".into()])?,
            Potential::linear_quadratic(vec![0.0, 0.0], w)?,
            Adjacency::Complete,
            scheme,
        )
    }

    /// The same potential and adjacency with a different rate scheme.
    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self { scheme, ..self.clone() }
    }

    /// `K ≡ 0` with this model's state space, adjacency and scheme.
    pub fn without_potential(&self) -> Self {
        Self { potential: Potential::zero(self.d()), ..self.clone() }
    }

    pub fn d(&self) -> usize {
        self.space.d()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn energy(&self, mu: &Dist) -> f64 {
        self.potential.energy(mu.as_slice())
    }

    pub fn field_h(&self, mu: &Dist) -> Vec<f64> {
        self.potential.field(mu.as_slice())
    }

    /// `log π_x(μ)` computed with log-sum-exp.
    pub fn log_gibbs(&self, mu: &Dist) -> Vec<f64> {
        let h = self.field_h(mu);
        let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
        let log_z = -hmin + h.iter().map(|v| (-(v - hmin)).exp()).sum::<f64>().ln();
        h.iter().map(|v| -v - log_z).collect()
    }

    pub fn gibbs_measure(&self, mu: &Dist) -> Dist {
        let p: Vec<f64> = self.log_gibbs(mu).into_iter().map(f64::exp).collect();
        let s: f64 = p.iter().sum();
        Dist::from_vec_unchecked(p.into_iter().map(|v| v / s).collect())
    }

    pub fn adjacency_matrix(&self, mu: &Dist) -> Result<DMatrix<f64>> {
        self.adjacency.evaluate(self.d(), mu.as_slice())
    }

    /// `Q(μ)` for the configured scheme.
    pub fn rates(&self, mu: &Dist) -> Result<RateMatrix> {
        let d = self.d();
        let h = self.field_h(mu);
        let a = self.adjacency_matrix(mu)?;
        let off = DMatrix::from_fn(d, d, |x, y| {
            if x == y || a[(x, y)] == 0.0 {
                return 0.0;
            }
            let dh = h[y] - h[x];
            let factor = match self.scheme {
                Scheme::Metropolis => (-dh.max(0.0)).exp(),
                Scheme::SqrtPi => (-0.5 * dh).exp(),
            };
            a[(x, y)] * factor
        });
        Ok(RateMatrix::from_off_diagonal(off))
    }

    /// `E_μ = {(x, y) : Q_xy(μ) > 0}`.
    pub fn edge_set(&self, mu: &Dist) -> Result<Vec<(usize, usize)>> {
        let q = self.rates(mu)?;
        let d = self.d();
        Ok((0..d)
            .flat_map(|x| (0..d).map(move |y| (x, y)))
            .filter(|&(x, y)| x != y && q.get(x, y) > 0.0)
            .collect())
    }

    /// `max_{x,y} |π_x Q_xy − π_y Q_yx|`.
    pub fn detailed_balance_residual(&self, mu: &Dist) -> Result<f64> {
        let pi = self.gibbs_measure(mu);
        let q = self.rates(mu)?;
        let d = self.d();
        let mut worst: f64 = 0.0;
        for x in 0..d {
            for y in 0..d {
                worst = worst.max((pi[x] * q.get(x, y) - pi[y] * q.get(y, x)).abs());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_dist, random_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cw(beta: f64) -> GibbsModel {
        GibbsModel::curie_weiss(beta, Scheme::Metropolis).unwrap()
    }

    fn half() -> Dist {
        Dist::uniform(2)
    }

    #[test]
    fn energy_examples() {
        for beta in [0.3, 1.0, 2.5] {
            assert!((cw(beta).energy(&half()) - beta / 2.0).abs() < 1e-15);
            assert_eq!(cw(beta).energy(&Dist::dirac(2, 0)), 0.0);
        }
        let free = GibbsModel::free(3, Scheme::SqrtPi).unwrap();
        assert_eq!(free.energy(&Dist::new(vec![0.2, 0.3, 0.5]).unwrap()), 0.0);
    }

    #[test]
    fn curie_weiss_energy_matches_closed_form() {
        let beta = 1.7;
        for p in [0.1, 0.35, 0.8] {
            let mu = Dist::new(vec![p, 1.0 - p]).unwrap();
            assert!((cw(beta).energy(&mu) - 2.0 * beta * p * (1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn field_examples() {
        assert_eq!(cw(1.0).field_h(&half()), vec![1.0, 1.0]);
        let free = GibbsModel::free(2, Scheme::SqrtPi).unwrap();
        assert_eq!(free.field_h(&half()), vec![0.0, 0.0]);
        let lin = GibbsModel::new(
            StateSpace::numbered(3).unwrap(),
            Potential::linear_quadratic(vec![0.3, -1.0, 2.0], DMatrix::zeros(3, 3)).unwrap(),
            Adjacency::Complete,
            Scheme::SqrtPi,
        )
        .unwrap();
        for mu in [Dist::uniform(3), Dist::new(vec![0.7, 0.2, 0.1]).unwrap()] {
            assert_eq!(lin.field_h(&mu), vec![0.3, -1.0, 2.0]);
        }
    }

    #[test]
    fn field_matches_finite_differences_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 0.01);
            let field = model.field_h(&mu);
            for x in 0..model.d() {
                let mut up = mu.as_slice().to_vec();
                let mut dn = up.clone();
                up[x] += h;
                dn[x] -= h;
                let fd = (model.potential().energy(&up) - model.potential().energy(&dn)) / (2.0 * h);
                assert!((fd - field[x]).abs() <= 1e-6, "x={x} fd={fd} H={}", field[x]);
            }
        }
    }

    #[test]
    fn gibbs_measure_examples() {
        let pi = cw(2.0).gibbs_measure(&half());
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let free = GibbsModel::free(4, Scheme::SqrtPi).unwrap();
        assert!(free.gibbs_measure(&Dist::dirac(4, 2)).as_slice().iter().all(|p| (p - 0.25).abs() < 1e-15));
        let tilted = GibbsModel::new(
            StateSpace::numbered(2).unwrap(),
            Potential::linear_quadratic(vec![0.0, 2f64.ln()], DMatrix::zeros(2, 2)).unwrap(),
            Adjacency::Complete,
            Scheme::SqrtPi,
        )
        .unwrap();
        let pi = tilted.gibbs_measure(&half());
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-15 && (pi[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gibbs_measure_survives_huge_fields() {
        let huge = GibbsModel::new(
            StateSpace::numbered(2).unwrap(),
            Potential::linear_quadratic(vec![5000.0, 5001.0], DMatrix::zeros(2, 2)).unwrap(),
            Adjacency::Complete,
            Scheme::SqrtPi,
        )
        .unwrap();
        let pi = huge.gibbs_measure(&half());
        let e = (-1.0f64).exp();
        assert!((pi[0] - 1.0 / (1.0 + e)).abs() < 1e-14);
    }

    #[test]
    fn gibbs_measure_is_invariant_under_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let model = random_model(&mut rng);
            let d = model.d();
            let Potential::LinearQuadratic { v, w } = model.potential().clone() else { unreachable!() };
            let shifted = GibbsModel::new(
                model.space().clone(),
                Potential::linear_quadratic(v.iter().map(|a| a + 3.25).collect(), w).unwrap(),
                model.adjacency().clone(),
                model.scheme(),
            )
            .unwrap();
            let mu = random_dist(&mut rng, d, 0.0);
            let (p, q) = (model.gibbs_measure(&mu), shifted.gibbs_measure(&mu));
            assert!(p.l2_distance(&q) < 1e-12);
        }
    }

    #[test]
    fn rates_examples() {
        let q = cw(1.3).rates(&half()).unwrap();
        assert_eq!((q.get(0, 1), q.get(1, 0)), (1.0, 1.0));
        assert_eq!((q.get(0, 0), q.get(1, 1)), (-1.0, -1.0));
        let q = GibbsModel::free(3, Scheme::Metropolis).unwrap().rates(&Dist::uniform(3)).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(q.get(x, y), if x == y { -2.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn detailed_balance_for_both_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 0.0);
            for scheme in [Scheme::Metropolis, Scheme::SqrtPi] {
                let r = model.with_scheme(scheme).detailed_balance_residual(&mu).unwrap();
                assert!(r <= 1e-12, "residual {r}");
            }
        }
    }

    #[test]
    fn schemes_share_gibbs_measure_and_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 0.0);
            let (m, s) = (model.with_scheme(Scheme::Metropolis), model.with_scheme(Scheme::SqrtPi));
            assert_eq!(m.gibbs_measure(&mu), s.gibbs_measure(&mu));
            assert_eq!(m.edge_set(&mu).unwrap(), s.edge_set(&mu).unwrap());
        }
    }

    #[test]
    fn edge_set_examples() {
        let free = GibbsModel::free(3, Scheme::SqrtPi).unwrap();
        assert_eq!(free.edge_set(&Dist::uniform(3)).unwrap().len(), 6);
        let path = GibbsModel::new(
            StateSpace::numbered(4).unwrap(),
            Potential::zero(4),
            Adjacency::path(4),
            Scheme::SqrtPi,
        )
        .unwrap();
        let edges = path.edge_set(&Dist::uniform(4)).unwrap();
        assert_eq!(edges, vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)]);
    }

    #[test]
    fn edge_set_is_symmetric_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let model = random_model(&mut rng);
            let edges = model.edge_set(&random_dist(&mut rng, model.d(), 0.0)).unwrap();
            for &(x, y) in &edges {
                assert!(edges.contains(&(y, x)));
            }
        }
    }

    #[test]
    fn rejects_bad_adjacency() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        let err = GibbsModel::new(StateSpace::numbered(2).unwrap(), Potential::zero(2), Adjacency::Fixed(asym), Scheme::SqrtPi);
        assert!(matches!(err, Err(Error::Validation(_))));
        let disconnected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(GibbsModel::new(StateSpace::numbered(3).unwrap(), Potential::zero(3), Adjacency::Fixed(disconnected), Scheme::SqrtPi).is_err());
        let dynamic = Adjacency::Dynamic(Arc::new(|mu: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 + mu[0], 0.0])));
        assert!(GibbsModel::new(StateSpace::numbered(2).unwrap(), Potential::zero(2), dynamic, Scheme::SqrtPi).is_err());
        assert!(Potential::linear_quadratic(vec![0.0, 0.0], asym_w()).is_err());
    }

    fn asym_w() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])
    }

    struct Quadratic;
    impl PotentialFn for Quadratic {
        fn values(&self, mu: &[f64]) -> Vec<f64> {
            vec![mu[0] * mu[0], mu[1] * mu[0]]
        }
        fn jacobian(&self, mu: &[f64]) -> DMatrix<f64> {
            // J[(x, y)] = ∂K_y/∂μ_x
            DMatrix::from_row_slice(2, 2, &[2.0 * mu[0], mu[1], 0.0, mu[0]])
        }
    }

    struct WrongDerivative;
    impl PotentialFn for WrongDerivative {
        fn values(&self, mu: &[f64]) -> Vec<f64> {
            vec![mu[0] * mu[0], 0.0]
        }
        fn jacobian(&self, _mu: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(2, 2)
        }
    }

    #[test]
    fn custom_potential_is_validated() {
        let ok = Potential::custom(2, Arc::new(Quadratic)).unwrap();
        let mu = [0.3, 0.7];
        // U = μ0³ + μ1 μ0 μ1 ⇒ H0 = 3μ0² + μ1², H1 = 2 μ0 μ1
        let h = ok.field(&mu);
        assert!((h[0] - (3.0 * 0.09 + 0.49)).abs() < 1e-15);
        assert!((h[1] - 2.0 * 0.21).abs() < 1e-15);
        assert!(matches!(Potential::custom(2, Arc::new(WrongDerivative)), Err(Error::Validation(_))));
    }
}
