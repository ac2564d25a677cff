//! The transport distance `W`: actions, the continuity-equation potential
//! solve, discrete paths, and the geodesic solver.

mod bounds;
mod geodesic;
mod two_point;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

pub use bounds::tv_bounds;
pub use geodesic::{distance, MetricOptions, MetricResult, StartReport};
pub use two_point::{gauss_legendre, two_point_exact, two_point_integral};

use crate::error::{Error, Result};
use crate::flow::{weights, WeightMatrix};
use crate::gibbs::GibbsModel;
use crate::simplex::{action_integrand, Dist, EdgeField, ExtReal};

/// Relative eigenvalue cutoff for the pseudo-inverse of the Onsager matrix.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Default tolerance on the discrete continuity-equation residual.
pub const CE_TOL: f64 = 1e-8;

/// `A(μ,ψ) = ½ Σ_{x,y} (ψ_y − ψ_x)² w_xy(μ)`, which equals `⟨ψ, K(μ)ψ⟩`.
pub fn action(model: &GibbsModel, mu: &Dist, psi: &[f64]) -> Result<f64> {
    check_len(model, psi.len())?;
    Ok(weights(model, mu)?.action(psi))
}

/// `½ Σ_{x≠y} α(v_xy, w_xy(μ))`; `+∞` if `v` charges an edge of zero weight.
pub fn vec_action(model: &GibbsModel, mu: &Dist, v: &EdgeField) -> Result<ExtReal> {
    check_len(model, v.d())?;
    let w = weights(model, mu)?;
    let mut total = ExtReal::Finite(0.0);
    for x in 0..model.d() {
        for y in 0..model.d() {
            if x != y {
                total = total + action_integrand(v.get(x, y), w.get(x, y))?;
            }
        }
    }
    Ok(match total {
        ExtReal::Finite(a) => ExtReal::Finite(0.5 * a),
        ExtReal::Infinite => ExtReal::Infinite,
    })
}

/// Minimal-norm `ψ` with `K(μ)ψ = −σ`.
///
/// Among all potentials whose flux realizes `σ` this one has the least action.
pub fn solve_potential(model: &GibbsModel, mu: &Dist, sigma: &[f64]) -> Result<Vec<f64>> {
    check_len(model, sigma.len())?;
    let w = weights(model, mu)?;
    let pinv = OnsagerInverse::new(&w);
    let psi = pinv.solve(sigma)?;
    Ok(psi.iter().map(|v| -v).collect())
}

fn check_len(model: &GibbsModel, n: usize) -> Result<()> {
    if n != model.d() {
        return Err(Error::Domain(format!("expected a vector of length {}, got {n}", model.d())));
    }
    Ok(())
}

/// Spectral pseudo-inverse of the Onsager matrix `B(μ)`.
#[derive(Debug, Clone)]
pub(crate) struct OnsagerInverse {
    b: DMatrix<f64>,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    cutoff: f64,
}

impl OnsagerInverse {
    pub(crate) fn new(w: &WeightMatrix) -> Self {
        let b = w.laplacian();
        let eig = SymmetricEigen::new(b.clone());
        let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        OnsagerInverse { b, values: eig.eigenvalues, vectors: eig.eigenvectors, cutoff: PINV_CUTOFF * max }
    }

    /// `B⁺σ` without feasibility checks.
    pub(crate) fn apply(&self, sigma: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(sigma);
        let mut out = DVector::zeros(s.len());
        for (i, &lam) in self.values.iter().enumerate() {
            if lam > self.cutoff {
                let v = self.vectors.column(i);
                out += v * (v.dot(&s) / lam);
            }
        }
        out.iter().copied().collect()
    }

    /// `B⁺σ`, rejecting `σ` outside the range of `B`.
    pub(crate) fn solve(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        let norm = sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sum: f64 = sigma.iter().sum();
        if sum.abs() > 1e-10 * (1.0 + norm) {
            return Err(Error::Infeasible(format!("σ must sum to zero, sum = {sum:e}")));
        }
        let psi = self.apply(sigma);
        let r = &self.b * DVector::from_column_slice(&psi) - DVector::from_column_slice(sigma);
        if r.norm() > 1e-8 * norm.max(f64::MIN_POSITIVE) && r.norm() > 1e-14 {
            return Err(Error::Infeasible(format!(
                "σ is not in the range of the Onsager matrix (residual {:e}); its support does not match the weighted graph",
                r.norm()
            )));
        }
        Ok(psi)
    }

    /// Smallest eigenvalue above the cutoff; zero if `B` vanishes.
    pub(crate) fn min_positive_eigenvalue(&self) -> f64 {
        self.values.iter().copied().filter(|&l| l > self.cutoff).fold(f64::INFINITY, f64::min).min(f64::MAX)
    }

    /// Number of eigenvalues treated as zero.
    pub(crate) fn nullity(&self) -> usize {
        self.values.iter().filter(|&&l| l <= self.cutoff).count()
    }

    /// The matrix `B⁺` itself.
    pub(crate) fn matrix(&self) -> DMatrix<f64> {
        let d = self.values.len();
        let mut out = DMatrix::zeros(d, d);
        for (i, &lam) in self.values.iter().enumerate() {
            if lam > self.cutoff {
                let v = self.vectors.column(i);
                out += v * v.transpose() / lam;
            }
        }
        out
    }
}

/// A discrete curve `knot_0, …, knot_M` on `[0, 1]` with one potential per interval.
#[derive(Debug, Clone, Serialize)]
pub struct DiscretePath {
    pub knots: Vec<Dist>,
    pub potentials: Vec<Vec<f64>>,
}

impl DiscretePath {
    /// Recovers the least-action potential on each interval from the knot increments.
    pub fn from_knots(model: &GibbsModel, knots: Vec<Dist>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Domain("a discrete path needs at least two knots".into()));
        }
        let m = knots.len() - 1;
        let potentials = (0..m)
            .map(|i| {
                let (mid, sigma) = interval(&knots, i);
                solve_potential(model, &mid, &sigma)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscretePath { knots, potentials })
    }

    /// A path with given potentials; call [`DiscretePath::check_continuity`] to validate.
    pub fn new(knots: Vec<Dist>, potentials: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 || potentials.len() + 1 != knots.len() {
            return Err(Error::Domain(format!("{} knots need {} potentials, got {}", knots.len(), knots.len().saturating_sub(1), potentials.len())));
        }
        Ok(DiscretePath { knots, potentials })
    }

    pub fn intervals(&self) -> usize {
        self.potentials.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    /// Knot averages.
    pub fn midpoints(&self) -> Vec<Dist> {
        (0..self.intervals()).map(|i| self.knots[i].mix(&self.knots[i + 1], 0.5)).collect()
    }

    /// Worst `‖(knot_{m+1} − knot_m)/dt + K(mid_m)ψ_m‖∞` and its interval.
    pub fn continuity_residual(&self, model: &GibbsModel) -> Result<(usize, f64)> {
        let mut worst = (0, 0.0);
        for i in 0..self.intervals() {
            let (mid, sigma) = interval(&self.knots, i);
            let k = weights(model, &mid)?.onsager_apply(&self.potentials[i]);
            let r = sigma.iter().zip(&k).map(|(s, kv)| (s + kv).abs()).fold(0.0, f64::max);
            if r > worst.1 {
                worst = (i, r);
            }
        }
        Ok(worst)
    }

    pub fn check_continuity(&self, model: &GibbsModel, tol: f64) -> Result<()> {
        let (interval, residual) = self.continuity_residual(model)?;
        if residual > tol {
            return Err(Error::ContinuityViolation { interval, residual, tol });
        }
        Ok(())
    }

    /// `dt · A(mid_m, ψ_m)` for each interval.
    pub fn interval_actions(&self, model: &GibbsModel) -> Result<Vec<f64>> {
        let dt = self.dt();
        self.midpoints().iter().zip(&self.potentials).map(|(mid, psi)| Ok(dt * action(model, mid, psi)?)).collect()
    }
}

/// `(mid_m, (knot_{m+1} − knot_m)/dt)`.
fn interval(knots: &[Dist], i: usize) -> (Dist, Vec<f64>) {
    let m = (knots.len() - 1) as f64;
    let (a, b) = (&knots[i], &knots[i + 1]);
    let mut sigma: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| m * (y - x)).collect();
    crate::simplex::close_balance(&mut sigma);
    (a.mix(b, 0.5), sigma)
}

/// `Σ_m dt · A(mid_m, ψ_m)`, after checking the continuity equation within `CE_TOL`
/// relative to the largest increment.
pub fn path_action(model: &GibbsModel, path: &DiscretePath) -> Result<f64> {
    let scale = (0..path.intervals())
        .map(|i| interval(&path.knots, i).1.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .fold(1.0_f64, f64::max);
    path.check_continuity(model, CE_TOL * scale)?;
    Ok(path.interval_actions(model)?.iter().sum())
}
