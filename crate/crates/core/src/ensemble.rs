//! Ensembles of initial measures transported by the mean-field flow.
//!
//! An equal-weight ensemble approximates a law on the simplex. Its evolution
//! is the pushforward along characteristics: every member follows the
//! mean-field equation on its own.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{de_giorgi_j, fisher_information, free_energy, integrate, Trajectory};
use crate::gibbs::GibbsModel;
use crate::simplex::{Dist, ExtReal};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Dist>,
}

impl Ensemble {
    pub fn new(members: Vec<Dist>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Validation("an ensemble needs at least one member".into()));
        };
        if members.iter().any(|m| m.d() != first.d()) {
            return Err(Error::Validation("ensemble members live on different state spaces".into()));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Dist] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `∫ φ d𝕄` for the empirical law of the members.
    pub fn expectation(&self, phi: impl Fn(&Dist) -> f64) -> f64 {
        self.members.iter().map(phi).sum::<f64>() / self.len() as f64
    }
}

/// Member trajectories on a common time grid.
#[derive(Debug, Clone)]
pub struct EnsembleTrajectory {
    pub times: Vec<f64>,
    pub members: Vec<Trajectory>,
}

impl EnsembleTrajectory {
    /// The ensemble at grid index `i`.
    pub fn at(&self, i: usize) -> Ensemble {
        Ensemble { members: self.members.iter().map(|t| t.states[i].clone()).collect() }
    }

    pub fn lifted_free_energy(&self) -> Vec<f64> {
        let n = self.members.len() as f64;
        (0..self.times.len()).map(|i| self.members.iter().map(|t| t.free_energy[i]).sum::<f64>() / n).collect()
    }

    pub fn lifted_fisher(&self) -> Vec<ExtReal> {
        let n = self.members.len() as f64;
        (0..self.times.len())
            .map(|i| match self.members.iter().map(|t| t.fisher[i]).sum::<ExtReal>() {
                ExtReal::Finite(s) => ExtReal::Finite(s / n),
                ExtReal::Infinite => ExtReal::Infinite,
            })
            .collect()
    }

    /// Mean over members of the De Giorgi functional on `[0, T]`.
    pub fn lifted_de_giorgi(&self, model: &GibbsModel) -> Result<f64> {
        let js = self.members.iter().map(|t| de_giorgi_j(model, t).map(|j| j.j)).collect::<Result<Vec<_>>>()?;
        Ok(js.iter().sum::<f64>() / js.len() as f64)
    }
}

/// Integrates every member independently on `[0, T]` with step `dt`.
pub fn propagate(model: &GibbsModel, ens: &Ensemble, t_final: f64, dt: f64) -> Result<EnsembleTrajectory> {
    let members =
        ens.members.par_iter().map(|mu| integrate(model, mu, t_final, dt)).collect::<Result<Vec<_>>>()?;
    let times = members[0].times.clone();
    Ok(EnsembleTrajectory { times, members })
}

/// `(𝔽, 𝕀)`: equal-weight averages of the free energy and Fisher information.
pub fn lifted_functionals(model: &GibbsModel, ens: &Ensemble) -> Result<(f64, ExtReal)> {
    let n = ens.len() as f64;
    let f = ens.members.iter().map(|m| free_energy(model, m)).sum::<f64>() / n;
    let i = ens.members.iter().map(|m| fisher_information(model, m)).collect::<Result<Vec<_>>>()?;
    let i = match i.into_iter().sum::<ExtReal>() {
        ExtReal::Finite(s) => ExtReal::Finite(s / n),
        ExtReal::Infinite => ExtReal::Infinite,
    };
    Ok((f, i))
}

/// Test functions for the bounded-Lipschitz estimate: coordinates, pairwise
/// minima of coordinates, and coordinates truncated at levels `0.1, …, 0.9`.
/// Each is bounded by 1 and 1-Lipschitz in every coordinate norm.
fn dictionary(d: usize) -> Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> {
    let mut out: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::new();
    for x in 0..d {
        out.push(Box::new(move |m: &[f64]| m[x]));
        for k in 1..10 {
            let a = k as f64 / 10.0;
            out.push(Box::new(move |m: &[f64]| m[x].min(a)));
        }
        for y in (x + 1)..d {
            out.push(Box::new(move |m: &[f64]| m[x].min(m[y])));
        }
    }
    out
}

/// Lower estimate of the bounded-Lipschitz distance between two empirical
/// laws on the simplex: the largest gap in expectation over the dictionary.
pub fn bounded_lipschitz(a: &[Dist], b: &[Dist]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("empirical laws need at least one sample".into()));
    }
    let d = a[0].d();
    if a.iter().chain(b).any(|m| m.d() != d) {
        return Err(Error::Validation("samples live on different state spaces".into()));
    }
    let mean = |s: &[Dist], f: &dyn Fn(&[f64]) -> f64| s.iter().map(|m| f(m.as_slice())).sum::<f64>() / s.len() as f64;
    Ok(dictionary(d).iter().map(|f| (mean(a, f.as_ref()) - mean(b, f.as_ref())).abs()).fold(0.0, f64::max))
}
