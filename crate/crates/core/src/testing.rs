//! Random model and state generators shared by the property checks, the
//! `check` subcommand, and the test suites.

use nalgebra::DMatrix;
use rand::Rng;

use crate::gibbs::{Adjacency, GibbsModel, Potential, Scheme};
use crate::simplex::{Dist, StateSpace};

/// A random distribution with every entry at least `floor` (requires `d·floor < 1`).
pub fn random_dist<R: Rng + ?Sized>(rng: &mut R, d: usize, floor: f64) -> Dist {
    // Exponential spacings give the uniform law on the simplex.
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let free = 1.0 - d as f64 * floor;
    Dist::from_vec_unchecked(e.iter().map(|v| floor + free * v / s).collect())
}

/// A random linear–quadratic model on 2–4 sites with `|V|, |W| ≤ 1`, a random
/// scheme, and either the complete graph or a random connected adjacency.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R) -> GibbsModel {
    let d = rng.random_range(2..=4);
    random_model_on(rng, d)
}

pub fn random_model_on<R: Rng + ?Sized>(rng: &mut R, d: usize) -> GibbsModel {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut w = DMatrix::zeros(d, d);
    for x in 0..d {
        for y in x..d {
            let a = rng.random_range(-1.0..1.0);
            w[(x, y)] = a;
            w[(y, x)] = a;
        }
    }
    let scheme = if rng.random_bool(0.5) { Scheme::Metropolis } else { Scheme::SqrtPi };
    let adjacency = if rng.random_bool(0.5) { Adjacency::Complete } else { random_connected_adjacency(rng, d) };
    GibbsModel::new(StateSpace::numbered(d).unwrap(), Potential::linear_quadratic(v, w).unwrap(), adjacency, scheme)
        .expect("random model is valid by construction")
}

/// A spanning path in random order plus random extra edges with weights in `[0.5, 2]`.
fn random_connected_adjacency<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Adjacency {
    let mut order: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut a = DMatrix::zeros(d, d);
    for pair in order.windows(2) {
        let wgt = rng.random_range(0.5..2.0);
        a[(pair[0], pair[1])] = wgt;
        a[(pair[1], pair[0])] = wgt;
    }
    for x in 0..d {
        for y in (x + 1)..d {
            if a[(x, y)] == 0.0 && rng.random_bool(0.3) {
                let wgt = rng.random_range(0.5..2.0);
                a[(x, y)] = wgt;
                a[(y, x)] = wgt;
            }
        }
    }
    Adjacency::Fixed(a)
}
