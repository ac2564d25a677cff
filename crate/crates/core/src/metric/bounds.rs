use super::OnsagerInverse;
use crate::error::Result;
use crate::flow::weights;
use crate::gibbs::GibbsModel;
use crate::simplex::{Dist, ExtReal};

/// Sample count along the linear interpolant for the upper bound.
const SAMPLES: usize = 65;

/// `(‖μ−ν‖/√2, upper)` with Euclidean norms.
///
/// The upper bound is the action of the straight segment, estimated as
/// `‖μ−ν‖ / √(min_t λ⁺_min(B(c_t)))` over sampled points of the segment.
/// It is finite only when both endpoints have full support.
pub fn tv_bounds(model: &GibbsModel, mu: &Dist, nu: &Dist) -> Result<(f64, ExtReal)> {
    let dist = mu.l2_distance(nu);
    if dist == 0.0 {
        return Ok((0.0, ExtReal::Finite(0.0)));
    }
    let lower = dist / 2f64.sqrt();
    if !mu.is_strictly_positive() || !nu.is_strictly_positive() {
        return Ok((lower, ExtReal::Infinite));
    }
    let mut lam = f64::INFINITY;
    for i in 0..SAMPLES {
        let c = mu.mix(nu, i as f64 / (SAMPLES - 1) as f64);
        let pinv = OnsagerInverse::new(&weights(model, &c)?);
        if pinv.nullity() > 1 {
            return Ok((lower, ExtReal::Infinite));
        }
        lam = lam.min(pinv.min_positive_eigenvalue());
    }
    Ok((lower, ExtReal::Finite(dist / lam.sqrt())))
}
