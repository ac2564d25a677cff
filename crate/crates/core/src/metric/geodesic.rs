//! Discrete geodesic solver.
//!
//! The unknowns are the interior knots `k_1, …, k_{M−1}` of a path from `μ` to
//! `ν`. On each interval the potential is eliminated through the Onsager
//! pseudo-inverse, leaving the smooth objective
//! `f = Σ_m M ⟨Δ_m, B(mid_m)⁺ Δ_m⟩`, `Δ_m = k_{m+1} − k_m`,
//! which is minimized by preconditioned nonlinear conjugate gradients on
//! `{k : Σk = 1, k ≥ floor}`. The preconditioner is the Hessian of `f` with
//! the midpoints frozen, a block-tridiagonal matrix solved exactly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tv_bounds, DiscretePath, OnsagerInverse};
use crate::error::{Error, Result};
use crate::flow::weights;
use crate::gibbs::GibbsModel;
use crate::simplex::{Dist, ExtReal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Initial number of intervals `M`.
    pub intervals: usize,
    /// `M` is doubled until the value changes by less than `refine_tol` or this is reached.
    pub max_intervals: usize,
    pub refine_tol: f64,
    /// Stop when the Newton decrement falls below `tol · f`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Endpoints with an entry below `epsilon` are moved toward the uniform measure.
    pub epsilon: f64,
    /// Lower bound on interior knot entries.
    pub floor: f64,
    pub multi_start: bool,
    /// Re-solve with `10·epsilon` when an endpoint was pushed.
    pub sensitivity: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            intervals: 32,
            max_intervals: 256,
            refine_tol: 1e-2,
            tol: 1e-12,
            max_iterations: 2000,
            epsilon: 1e-7,
            floor: 1e-7,
            multi_start: true,
            sensitivity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    pub name: String,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    /// Estimate of `W(μ, ν)`; its square is the total action of `path`.
    pub value: f64,
    pub path: DiscretePath,
    pub lower_bound: f64,
    pub upper_bound: ExtReal,
    pub converged: bool,
    pub iterations: usize,
    pub intervals: usize,
    /// Relative change of the value at the last doubling of `M`.
    pub refinement_change: f64,
    /// Values reached from each initialization at the initial `M`.
    pub starts: Vec<StartReport>,
    /// `dt · A(mid_m, ψ_m)` on the returned path.
    pub interval_actions: Vec<f64>,
    /// Coefficient of variation of `interval_actions`.
    pub speed_cv: f64,
    /// Euclidean displacement applied to each endpoint.
    pub endpoint_push: [f64; 2],
    /// `|W_ε − W_{10ε}|` when an endpoint was pushed.
    pub epsilon_sensitivity: Option<f64>,
}

/// Approximates `W(μ, ν)` by minimizing the discrete action over paths.
///
/// Returns the best of several initializations. The result is flagged
/// unconverged if the optimizer or the interval refinement did not settle.
pub fn distance(model: &GibbsModel, mu: &Dist, nu: &Dist, opts: &MetricOptions) -> Result<MetricResult> {
    validate(model, mu, nu, opts)?;
    let (mu_e, push_mu) = push_inward(mu, opts.epsilon);
    let (nu_e, push_nu) = push_inward(nu, opts.epsilon);
    let mut result = solve_pushed(model, &mu_e, &nu_e, opts)?;
    let (lower, upper) = tv_bounds(model, mu, nu)?;
    result.lower_bound = lower;
    result.upper_bound = upper;
    result.endpoint_push = [push_mu, push_nu];
    if opts.sensitivity && (push_mu > 0.0 || push_nu > 0.0) {
        let coarse = MetricOptions { epsilon: 10.0 * opts.epsilon, sensitivity: false, ..opts.clone() };
        let (a, _) = push_inward(mu, coarse.epsilon);
        let (b, _) = push_inward(nu, coarse.epsilon);
        let other = solve_pushed(model, &a, &b, &coarse)?;
        result.epsilon_sensitivity = Some((other.value - result.value).abs());
    }
    Ok(result)
}

fn validate(model: &GibbsModel, mu: &Dist, nu: &Dist, opts: &MetricOptions) -> Result<()> {
    if mu.d() != model.d() || nu.d() != model.d() {
        return Err(Error::Domain(format!("endpoints must live on {} sites", model.d())));
    }
    if opts.intervals < 2 || opts.intervals % 2 != 0 {
        return Err(Error::Validation(format!("intervals must be even and at least 2, got {}", opts.intervals)));
    }
    if opts.max_intervals < opts.intervals {
        return Err(Error::Validation("max_intervals must be at least intervals".into()));
    }
    let d = model.d() as f64;
    if !(opts.epsilon > 0.0 && opts.epsilon * d < 0.5 && opts.floor > 0.0 && opts.floor * d < 0.5) {
        return Err(Error::Validation("epsilon and floor must be small and positive".into()));
    }
    Ok(())
}

/// Moves `μ` along the segment to the uniform measure until every entry is at least `eps`.
fn push_inward(mu: &Dist, eps: f64) -> (Dist, f64) {
    let m0 = mu.min_entry();
    if m0 >= eps {
        return (mu.clone(), 0.0);
    }
    let u = Dist::uniform(mu.d());
    let s = (eps - m0) / (1.0 / mu.d() as f64 - m0);
    let pushed = mu.mix(&u, s);
    let shift = pushed.l2_distance(mu);
    (pushed, shift)
}

fn solve_pushed(model: &GibbsModel, mu: &Dist, nu: &Dist, opts: &MetricOptions) -> Result<MetricResult> {
    let m = opts.intervals;
    let floor = opts.floor.min(mu.min_entry()).min(nu.min_entry());
    let mut kinds = vec![Start::Linear];
    if opts.multi_start {
        kinds.extend([Start::FreeGeodesic, Start::ThroughUniform]);
    }
    let runs: Vec<Result<(Vec<Vec<f64>>, Outcome)>> = kinds
        .par_iter()
        .map(|kind| {
            let init = kind.knots(model, mu, nu, m, floor, opts)?;
            let problem = Problem::new(model, m, floor);
            problem.minimize(init, opts)
        })
        .collect();
    let mut starts = Vec::new();
    let mut best: Option<(Vec<Vec<f64>>, Outcome)> = None;
    let mut iterations = 0;
    for (kind, run) in kinds.iter().zip(runs) {
        let (knots, out) = run?;
        iterations += out.iterations;
        starts.push(StartReport { name: kind.name().into(), value: out.value.sqrt(), converged: out.converged, iterations: out.iterations });
        if best.as_ref().is_none_or(|(_, b)| out.value < b.value) {
            best = Some((knots, out));
        }
    }
    let (mut knots, mut out) = best.expect("at least one start");

    let mut intervals = m;
    let mut change = 0.0;
    let mut settled = out.value.sqrt() <= 1e-150;
    while !settled && intervals < opts.max_intervals {
        intervals *= 2;
        let fine = upsample(&knots);
        let (k, o) = Problem::new(model, intervals, floor).minimize(fine, opts)?;
        iterations += o.iterations;
        change = (o.value.sqrt() - out.value.sqrt()).abs() / out.value.sqrt();
        knots = k;
        out = o;
        settled = change < opts.refine_tol;
    }

    let dists: Vec<Dist> = knots.into_iter().map(Dist::from_vec_unchecked).collect();
    let path = DiscretePath::from_knots(model, dists)?;
    let interval_actions = path.interval_actions(model)?;
    let value = interval_actions.iter().sum::<f64>().sqrt();
    Ok(MetricResult {
        value,
        speed_cv: coefficient_of_variation(&interval_actions),
        path,
        lower_bound: 0.0,
        upper_bound: ExtReal::Infinite,
        converged: out.converged && settled,
        iterations,
        intervals,
        refinement_change: change,
        starts,
        interval_actions,
        endpoint_push: [0.0, 0.0],
        epsilon_sensitivity: None,
    })
}

fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn upsample(knots: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * knots.len() - 1);
    for w in knots.windows(2) {
        out.push(w[0].clone());
        out.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
    }
    out.push(knots.last().unwrap().clone());
    out
}

#[derive(Debug, Clone, Copy)]
enum Start {
    Linear,
    /// Geodesic of the same graph with the interaction switched off.
    FreeGeodesic,
    /// Two segments through the uniform measure.
    ThroughUniform,
}

impl Start {
    fn name(self) -> &'static str {
        match self {
            Start::Linear => "linear",
            Start::FreeGeodesic => "free_geodesic",
            Start::ThroughUniform => "through_uniform",
        }
    }

    fn knots(self, model: &GibbsModel, mu: &Dist, nu: &Dist, m: usize, floor: f64, opts: &MetricOptions) -> Result<Vec<Vec<f64>>> {
        let line = |a: &Dist, b: &Dist, n: usize| -> Vec<Vec<f64>> {
            (0..=n).map(|i| a.mix(b, i as f64 / n as f64).into_vec()).collect()
        };
        Ok(match self {
            Start::Linear => line(mu, nu, m),
            Start::FreeGeodesic => {
                let free = model.without_potential();
                Problem::new(&free, m, floor).minimize(line(mu, nu, m), opts)?.0
            }
            Start::ThroughUniform => {
                let u = Dist::uniform(mu.d());
                let mut k = line(mu, &u, m / 2);
                k.pop();
                k.extend(line(&u, nu, m / 2));
                k
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    value: f64,
    converged: bool,
    iterations: usize,
}

struct Problem<'a> {
    model: &'a GibbsModel,
    m: usize,
    d: usize,
    floor: f64,
}

/// Objective value, gradient on interior knots, and the pseudo-inverses `B(mid_m)⁺`.
struct Eval {
    f: f64,
    grad: Vec<Vec<f64>>,
    blocks: Vec<DMatrix<f64>>,
}

impl<'a> Problem<'a> {
    fn new(model: &'a GibbsModel, m: usize, floor: f64) -> Self {
        Problem { model, m, d: model.d(), floor }
    }

    fn value(&self, knots: &[Vec<f64>]) -> Result<f64> {
        let mf = self.m as f64;
        let mut f = 0.0;
        for i in 0..self.m {
            let (mid, sigma) = self.interval(knots, i);
            let pinv = OnsagerInverse::new(&weights(self.model, &mid)?);
            let psi = pinv.apply(&sigma);
            f += dot(&sigma, &psi) / mf;
        }
        Ok(f)
    }

    fn interval(&self, knots: &[Vec<f64>], i: usize) -> (Dist, Vec<f64>) {
        let mf = self.m as f64;
        let (a, b) = (&knots[i], &knots[i + 1]);
        let mid = Dist::from_vec_unchecked(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect());
        let sigma = a.iter().zip(b).map(|(x, y)| mf * (y - x)).collect();
        (mid, sigma)
    }

    fn eval(&self, knots: &[Vec<f64>]) -> Result<Eval> {
        let (m, d) = (self.m, self.d);
        let dt = 1.0 / m as f64;
        let mut f = 0.0;
        let mut full = vec![vec![0.0; d]; m + 1];
        let mut blocks = Vec::with_capacity(m);
        for i in 0..m {
            let (mid, sigma) = self.interval(knots, i);
            let pinv = OnsagerInverse::new(&weights(self.model, &mid)?);
            let psi = pinv.apply(&sigma);
            f += dt * dot(&sigma, &psi);
            for x in 0..d {
                full[i + 1][x] += 2.0 * psi[x];
                full[i][x] -= 2.0 * psi[x];
            }
            if psi.iter().any(|v| *v != 0.0) {
                // envelope theorem: ∂/∂mid of dt·sup_φ(2⟨σ,φ⟩ − A(mid,φ)) is −dt·∂A(mid,ψ)/∂mid
                let h = (0.25 * mid.min_entry()).min(1e-6);
                for z in 0..d {
                    let shifted = |s: f64| {
                        let v: Vec<f64> =
                            mid.as_slice().iter().enumerate().map(|(x, p)| p + s * (if x == z { 1.0 } else { 0.0 } - 1.0 / d as f64)).collect();
                        Dist::from_vec_unchecked(v)
                    };
                    let up = weights(self.model, &shifted(h))?.action(&psi);
                    let dn = weights(self.model, &shifted(-h))?.action(&psi);
                    let g = -dt * (up - dn) / (2.0 * h);
                    full[i][z] += 0.5 * g;
                    full[i + 1][z] += 0.5 * g;
                }
            }
            blocks.push(pinv.matrix());
        }
        let grad = full[1..m].iter().map(|g| mean_zero(g.clone())).collect();
        Ok(Eval { f, grad, blocks })
    }

    /// Solves `2M·T z = g` for the block-tridiagonal `T` with diagonal blocks
    /// `G_{i−1} + G_i + 𝟙𝟙ᵀ/d` and off-diagonal blocks `−G_i`.
    fn precondition(&self, blocks: &[DMatrix<f64>], g: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (m, d) = (self.m, self.d);
        let n = m - 1;
        let ones = DMatrix::from_element(d, d, 1.0 / d as f64);
        let mut cp: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut gp: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            // interior knot i+1 touches intervals i and i+1
            let mut den = &blocks[i] + &blocks[i + 1] + &ones;
            let mut rhs = DVector::from_column_slice(&g[i]);
            if i > 0 {
                den += &blocks[i] * &cp[i - 1];
                rhs += &blocks[i] * &gp[i - 1];
            }
            let lu = den.lu();
            let upper = -&blocks[i + 1];
            let c = lu.solve(&upper).unwrap_or_else(|| DMatrix::zeros(d, d));
            let r = lu.solve(&rhs).unwrap_or_else(|| DVector::from_column_slice(&g[i]));
            cp.push(c);
            gp.push(r);
        }
        let mut z = vec![DVector::zeros(d); n];
        for i in (0..n).rev() {
            z[i] = if i + 1 < n { &gp[i] - &cp[i] * &z[i + 1] } else { gp[i].clone() };
        }
        let scale = 1.0 / (2.0 * m as f64);
        z.into_iter().map(|v| mean_zero(v.iter().map(|a| a * scale).collect())).collect()
    }

    /// Zeroes components that would push an entry at the floor further down.
    fn project_active(&self, knots: &[Vec<f64>], dir: &mut [Vec<f64>]) -> bool {
        let mut changed = false;
        for (i, p) in dir.iter_mut().enumerate() {
            let k = &knots[i + 1];
            let mut fixed = vec![false; self.d];
            loop {
                let mut newly = false;
                for x in 0..self.d {
                    if !fixed[x] && p[x] < 0.0 && k[x] <= self.floor * (1.0 + 1e-9) {
                        fixed[x] = true;
                        newly = true;
                    }
                }
                if !newly {
                    break;
                }
                changed = true;
                let free: Vec<usize> = (0..self.d).filter(|&x| !fixed[x]).collect();
                if free.is_empty() {
                    p.iter_mut().for_each(|v| *v = 0.0);
                    break;
                }
                for x in 0..self.d {
                    if fixed[x] {
                        p[x] = 0.0;
                    }
                }
                let mean = free.iter().map(|&x| p[x]).sum::<f64>() / free.len() as f64;
                free.iter().for_each(|&x| p[x] -= mean);
            }
        }
        changed
    }

    fn step(&self, knots: &[Vec<f64>], dir: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
        let mut out = knots.to_vec();
        for (i, p) in dir.iter().enumerate() {
            let k = &mut out[i + 1];
            for x in 0..self.d {
                k[x] = (k[x] + alpha * p[x]).max(self.floor);
            }
            let s: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    fn max_step(&self, knots: &[Vec<f64>], dir: &[Vec<f64>]) -> f64 {
        let mut a = f64::INFINITY;
        for (i, p) in dir.iter().enumerate() {
            for x in 0..self.d {
                if p[x] < 0.0 {
                    a = a.min((knots[i + 1][x] - self.floor).max(0.0) / -p[x]);
                }
            }
        }
        a
    }

    /// Preconditioned Polak–Ribière+ conjugate gradients with Armijo backtracking.
    fn minimize(&self, mut knots: Vec<Vec<f64>>, opts: &MetricOptions) -> Result<(Vec<Vec<f64>>, Outcome)> {
        for k in knots[1..self.m].iter_mut() {
            k.iter_mut().for_each(|v| *v = v.max(self.floor));
            let s: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= s);
        }
        let mut ev = self.eval(&knots)?;
        let mut z = self.precondition(&ev.blocks, &ev.grad);
        let mut dir: Vec<Vec<f64>> = z.iter().map(|v| v.iter().map(|a| -a).collect()).collect();
        let mut gz_old = inner(&ev.grad, &z);
        let mut iterations = 0;
        let mut converged = false;
        let mut stalls = 0;
        while iterations < opts.max_iterations {
            // Newton decrement on the free coordinates
            let mut steepest: Vec<Vec<f64>> = z.iter().map(|v| v.iter().map(|a| -a).collect()).collect();
            self.project_active(&knots, &mut steepest);
            let decrement = -inner(&ev.grad, &steepest);
            if ev.f <= 1e-300 || decrement <= opts.tol * ev.f {
                converged = true;
                break;
            }
            iterations += 1;
            if self.project_active(&knots, &mut dir) || inner(&ev.grad, &dir) >= 0.0 {
                dir = steepest.clone();
            }
            let slope = inner(&ev.grad, &dir);
            let amax = self.max_step(&knots, &dir);
            let mut alpha = amax.min(1.0);
            let mut accepted = None;
            for _ in 0..60 {
                let trial = self.step(&knots, &dir, alpha);
                let ft = self.value(&trial)?;
                if ft <= ev.f + 1e-4 * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(next) = accepted else {
                if dir != steepest {
                    dir = steepest;
                    continue;
                }
                // no decrease is representable in floating point
                converged = decrement <= 1e-6 * ev.f;
                break;
            };
            let f_old = ev.f;
            knots = next;
            ev = self.eval(&knots)?;
            stalls = if f_old - ev.f <= 1e-15 * f_old { stalls + 1 } else { 0 };
            if stalls >= 5 {
                converged = true;
                break;
            }
            let z_new = self.precondition(&ev.blocks, &ev.grad);
            let gz_new = inner(&ev.grad, &z_new);
            let cross = inner(&ev.grad, &z);
            let beta = if gz_old > 0.0 { ((gz_new - cross) / gz_old).max(0.0) } else { 0.0 };
            dir = z_new.iter().zip(&dir).map(|(zv, pv)| zv.iter().zip(pv).map(|(a, b)| -a + beta * b).collect()).collect();
            z = z_new;
            gz_old = gz_new;
        }
        Ok((knots, Outcome { value: ev.f, converged, iterations }))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inner(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum()
}

fn mean_zero(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= mean);
    v
}
