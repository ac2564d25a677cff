//! The nonlinear master equation `ċ = c Q(c)` and its gradient-flow structure.
//!
//! The flow is the gradient flow of the free energy
//! `F(μ) = Σ μ_x log μ_x + U(μ)` for the geometry induced by the Onsager
//! operator `(K(μ)ψ)_x = Σ_y w_xy(μ)(ψ_x − ψ_y)` with edge weights
//! `w_xy(μ) = Λ(μ_x Q_xy(μ), μ_y Q_yx(μ))`. The identity `ċ = −K(c) DF(c)`
//! holds pointwise, and the De Giorgi functional
//! `J = F(c_T) − F(c_0) + ½∫I + ½∫A` vanishes exactly on solutions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gibbs::GibbsModel;
use crate::metric::{action, solve_potential};
use crate::simplex::{close_balance, log_mean_unchecked, Dist, EdgeField, ExtReal, NEG_TOL};

/// Symmetric edge weights `w_xy(μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(EdgeField);

impl WeightMatrix {
    pub fn d(&self) -> usize {
        self.0.d()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_edge_field(&self) -> &EdgeField {
        &self.0
    }

    /// `(K ψ)_x = Σ_y w_xy (ψ_x − ψ_y)`.
    pub fn onsager_apply(&self, psi: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut out = vec![0.0; d];
        for x in 0..d {
            for y in (x + 1)..d {
                let flux = self.get(x, y) * (psi[x] - psi[y]);
                out[x] += flux;
                out[y] -= flux;
            }
        }
        close_balance(&mut out);
        out
    }

    /// `½ Σ_{x,y} w_xy (ψ_y − ψ_x)²`.
    pub fn action(&self, psi: &[f64]) -> f64 {
        let d = self.d();
        let mut a = 0.0;
        for x in 0..d {
            for y in (x + 1)..d {
                let g = psi[y] - psi[x];
                a += self.get(x, y) * g * g;
            }
        }
        a
    }

    /// The matrix `B` of the Onsager operator: `B_xx = Σ_{z≠x} w_xz`, `B_xy = −w_xy`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut b = DMatrix::from_fn(d, d, |x, y| if x == y { 0.0 } else { -self.get(x, y) });
        for x in 0..d {
            b[(x, x)] = (0..d).filter(|&y| y != x).map(|y| self.get(x, y)).sum();
        }
        b
    }
}

pub fn weights(model: &GibbsModel, mu: &Dist) -> Result<WeightMatrix> {
    let q = model.rates(mu)?;
    let d = model.d();
    let mut w = EdgeField::zeros(d);
    for x in 0..d {
        for y in (x + 1)..d {
            let v = log_mean_unchecked(mu[x] * q.get(x, y), mu[y] * q.get(y, x));
            w.set(x, y, v);
            w.set(y, x, v);
        }
    }
    Ok(WeightMatrix(w))
}

/// `(μ Q(μ))_x = Σ_y μ_y Q_yx(μ)`; the output sums to zero.
pub fn drift(model: &GibbsModel, mu: &Dist) -> Result<Vec<f64>> {
    let q = model.rates(mu)?;
    let d = model.d();
    let mut out = vec![0.0; d];
    for x in 0..d {
        for y in (x + 1)..d {
            let net = mu[y] * q.get(y, x) - mu[x] * q.get(x, y);
            out[x] += net;
            out[y] -= net;
        }
    }
    close_balance(&mut out);
    Ok(out)
}

/// `F(μ) = Σ μ_x log μ_x + U(μ)` with `0·log 0 = 0`.
pub fn free_energy(model: &GibbsModel, mu: &Dist) -> f64 {
    mu.neg_entropy() + model.energy(mu)
}

/// `DF_x = 1 + log μ_x + H_x(μ)`, defined on the interior only.
pub fn free_energy_gradient(model: &GibbsModel, mu: &Dist) -> Result<Vec<f64>> {
    if !mu.is_strictly_positive() {
        return Err(Error::Domain(format!("free-energy gradient needs a strictly positive measure, got {mu}")));
    }
    let h = model.field_h(mu);
    Ok(mu.as_slice().iter().zip(&h).map(|(m, hx)| 1.0 + m.ln() + hx).collect())
}

pub fn onsager_apply(model: &GibbsModel, mu: &Dist, psi: &[f64]) -> Result<Vec<f64>> {
    Ok(weights(model, mu)?.onsager_apply(psi))
}

/// Fisher information; `+∞` off the interior.
pub fn fisher_information(model: &GibbsModel, mu: &Dist) -> Result<ExtReal> {
    if !mu.is_strictly_positive() {
        return Ok(ExtReal::Infinite);
    }
    let q = model.rates(mu)?;
    let w = weights(model, mu)?;
    let d = model.d();
    let mut total = 0.0;
    for x in 0..d {
        for y in (x + 1)..d {
            // (x, y) ∈ E_μ iff (y, x) ∈ E_μ; each unordered edge is counted once.
            if q.get(x, y) > 0.0 {
                let g = (mu[x] * q.get(x, y)).ln() - (mu[y] * q.get(y, x)).ln();
                total += w.get(x, y) * g * g;
            }
        }
    }
    Ok(ExtReal::Finite(total))
}

/// A time-stamped curve in the simplex with gradient-flow diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Dist>,
    /// `ċ` at each time: the exact drift for integrated solutions, finite
    /// differences for curves built with [`Trajectory::from_states`].
    pub velocities: Vec<Vec<f64>>,
    pub free_energy: Vec<f64>,
    pub fisher: Vec<ExtReal>,
    /// Running De Giorgi functional `J(0, t_i)`; `+∞` while the curve touches the boundary.
    pub cumulative_j: Vec<ExtReal>,
}

impl Trajectory {
    /// Builds a curve from samples, estimating `ċ` by second-order finite differences.
    pub fn from_states(model: &GibbsModel, times: Vec<f64>, states: Vec<Dist>) -> Result<Self> {
        if times.len() != states.len() || times.len() < 3 {
            return Err(Error::Domain("a trajectory needs at least 3 samples with matching times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("trajectory times must be strictly increasing".into()));
        }
        let velocities = finite_difference_velocities(&times, &states);
        Self::with_velocities(model, times, states, velocities)
    }

    fn with_velocities(model: &GibbsModel, times: Vec<f64>, states: Vec<Dist>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        let free_energy = states.iter().map(|s| free_energy(model, s)).collect();
        let fisher = states.iter().map(|s| fisher_information(model, s)).collect::<Result<Vec<_>>>()?;
        let mut traj = Trajectory { times, states, velocities, free_energy, fisher, cumulative_j: Vec::new() };
        traj.cumulative_j = running_de_giorgi(model, &traj)?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &Dist {
        self.states.last().expect("trajectories are nonempty")
    }

    /// The same curve run backwards in time over `[0, T]`.
    pub fn reversed(&self, model: &GibbsModel) -> Result<Self> {
        let t_end = *self.times.last().unwrap();
        let t0 = self.times[0];
        let times = self.times.iter().rev().map(|t| t0 + t_end - t).collect();
        let states = self.states.iter().rev().cloned().collect();
        let velocities = self.velocities.iter().rev().map(|v| v.iter().map(|a| -a).collect()).collect();
        Self::with_velocities(model, times, states, velocities)
    }

    /// `true` if `F` never increases by more than `tol` between samples.
    pub fn free_energy_nonincreasing(&self, tol: f64) -> bool {
        self.free_energy.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

fn finite_difference_velocities(times: &[f64], states: &[Dist]) -> Vec<Vec<f64>> {
    let n = times.len();
    let d = states[0].d();
    (0..n)
        .map(|i| {
            // three-point Lagrange derivative evaluated at t_i
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            let (ta, tb, tc, t) = (times[a], times[b], times[c], times[i]);
            let la = ((t - tb) + (t - tc)) / ((ta - tb) * (ta - tc));
            let lb = ((t - ta) + (t - tc)) / ((tb - ta) * (tb - tc));
            let lc = ((t - ta) + (t - tb)) / ((tc - ta) * (tc - tb));
            let mut v: Vec<f64> =
                (0..d).map(|x| la * states[a][x] + lb * states[b][x] + lc * states[c][x]).collect();
            close_balance(&mut v);
            v
        })
        .collect()
}

/// Running `J(0, t_i)` by trapezoid quadrature, with `ψ` recovered from `ċ`.
fn running_de_giorgi(model: &GibbsModel, traj: &Trajectory) -> Result<Vec<ExtReal>> {
    let n = traj.len();
    let mut out = Vec::with_capacity(n);
    let mut integrand_prev: Option<f64> = None;
    let mut acc = ExtReal::Finite(0.0);
    for i in 0..n {
        let integrand = match traj.fisher[i] {
            ExtReal::Finite(fi) => {
                let psi = solve_potential(model, &traj.states[i], &traj.velocities[i])?;
                Some(0.5 * fi + 0.5 * action(model, &traj.states[i], &psi)?)
            }
            ExtReal::Infinite => None,
        };
        if i > 0 {
            let dt = traj.times[i] - traj.times[i - 1];
            acc = match (integrand_prev, integrand) {
                (Some(a), Some(b)) => acc + ExtReal::Finite(0.5 * dt * (a + b)),
                _ => ExtReal::Infinite,
            };
        } else if integrand.is_none() {
            acc = ExtReal::Infinite;
        }
        integrand_prev = integrand;
        out.push(acc + ExtReal::Finite(traj.free_energy[i] - traj.free_energy[0]));
    }
    Ok(out)
}

/// Default step `1e-3 / max_x (exit rate)` at the initial state.
pub fn default_dt(model: &GibbsModel, mu0: &Dist) -> Result<f64> {
    let rate = model.rates(mu0)?.max_exit_rate();
    Ok(if rate > 0.0 { 1e-3 / rate } else { 1e-3 })
}

/// Fixed-step classical RK4 for `ċ = c Q(c)` on `[0, t_final]`.
///
/// The step is shrunk slightly so that an integer number of steps lands on
/// `t_final`. Every stage is checked to stay in the simplex.
pub fn integrate(model: &GibbsModel, mu0: &Dist, t_final: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::Domain(format!("need dt > 0 and T ≥ 0, got dt={dt}, T={t_final}")));
    }
    let steps = ((t_final / dt).ceil() as usize).max(1);
    let h = t_final / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    let mut c = mu0.clone();
    let mut k1 = drift(model, &c)?;
    times.push(0.0);
    states.push(c.clone());
    velocities.push(k1.clone());
    for step in 0..steps {
        let t = step as f64 * h;
        let stage = |base: &Dist, k: &[f64], s: f64| -> Result<Dist> { to_simplex(base, k, s, t) };
        let k2 = drift(model, &stage(&c, &k1, 0.5 * h)?)?;
        let k3 = drift(model, &stage(&c, &k2, 0.5 * h)?)?;
        let k4 = drift(model, &stage(&c, &k3, h)?)?;
        let incr: Vec<f64> = (0..c.d()).map(|x| (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]) / 6.0).collect();
        c = to_simplex(&c, &incr, h, t + h)?;
        k1 = drift(model, &c)?;
        times.push((step + 1) as f64 * h);
        states.push(c.clone());
        velocities.push(k1.clone());
    }
    Trajectory::with_velocities(model, times, states, velocities)
}

fn to_simplex(base: &Dist, k: &[f64], s: f64, t: f64) -> Result<Dist> {
    let p: Vec<f64> = base.as_slice().iter().zip(k).map(|(b, v)| b + s * v).collect();
    if let Some(v) = p.iter().find(|v| **v < -NEG_TOL) {
        return Err(Error::Integration { time: t, reason: format!("negative entry {v:e}") });
    }
    Dist::new(p).map_err(|e| Error::Integration { time: t, reason: e.to_string() })
}

/// Terms of the De Giorgi functional on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DeGiorgi {
    pub j: f64,
    pub delta_f: f64,
    pub fisher_integral: f64,
    pub action_integral: f64,
}

/// `J = F(c_T) − F(c_0) + ½∫I dt + ½∫A(c, ψ) dt` with `K(c)ψ = −ċ`,
/// trapezoid quadrature on the trajectory grid.
pub fn de_giorgi_j(model: &GibbsModel, traj: &Trajectory) -> Result<DeGiorgi> {
    let n = traj.len();
    let mut fisher = Vec::with_capacity(n);
    let mut act = Vec::with_capacity(n);
    for i in 0..n {
        let fi = traj.fisher[i]
            .finite()
            .ok_or_else(|| Error::Domain(format!("trajectory leaves the interior at t={}", traj.times[i])))?;
        fisher.push(fi);
        let psi = solve_potential(model, &traj.states[i], &traj.velocities[i])?;
        act.push(action(model, &traj.states[i], &psi)?);
    }
    let fisher_integral = trapezoid(&traj.times, &fisher);
    let action_integral = trapezoid(&traj.times, &act);
    let delta_f = traj.free_energy[n - 1] - traj.free_energy[0];
    Ok(DeGiorgi { j: delta_f + 0.5 * fisher_integral + 0.5 * action_integral, delta_f, fisher_integral, action_integral })
}

/// Integrates from `mu0` and halves `dt` until `J` changes by less than 10%
/// (or by less than `1e-12·|ΔF|` in absolute terms). Returns `J` and the final step.
pub fn de_giorgi_refined(model: &GibbsModel, mu0: &Dist, t_final: f64, dt: f64, max_halvings: usize) -> Result<(DeGiorgi, f64)> {
    let mut h = dt;
    let mut prev = de_giorgi_j(model, &integrate(model, mu0, t_final, h)?)?;
    for _ in 0..max_halvings {
        h *= 0.5;
        let next = de_giorgi_j(model, &integrate(model, mu0, t_final, h)?)?;
        let floor = 1e-12 * next.delta_f.abs();
        if (next.j - prev.j).abs() <= (0.1 * prev.j.abs()).max(floor) {
            return Ok((next, h));
        }
        prev = next;
    }
    Ok((prev, h))
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Scheme;
    use crate::testing::{random_dist, random_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Positive root of `m = tanh(βm)` by fixed-point iteration.
    fn tanh_fixed_point(beta: f64) -> f64 {
        let mut m = 1.0;
        for _ in 0..10_000 {
            m = (beta * m).tanh();
        }
        m
    }

    fn cw(beta: f64) -> GibbsModel {
        GibbsModel::curie_weiss(beta, Scheme::SqrtPi).unwrap()
    }

    fn d2(p: f64) -> Dist {
        Dist::new(vec![p, 1.0 - p]).unwrap()
    }

    #[test]
    fn weights_examples() {
        let free = GibbsModel::free(2, Scheme::SqrtPi).unwrap();
        let w = weights(&free, &Dist::uniform(2)).unwrap();
        assert_eq!(w.get(0, 1), 0.5);
        let w = weights(&free, &Dist::dirac(2, 0)).unwrap();
        assert_eq!(w.get(0, 1), 0.0);
    }

    #[test]
    fn weights_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let w = weights(&model, &random_dist(&mut rng, model.d(), 0.0)).unwrap();
            for x in 0..model.d() {
                for y in 0..model.d() {
                    assert_eq!(w.get(x, y), w.get(y, x));
                }
            }
        }
    }

    #[test]
    fn drift_examples() {
        for beta in [0.5, 1.0, 3.0] {
            assert_eq!(drift(&cw(beta), &Dist::uniform(2)).unwrap(), vec![0.0, 0.0]);
        }
        let free = GibbsModel::free(2, Scheme::Metropolis).unwrap();
        assert_eq!(drift(&free, &Dist::dirac(2, 0)).unwrap(), vec![-1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let v = drift(&model, &random_dist(&mut rng, model.d(), 0.0)).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn free_energy_examples() {
        let free = GibbsModel::free(2, Scheme::SqrtPi).unwrap();
        assert!((free_energy(&free, &Dist::uniform(2)) + 2f64.ln()).abs() < 1e-15);
        for beta in [0.5, 2.0] {
            assert!((free_energy(&cw(beta), &Dist::uniform(2)) - (beta / 2.0 - 2f64.ln())).abs() < 1e-15);
            for p in [0.0_f64, 0.2, 0.9] {
                let closed = if p > 0.0 { p * p.ln() } else { 0.0 } + (1.0 - p) * (1.0 - p).ln() + 2.0 * beta * p * (1.0 - p);
                assert!((free_energy(&cw(beta), &d2(p)) - closed).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn free_energy_gradient_examples() {
        let free = GibbsModel::free(4, Scheme::SqrtPi).unwrap();
        let g = free_energy_gradient(&free, &Dist::uniform(4)).unwrap();
        assert!(g.iter().all(|v| (v - (1.0 - 4f64.ln())).abs() < 1e-15));
        assert!(free_energy_gradient(&free, &Dist::dirac(4, 0)).is_err());
    }

    #[test]
    fn free_energy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 0.02);
            let g = free_energy_gradient(&model, &mu).unwrap();
            let f = |p: &[f64]| p.iter().map(|v| v * v.ln()).sum::<f64>() + model.potential().energy(p);
            for x in 0..model.d() {
                let mut up = mu.as_slice().to_vec();
                let mut dn = up.clone();
                up[x] += h;
                dn[x] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!((fd - g[x]).abs() < 1e-6, "fd={fd} g={}", g[x]);
            }
            let shifted: Vec<f64> = g.iter().map(|v| v + 1.7).collect();
            let (a, b) = (onsager_apply(&model, &mu, &g).unwrap(), onsager_apply(&model, &mu, &shifted).unwrap());
            for x in 0..model.d() {
                assert!((a[x] - b[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn onsager_kills_constants_and_matches_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 0.0);
            let w = weights(&model, &mu).unwrap();
            assert!(w.onsager_apply(&vec![2.5; model.d()]).iter().all(|v| v.abs() < 1e-15));
            let psi: Vec<f64> = (0..model.d()).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            let kpsi = w.onsager_apply(&psi);
            let quad: f64 = psi.iter().zip(&kpsi).map(|(a, b)| a * b).sum();
            let a = action(&model, &mu, &psi).unwrap();
            assert!((quad - a).abs() < 1e-12 * (1.0 + a), "⟨ψ,Kψ⟩={quad} A={a}");
        }
    }

    #[test]
    fn gradient_flow_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 1e-3);
            let v = drift(&model, &mu).unwrap();
            let kdf = onsager_apply(&model, &mu, &free_energy_gradient(&model, &mu).unwrap()).unwrap();
            for x in 0..model.d() {
                assert!((v[x] + kdf[x]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_information(&cw(2.0), &Dist::uniform(2)).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(fisher_information(&cw(2.0), &Dist::dirac(2, 1)).unwrap(), ExtReal::Infinite);
    }

    #[test]
    fn fisher_equals_action_of_free_energy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let mu = random_dist(&mut rng, model.d(), 1e-3);
            let i = fisher_information(&model, &mu).unwrap().finite().unwrap();
            let neg: Vec<f64> = free_energy_gradient(&model, &mu).unwrap().iter().map(|v| -v).collect();
            let a = action(&model, &mu, &neg).unwrap();
            assert!((i - a).abs() <= 1e-10 * (1.0 + i));
        }
    }

    #[test]
    fn free_energy_slope_matches_minus_fisher() {
        let model = cw(1.5);
        let traj = integrate(&model, &d2(0.85), 1.0, 1e-3).unwrap();
        for i in [100, 400, 800] {
            let slope = (traj.free_energy[i + 1] - traj.free_energy[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
            let fi = traj.fisher[i].finite().unwrap();
            assert!((slope + fi).abs() <= 1e-4 * fi, "slope={slope} I={fi}");
        }
    }

    #[test]
    fn stationary_start_stays_put() {
        let traj = integrate(&cw(2.0), &Dist::uniform(2), 3.0, 1e-2).unwrap();
        assert!(traj.states.iter().all(|s| s.l2_distance(&Dist::uniform(2)) <= 1e-10));
    }

    #[test]
    fn curie_weiss_converges_to_tanh_fixed_point() {
        let model = cw(2.0);
        let traj = integrate(&model, &d2(0.9), 40.0, 1e-2).unwrap();
        let c = traj.last_state();
        let m = c[0] - c[1];
        assert!((m - tanh_fixed_point(2.0)).abs() < 1e-8, "m={m}");
        assert!((tanh_fixed_point(2.0) - 0.9575).abs() < 1e-4);
    }

    #[test]
    fn free_energy_decreases_and_mass_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let model = random_model(&mut rng);
            let mu0 = random_dist(&mut rng, model.d(), 0.0);
            let traj = integrate(&model, &mu0, 2.0, 1e-3).unwrap();
            assert!(traj.free_energy_nonincreasing(1e-13));
            for s in &traj.states {
                assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(s.is_strictly_positive() || s == &traj.states[0]);
            }
        }
    }

    #[test]
    fn boundary_start_enters_interior() {
        let traj = integrate(&cw(1.0), &Dist::dirac(2, 0), 0.5, 1e-3).unwrap();
        assert_eq!(traj.fisher[0], ExtReal::Infinite);
        assert!(traj.fisher[1].is_finite());
        assert_eq!(traj.cumulative_j[5], ExtReal::Infinite);
        assert!(traj.states[1..].iter().all(Dist::is_strictly_positive));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let free = GibbsModel::free(2, Scheme::SqrtPi).unwrap();
        let err = integrate(&free, &Dist::dirac(2, 0), 10.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }

    #[test]
    fn de_giorgi_vanishes_on_solutions_and_not_elsewhere() {
        let model = cw(2.0);
        let traj = integrate(&model, &d2(0.7), 3.0, 1e-3).unwrap();
        let j = de_giorgi_j(&model, &traj).unwrap();
        assert!(j.j.abs() <= 1e-4 * j.delta_f.abs(), "{j:?}");
        assert!((j.action_integral - j.fisher_integral).abs() < 1e-9 * j.fisher_integral);
        let running = traj.cumulative_j.last().unwrap().finite().unwrap();
        assert!((running - j.j).abs() < 1e-12);

        let back = de_giorgi_j(&model, &traj.reversed(&model).unwrap()).unwrap();
        // reversal flips ΔF and keeps both integrals, so J = 2∫I
        assert!((back.j - 2.0 * j.fisher_integral).abs() <= 1e-4 * back.j);

        let (a, b) = (d2(0.3), d2(0.8));
        let times: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let states = times.iter().map(|&t| a.mix(&b, t)).collect();
        let line = Trajectory::from_states(&model, times, states).unwrap();
        assert!(de_giorgi_j(&model, &line).unwrap().j > 1e-3);
    }

    #[test]
    fn de_giorgi_refinement_terminates() {
        let model = cw(1.0);
        let (j, h) = de_giorgi_refined(&model, &d2(0.8), 1.0, 1e-2, 6).unwrap();
        assert!(h <= 1e-2);
        assert!(j.j.abs() <= 1e-4 * j.delta_f.abs());
    }
}
