//! The N-particle mean-field jump process, simulated on occupation vectors.
//!
//! Rates depend on a configuration only through its empirical measure, so the
//! process lumps exactly to a Markov chain on `P_N(X) = {n/N : Σn = N}`. A
//! particle at `x` jumps to `y` at rate `Q^N_xy(ν)`, making the occupation
//! chain move `n → n − e_x + e_y` at rate `n_x Q^N_xy(ν)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::flow::free_energy;
use crate::gibbs::{Adjacency, GibbsModel, Scheme};
use crate::simplex::Dist;

/// Largest occupation space the exact solvers will enumerate.
pub const CAPACITY_LIMIT: u128 = 10_000_000;

/// Occupation numbers `n_x` of `N = Σn` particles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Occupation(Vec<usize>);

impl Occupation {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Domain("need at least two sites".into()));
        }
        if counts.iter().sum::<usize>() == 0 {
            return Err(Error::Domain("need at least one particle".into()));
        }
        Ok(Occupation(counts))
    }

    /// The occupation vector with empirical measure `mu`, if `N·mu` is integral.
    pub fn from_dist(mu: &Dist, n: usize) -> Result<Self> {
        let counts: Vec<usize> = mu.as_slice().iter().map(|p| (p * n as f64).round() as usize).collect();
        let exact = mu.as_slice().iter().zip(&counts).all(|(p, c)| (p * n as f64 - *c as f64).abs() < 1e-9);
        if !exact || counts.iter().sum::<usize>() != n {
            return Err(Error::Domain(format!("{mu} is not in P_{n}(X)")));
        }
        Occupation::new(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }

    /// `L^N = n/N`.
    pub fn empirical(&self) -> Dist {
        let n = self.n() as f64;
        Dist::from_vec_unchecked(self.0.iter().map(|&c| c as f64 / n).collect())
    }

    fn moved(&self, x: usize, y: usize) -> Occupation {
        let mut c = self.0.clone();
        c[x] -= 1;
        c[y] += 1;
        Occupation(c)
    }
}

/// A Gibbs model run with `N` particles.
#[derive(Debug, Clone)]
pub struct ParticleModel {
    base: GibbsModel,
    n: usize,
    fixed_adjacency: Option<DMatrix<f64>>,
}

impl ParticleModel {
    pub fn new(base: GibbsModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("particle count must be at least 1".into()));
        }
        let fixed_adjacency = match base.adjacency() {
            Adjacency::Dynamic(_) => None,
            _ => Some(base.adjacency_matrix(&Dist::uniform(base.d()))?),
        };
        Ok(ParticleModel { base, n, fixed_adjacency })
    }

    pub fn base(&self) -> &GibbsModel {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.base.d()
    }

    fn energy(&self, counts: &[usize]) -> f64 {
        let n = self.n as f64;
        let nu: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        self.base.potential().energy(&nu)
    }

    /// Per-particle rate `Q^N_xy` at `ν = state/N`; zero if site `x` is empty.
    ///
    /// With `ΔU = U(ν^{x→y}) − U(ν)` the rate is `A_xy · exp(−(N/2)ΔU)` for the
    /// square-root scheme and `A_xy · exp(−N(ΔU)_+)` for Metropolis. A
    /// state-dependent adjacency is evaluated at the midpoint of `ν` and `ν^{x→y}`,
    /// which keeps the occupation chain reversible.
    pub fn rate(&self, state: &Occupation, x: usize, y: usize) -> Result<f64> {
        self.check(state)?;
        if x == y || state.0[x] == 0 {
            return Ok(0.0);
        }
        let u0 = self.energy(&state.0);
        self.rate_with(state, x, y, u0)
    }

    fn rate_with(&self, state: &Occupation, x: usize, y: usize, u0: f64) -> Result<f64> {
        let a = match &self.fixed_adjacency {
            Some(a) => a[(x, y)],
            None => {
                let n = self.n as f64;
                let mid: Vec<f64> = (0..self.d())
                    .map(|z| {
                        let shift = if z == x { -0.5 } else if z == y { 0.5 } else { 0.0 };
                        (state.0[z] as f64 + shift) / n
                    })
                    .collect();
                self.base.adjacency_matrix(&Dist::from_vec_unchecked(mid))?[(x, y)]
            }
        };
        if a == 0.0 {
            return Ok(0.0);
        }
        let du = self.energy(&state.moved(x, y).0) - u0;
        let n = self.n as f64;
        let factor = match self.base.scheme() {
            Scheme::SqrtPi => (-0.5 * n * du).exp(),
            Scheme::Metropolis => (-n * du.max(0.0)).exp(),
        };
        Ok(a * factor)
    }

    /// All occupation-chain moves out of `state` with their total rates `n_x Q^N_xy`.
    pub fn transitions(&self, state: &Occupation) -> Result<Vec<(usize, usize, f64)>> {
        self.check(state)?;
        let u0 = self.energy(&state.0);
        let d = self.d();
        let mut out = Vec::with_capacity(d * (d - 1));
        for x in 0..d {
            if state.0[x] == 0 {
                continue;
            }
            for y in 0..d {
                if y != x {
                    let r = state.0[x] as f64 * self.rate_with(state, x, y, u0)?;
                    if r > 0.0 {
                        out.push((x, y, r));
                    }
                }
            }
        }
        Ok(out)
    }

    fn check(&self, state: &Occupation) -> Result<()> {
        if state.d() != self.d() || state.n() != self.n {
            return Err(Error::Domain(format!("state {:?} is not in P_{}(X) on {} sites", state.0, self.n, self.d())));
        }
        Ok(())
    }
}

/// The enumerated state space `P_N(X)`.
#[derive(Debug, Clone)]
pub struct OccupationSpace {
    n: usize,
    d: usize,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

/// `binom(N+d−1, d−1)` computed without overflow up to the capacity limit.
pub fn occupation_count(n: usize, d: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..d as u128 {
        c = c * (n as u128 + i) / i;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

impl OccupationSpace {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        let size = occupation_count(n, d);
        if size > CAPACITY_LIMIT {
            return Err(Error::Capacity { size, limit: CAPACITY_LIMIT });
        }
        let mut states = Vec::with_capacity(size as usize);
        let mut current = vec![0; d];
        compositions(n, 0, &mut current, &mut states);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(OccupationSpace { n, d, states, index })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn index_of(&self, s: &Occupation) -> Option<usize> {
        self.index.get(s).copied()
    }
}

fn compositions(left: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Occupation>) {
    if pos == current.len() - 1 {
        current[pos] = left;
        out.push(Occupation(current.clone()));
        return;
    }
    for k in (0..=left).rev() {
        current[pos] = k;
        compositions(left - k, pos + 1, current, out);
    }
}

/// A probability vector on `P_N(X)` at a given time.
#[derive(Debug, Clone)]
pub struct OccupationChainLaw {
    pub space: Arc<OccupationSpace>,
    pub probs: Vec<f64>,
    pub time: f64,
}

impl OccupationChainLaw {
    pub fn point_mass(space: Arc<OccupationSpace>, state: &Occupation) -> Result<Self> {
        let i = space
            .index_of(state)
            .ok_or_else(|| Error::SupportMismatch(format!("{:?} is not in P_{}(X)", state.0, space.n)))?;
        let mut probs = vec![0.0; space.len()];
        probs[i] = 1.0;
        Ok(OccupationChainLaw { space, probs, time: 0.0 })
    }

    /// `E[L^N]`.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.space.n as f64;
        let mut m = vec![0.0; self.space.d];
        for (s, p) in self.space.states.iter().zip(&self.probs) {
            for (x, &c) in s.0.iter().enumerate() {
                m[x] += p * c as f64 / n;
            }
        }
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// `ln(N! / Π n_x!)`.
pub fn ln_multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    ln_factorial(n as u64) - counts.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>()
}

/// Law of `L^N` under the N-particle invariant measure:
/// `∝ multinomial(N; n) · exp(−N U(n/N))`, normalized in the log domain.
pub fn pi_n_projected(pm: &ParticleModel) -> Result<OccupationChainLaw> {
    let space = Arc::new(OccupationSpace::new(pm.n, pm.d())?);
    Ok(pi_n_on(pm, space))
}

fn pi_n_on(pm: &ParticleModel, space: Arc<OccupationSpace>) -> OccupationChainLaw {
    let n = pm.n as f64;
    let logw: Vec<f64> = space.states.iter().map(|s| ln_multinomial(&s.0) - n * pm.energy(&s.0)).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logw.iter().map(|l| (l - max).exp()).sum();
    let probs = logw.iter().map(|l| (l - max).exp() / z).collect();
    OccupationChainLaw { space, probs, time: 0.0 }
}

/// `max |π(n) r(n→n') − π(n') r(n'→n)|` over all moves of the occupation chain.
pub fn lumped_detailed_balance_residual(pm: &ParticleModel) -> Result<f64> {
    let pi = pi_n_projected(pm)?;
    let space = &pi.space;
    let mut worst: f64 = 0.0;
    for (i, s) in space.states.iter().enumerate() {
        for (x, y, r) in pm.transitions(s)? {
            let t = s.moved(x, y);
            let j = space.index_of(&t).expect("moves stay in P_N");
            let back = t.0[y] as f64 * pm.rate(&t, y, x)?;
            worst = worst.max((pi.probs[i] * r - pi.probs[j] * back).abs());
        }
    }
    Ok(worst)
}

/// Sparse generator of the occupation chain.
pub struct MasterEquation {
    space: Arc<OccupationSpace>,
    moves: Vec<(usize, usize, f64)>,
    exit: Vec<f64>,
}

impl MasterEquation {
    pub fn new(pm: &ParticleModel) -> Result<Self> {
        let space = Arc::new(OccupationSpace::new(pm.n, pm.d())?);
        Self::on(pm, space)
    }

    pub fn on(pm: &ParticleModel, space: Arc<OccupationSpace>) -> Result<Self> {
        let mut moves = Vec::new();
        let mut exit = vec![0.0; space.len()];
        for (i, s) in space.states.iter().enumerate() {
            for (x, y, r) in pm.transitions(s)? {
                let j = space.index_of(&s.moved(x, y)).expect("moves stay in P_N");
                moves.push((i, j, r));
                exit[i] += r;
            }
        }
        Ok(MasterEquation { space, moves, exit })
    }

    pub fn space(&self) -> &Arc<OccupationSpace> {
        &self.space
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        for (o, (pi, e)) in out.iter_mut().zip(p.iter().zip(&self.exit)) {
            *o = -pi * e;
        }
        for &(i, j, r) in &self.moves {
            out[j] += p[i] * r;
        }
    }

    /// Classical RK4 on `ṗ = pL` up to `law.time + duration`. The step is
    /// `min(dt, 0.25/max exit rate)` with `dt` defaulting to `1e-3`, shrunk so an
    /// integer number of steps fits.
    pub fn evolve(&self, law: &OccupationChainLaw, duration: f64, dt: Option<f64>) -> Result<OccupationChainLaw> {
        if !Arc::ptr_eq(&law.space, &self.space) && (law.space.n != self.space.n || law.space.d != self.space.d) {
            return Err(Error::SupportMismatch("law and generator live on different spaces".into()));
        }
        if !(duration >= 0.0) {
            return Err(Error::Domain(format!("duration must be nonnegative, got {duration}")));
        }
        let stable = 0.25 / self.max_exit_rate().max(f64::MIN_POSITIVE);
        let h0 = dt.unwrap_or(1e-3).min(stable);
        let steps = (duration / h0).ceil() as usize;
        let mut p = law.probs.clone();
        if steps > 0 {
            let h = duration / steps as f64;
            let len = p.len();
            let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
                (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
            for _ in 0..steps {
                self.apply(&p, &mut k1);
                axpy(&p, &k1, 0.5 * h, &mut tmp);
                self.apply(&tmp, &mut k2);
                axpy(&p, &k2, 0.5 * h, &mut tmp);
                self.apply(&tmp, &mut k3);
                axpy(&p, &k3, h, &mut tmp);
                self.apply(&tmp, &mut k4);
                for i in 0..len {
                    p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        let mass: f64 = p.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Integration { time: law.time + duration, reason: format!("mass drifted to {mass}") });
        }
        Ok(OccupationChainLaw { space: self.space.clone(), probs: p, time: law.time + duration })
    }
}

fn axpy(p: &[f64], k: &[f64], s: f64, out: &mut [f64]) {
    for i in 0..p.len() {
        out[i] = p[i] + s * k[i];
    }
}

/// Evolves `law0` by the occupation-chain master equation for time `t`.
pub fn master_equation_law(pm: &ParticleModel, law0: &OccupationChainLaw, t: f64, dt: Option<f64>) -> Result<OccupationChainLaw> {
    MasterEquation::on(pm, law0.space.clone())?.evolve(law0, t, dt)
}

/// Relative entropy `Σ p log(p/q)` of two laws on the same space.
pub fn relative_entropy(law: &OccupationChainLaw, reference: &OccupationChainLaw) -> Result<f64> {
    if law.space.n != reference.space.n || law.space.d != reference.space.d {
        return Err(Error::SupportMismatch("laws live on different occupation spaces".into()));
    }
    let mut h = 0.0;
    for (p, q) in law.probs.iter().zip(&reference.probs) {
        if *p > 0.0 {
            if *q <= 0.0 {
                return Err(Error::SupportMismatch("law charges a state the reference does not".into()));
            }
            h += p * (p / q).ln();
        }
    }
    Ok(h)
}

/// `(1/N) H(law | L#π^N)`.
pub fn entropy_per_particle(pm: &ParticleModel, law: &OccupationChainLaw) -> Result<f64> {
    let pi = pi_n_on(pm, law.space.clone());
    Ok(relative_entropy(law, &pi)? / pm.n as f64)
}

/// The three quantities of the explicit Stirling estimate for a type class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StirlingCheck {
    /// `−log(N+1)/N`.
    pub lhs: f64,
    /// `−(1/N) log multinomial(N; n) − Σ ν_x log ν_x`.
    pub mid: f64,
    /// `d·log(N)/N + 1/N`.
    pub rhs: f64,
    pub holds: bool,
}

pub fn stirling_bounds_check(state: &Occupation) -> StirlingCheck {
    let n = state.n() as f64;
    let entropy: f64 = state.0.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n * (c as f64 / n).ln()).sum();
    let mid = -ln_multinomial(&state.0) / n - entropy;
    let lhs = -(n + 1.0).ln() / n;
    let rhs = state.d() as f64 * n.ln() / n + 1.0 / n;
    StirlingCheck { lhs, mid, rhs, holds: lhs <= mid && mid <= rhs }
}

/// Checks the Stirling estimate on every point of `P_N(X)`; returns the number
/// of points checked and the first failure, if any.
pub fn stirling_exhaustive(n: usize, d: usize) -> Result<(usize, Option<(Occupation, StirlingCheck)>)> {
    let space = OccupationSpace::new(n, d)?;
    for s in &space.states {
        let c = stirling_bounds_check(s);
        if !c.holds {
            return Ok((space.len(), Some((s.clone(), c))));
        }
    }
    Ok((space.len(), None))
}

/// A sampled trajectory of the occupation chain.
#[derive(Debug, Clone)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub states: Vec<Occupation>,
    /// The chain reached a state with zero exit rate before `T`.
    pub absorbed: bool,
}

/// Exact stochastic simulation of the occupation chain on `[0, T]`.
pub fn gillespie_run(pm: &ParticleModel, n0: &Occupation, t_final: f64, rng: &mut impl Rng) -> Result<JumpPath> {
    pm.check(n0)?;
    let mut path = JumpPath { times: vec![0.0], states: vec![n0.clone()], absorbed: false };
    let mut t = 0.0;
    let mut state = n0.clone();
    loop {
        let moves = pm.transitions(&state)?;
        let total: f64 = moves.iter().map(|m| m.2).sum();
        if total <= 0.0 {
            path.absorbed = true;
            break;
        }
        t += rng.sample::<f64, _>(Exp1) / total;
        if t > t_final {
            break;
        }
        state = choose(&state, &moves, total, rng);
        path.times.push(t);
        path.states.push(state.clone());
    }
    Ok(path)
}

fn choose(state: &Occupation, moves: &[(usize, usize, f64)], total: f64, rng: &mut impl Rng) -> Occupation {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(x, y, r) in moves {
        acc += r;
        if target < acc {
            return state.moved(x, y);
        }
    }
    let &(x, y, _) = moves.last().expect("nonempty move list");
    state.moved(x, y)
}

/// State of one run at each of the increasing `checkpoints`.
pub fn gillespie_checkpoints(pm: &ParticleModel, n0: &Occupation, checkpoints: &[f64], rng: &mut impl Rng) -> Result<Vec<Occupation>> {
    pm.check(n0)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut t = 0.0;
    let mut state = n0.clone();
    let mut k = 0;
    while k < checkpoints.len() {
        let moves = pm.transitions(&state)?;
        let total: f64 = moves.iter().map(|m| m.2).sum();
        let next = if total > 0.0 { t + rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
        while k < checkpoints.len() && checkpoints[k] < next {
            out.push(state.clone());
            k += 1;
        }
        if k < checkpoints.len() {
            state = choose(&state, &moves, total, rng);
            t = next;
        }
    }
    Ok(out)
}

/// The generator for run `index` of a seeded batch: one ChaCha8 stream per run.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `runs` independent simulations in parallel; `result[r][k]` is run `r` at checkpoint `k`.
pub fn gillespie_batch(pm: &ParticleModel, n0: &Occupation, checkpoints: &[f64], runs: usize, seed: u64) -> Result<Vec<Vec<Occupation>>> {
    (0..runs)
        .into_par_iter()
        .map(|r| gillespie_checkpoints(pm, n0, checkpoints, &mut run_rng(seed, r as u64)))
        .collect()
}

/// Monte Carlo summary of `L^N(t)` for one `N`.
#[derive(Debug, Clone, Serialize)]
pub struct BatchStats {
    pub n: usize,
    pub runs: usize,
    pub time: f64,
    /// Mean of `‖L^N(t) − c(t)‖₂` over runs.
    pub mean_deviation: f64,
    /// Standard error of `mean_deviation`.
    pub deviation_stderr: f64,
    pub mean: Vec<f64>,
    /// Unbiased variance of each coordinate of `L^N(t)`.
    pub variance: Vec<f64>,
}

pub fn batch_stats(samples: &[Occupation], reference: &Dist, time: f64) -> BatchStats {
    let runs = samples.len();
    let d = reference.d();
    let emp: Vec<Dist> = samples.iter().map(Occupation::empirical).collect();
    let devs: Vec<f64> = emp.iter().map(|e| e.l2_distance(reference)).collect();
    let mean_deviation = devs.iter().sum::<f64>() / runs as f64;
    let dev_var = devs.iter().map(|v| (v - mean_deviation).powi(2)).sum::<f64>() / (runs.max(2) - 1) as f64;
    let mean: Vec<f64> = (0..d).map(|x| emp.iter().map(|e| e[x]).sum::<f64>() / runs as f64).collect();
    // shifted by the first sample so that identical samples give exactly zero
    let variance = (0..d)
        .map(|x| {
            let shift = emp.first().map_or(0.0, |e| e[x]);
            let m = emp.iter().map(|e| e[x] - shift).sum::<f64>() / runs as f64;
            emp.iter().map(|e| (e[x] - shift - m).powi(2)).sum::<f64>() / (runs.max(2) - 1) as f64
        })
        .collect();
    BatchStats {
        n: samples.first().map_or(0, Occupation::n),
        runs,
        time,
        mean_deviation,
        deviation_stderr: (dev_var / runs as f64).sqrt(),
        mean,
        variance,
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceTable {
    /// `(N, var L^N_x(t))`.
    pub rows: Vec<(usize, f64)>,
    pub site: usize,
    pub time: f64,
    pub runs: usize,
    /// Log-log slope of variance against `N`.
    pub slope: f64,
    /// Set when fewer than 100 runs were used.
    pub low_run_warning: bool,
}

/// Monte Carlo variance of `L^N_x(t)` from the deterministic start `mu0` for each `N`.
pub fn variance_decay(base: &GibbsModel, ns: &[usize], mu0: &Dist, site: usize, t: f64, runs: usize, seed: u64) -> Result<VarianceTable> {
    if site >= base.d() {
        return Err(Error::Domain(format!("site {site} out of range")));
    }
    if runs < 2 {
        return Err(Error::Validation("need at least two runs for a variance".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let pm = ParticleModel::new(base.clone(), n)?;
        let n0 = Occupation::from_dist(mu0, n)?;
        let samples: Vec<Occupation> = gillespie_batch(&pm, &n0, &[t], runs, seed)?.into_iter().map(|mut v| v.remove(0)).collect();
        let stats = batch_stats(&samples, mu0, t);
        rows.push((n, stats.variance[site]));
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.1 > 0.0) {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|&(n, v)| (n as f64, v)).unzip();
        log_log_slope(&x, &y)
    } else {
        f64::NAN
    };
    Ok(VarianceTable { rows, site, time: t, runs, slope, low_run_warning: runs < 100 })
}

/// `F₀ = inf F` and a minimizer: grid search on the simplex followed by
/// projected gradient descent from the best grid point.
pub fn free_energy_infimum(model: &GibbsModel) -> Result<(f64, Dist)> {
    let d = model.d();
    let k = match d {
        2 => 1000,
        3 => 100,
        4 => 40,
        5 => 20,
        _ => 8,
    };
    let grid = OccupationSpace::new(k, d)?;
    let mut best = (f64::INFINITY, Dist::uniform(d));
    for s in grid.states() {
        let mu = s.empirical();
        let f = free_energy(model, &mu);
        if f < best.0 {
            best = (f, mu);
        }
    }
    let start = best.1.mix(&Dist::uniform(d), 1e-3);
    let refined = descend(model, start)?;
    let f = free_energy(model, &refined);
    Ok(if f < best.0 { (f, refined) } else { best })
}

fn descend(model: &GibbsModel, mut mu: Dist) -> Result<Dist> {
    let mut f = free_energy(model, &mu);
    let mut step = 0.1;
    for _ in 0..10_000 {
        let mut g = crate::flow::free_energy_gradient(model, &mu)?;
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|v| *v -= mean);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < 1e-13 {
            break;
        }
        let mut accepted = false;
        while step > 1e-18 {
            let trial: Vec<f64> = mu.as_slice().iter().zip(&g).map(|(m, gv)| m - step * gv).collect();
            if trial.iter().all(|v| *v > 0.0) {
                let t = Dist::from_vec_unchecked(trial);
                let ft = free_energy(model, &t);
                if ft <= f - 1e-4 * step * gnorm2 {
                    mu = t;
                    f = ft;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(mu)
}
