//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfgf::experiments::manifest::CwScanConfig;
use mfgf::experiments::{cmd_cw_scan, RunContext};
use mfgf::flow::{de_giorgi_j, default_dt, drift, free_energy_gradient, integrate, onsager_apply};
use mfgf::metric::{distance, two_point_exact, MetricOptions, MetricResult};
use mfgf::particles::{
    batch_stats, entropy_per_particle, free_energy_infimum, gillespie_batch, log_log_slope, stirling_exhaustive,
    MasterEquation, Occupation, OccupationChainLaw, ParticleModel,
};
use mfgf::testing::{random_dist, random_model, random_model_on};
use mfgf::{Dist, GibbsModel, Scheme};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn d2(p: f64) -> Dist {
    Dist::new(vec![p, 1.0 - p]).unwrap()
}

fn cw(beta: f64) -> GibbsModel {
    GibbsModel::curie_weiss(beta, Scheme::SqrtPi).unwrap()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn gradient_flow_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let model = random_model(&mut rng);
        let mu = random_dist(&mut rng, model.d(), 1e-3);
        let q = drift(&model, &mu).unwrap();
        let k = onsager_apply(&model, &mu, &free_energy_gradient(&model, &mu).unwrap()).unwrap();
        worst = q.iter().zip(&k).fold(worst, |w, (a, b)| w.max((a + b).abs()));
    }
    let t = start.elapsed();
    outcome(worst <= 1e-10 && within(t, 1.0), format!("max residual {worst:.3e}, {t:.2?}"))
}

fn energy_dissipation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let betas = [0.5, 1.0, 2.0];
    let (mut worst_balance, mut worst_j, mut min_reversed) = (0.0f64, 0.0f64, f64::INFINITY);
    for k in 0..10 {
        let model = cw(betas[k % 3]);
        let p = loop {
            let p = rng.random_range(0.05..0.95);
            if (p - 0.5f64).abs() > 0.05 {
                break p;
            }
        };
        let mu0 = d2(p);
        let traj = integrate(&model, &mu0, 5.0, default_dt(&model, &mu0).unwrap()).unwrap();
        let dg = de_giorgi_j(&model, &traj).unwrap();
        let scale = dg.delta_f.abs();
        worst_balance = worst_balance.max((dg.delta_f + dg.fisher_integral).abs() / scale);
        worst_j = worst_j.max(dg.j.abs() / scale);
        let back = de_giorgi_j(&model, &traj.reversed(&model).unwrap()).unwrap();
        min_reversed = min_reversed.min(back.j);
    }
    let t = start.elapsed();
    let pass = worst_balance <= 1e-4 && worst_j <= 1e-4 && min_reversed > 0.0 && within(t, 10.0);
    outcome(
        pass,
        format!("|ΔF+∫I|/|ΔF| ≤ {worst_balance:.2e}, J/|ΔF| ≤ {worst_j:.2e}, reversed J ≥ {min_reversed:.3e}, {t:.2?}"),
    )
}

fn detailed_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let model = random_model(&mut rng);
        let mu = random_dist(&mut rng, model.d(), 0.0);
        for scheme in [Scheme::Metropolis, Scheme::SqrtPi] {
            worst = worst.max(model.with_scheme(scheme).detailed_balance_residual(&mu).unwrap());
        }
    }
    outcome(worst <= 1e-12, format!("max residual {worst:.3e}"))
}

fn lower_bound_holds(r: &MetricResult) -> bool {
    r.value >= r.lower_bound * (1.0 - 1e-9)
}

/// Geodesics computed by criteria 4 and 5, reused for criterion 6.
#[derive(Default)]
struct Geodesics {
    speed_cv: Vec<f64>,
}

fn metric_oracle(g: &mut Geodesics) -> Outcome {
    let start = Instant::now();
    let model = GibbsModel::free(2, Scheme::SqrtPi).unwrap();
    let opts = MetricOptions::default();
    let pairs = [(0.1, 0.9), (0.3, 0.7), (0.5, 0.6), (0.2, 0.25), (0.05, 0.5), (0.6, 0.95), (0.01, 0.99), (0.4, 0.8), (0.0, 1.0), (0.0, 0.5)];
    let (mut worst, mut bounds_ok) = (0.0f64, true);
    for (a, b) in pairs {
        let r = distance(&model, &d2(a), &d2(b), &opts).unwrap();
        let exact = two_point_exact(1.0, a, b).unwrap().abs();
        worst = worst.max((r.value - exact).abs() / exact);
        bounds_ok &= lower_bound_holds(&r);
        if r.converged {
            g.speed_cv.push(r.speed_cv);
        }
    }
    let t = start.elapsed();
    outcome(worst <= 1e-3 && bounds_ok && within(t, 60.0), format!("max relative error {worst:.3e}, lower bound ok: {bounds_ok}, {t:.2?}"))
}

fn metric_axioms(g: &mut Geodesics) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = MetricOptions::default();
    let (mut sym_ok, mut tri_ok, mut bounds_ok) = (true, true, true);
    let (mut max_asym, mut max_tri, mut max_tol) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..25 {
        let model = random_model_on(&mut rng, 3);
        let [x, y, z] = [0; 3].map(|_| random_dist(&mut rng, 3, 0.02));
        let w = |a: &Dist, b: &Dist| distance(&model, a, b, &opts).unwrap();
        let (xy, yx, yz, xz) = (w(&x, &y), w(&y, &x), w(&y, &z), w(&x, &z));
        // solver tolerance: the discretization change seen at the last refinement
        let tol = [&xy, &yx, &yz, &xz].iter().map(|r| r.refinement_change * r.value).fold(0.0, f64::max);
        let asym = (xy.value - yx.value).abs();
        let tri = xz.value - xy.value - yz.value;
        sym_ok &= asym <= 2.0 * tol;
        tri_ok &= tri <= tol;
        (max_asym, max_tri, max_tol) = (max_asym.max(asym), max_tri.max(tri), max_tol.max(tol));
        for r in [&xy, &yx, &yz, &xz] {
            bounds_ok &= lower_bound_holds(r);
            if r.converged {
                g.speed_cv.push(r.speed_cv);
            }
        }
    }
    let pass = sym_ok && tri_ok && bounds_ok;
    outcome(
        pass,
        format!(
            "max |W(x,y)−W(y,x)| {max_asym:.3e}, max W(x,z)−W(x,y)−W(y,z) {max_tri:.3e}, max solver tol {max_tol:.3e}, lower bound ok: {bounds_ok}, {:.2?}",
            start.elapsed()
        ),
    )
}

fn constant_speed(g: &Geodesics) -> Outcome {
    let worst = g.speed_cv.iter().copied().fold(0.0, f64::max);
    outcome(!g.speed_cv.is_empty() && worst < 0.1, format!("max CV {worst:.3e} over {} geodesics", g.speed_cv.len()))
}

fn stirling() -> Outcome {
    let start = Instant::now();
    let (mut checked, mut failures) = (0usize, 0usize);
    for d in [2, 3] {
        for n in 1..=200 {
            let (count, fail) = stirling_exhaustive(n, d).unwrap();
            checked += count;
            failures += fail.is_some() as usize;
        }
    }
    let t = start.elapsed();
    outcome(failures == 0 && within(t, 5.0), format!("{checked} points, {failures} failing (N, d), {t:.2?}"))
}

const PARTICLE_NS: [usize; 4] = [50, 100, 200, 400];

struct ParticleRun {
    deviations: Vec<f64>,
    variances: Vec<f64>,
    elapsed: Duration,
}

fn particle_run() -> ParticleRun {
    let start = Instant::now();
    let model = cw(2.0);
    let mu0 = d2(0.9);
    let c1 = integrate(&model, &mu0, 1.0, default_dt(&model, &mu0).unwrap()).unwrap().last_state().clone();
    let (mut deviations, mut variances) = (Vec::new(), Vec::new());
    for (k, n) in PARTICLE_NS.into_iter().enumerate() {
        let pm = ParticleModel::new(model.clone(), n).unwrap();
        let n0 = Occupation::from_dist(&mu0, n).unwrap();
        let runs = gillespie_batch(&pm, &n0, &[1.0], 10_000, 800 + k as u64).unwrap();
        let samples: Vec<Occupation> = runs.into_iter().map(|mut r| r.remove(0)).collect();
        let s = batch_stats(&samples, &c1, 1.0);
        deviations.push(s.mean_deviation);
        variances.push(s.variance[0]);
    }
    ParticleRun { deviations, variances, elapsed: start.elapsed() }
}

fn nf() -> Vec<f64> {
    PARTICLE_NS.iter().map(|&n| n as f64).collect()
}

fn particle_convergence(run: &ParticleRun) -> Outcome {
    let monotone = run.deviations.windows(2).all(|w| w[1] < w[0]);
    let slope = log_log_slope(&nf(), &run.deviations);
    let pass = monotone && (-0.7..=-0.3).contains(&slope) && within(run.elapsed, 300.0);
    outcome(pass, format!("deviations [{}], slope {slope:.3}, {:.2?}", list(&run.deviations), run.elapsed))
}

fn entropy_convergence() -> Outcome {
    let start = Instant::now();
    let model = cw(2.0);
    let mu0 = d2(0.75);
    let (f_inf, _) = free_energy_infimum(&model).unwrap();
    let times = [0.5, 1.0];
    let gaps: Vec<f64> = times
        .iter()
        .map(|&t| {
            let c = integrate(&model, &mu0, t, default_dt(&model, &mu0).unwrap()).unwrap();
            mfgf::flow::free_energy(&model, c.last_state()) - f_inf
        })
        .collect();
    let mut diffs = vec![Vec::new(); times.len()];
    for n in [32, 64, 128, 256] {
        let pm = ParticleModel::new(model.clone(), n).unwrap();
        let me = MasterEquation::new(&pm).unwrap();
        let mut law = OccupationChainLaw::point_mass(me.space().clone(), &Occupation::from_dist(&mu0, n).unwrap()).unwrap();
        for (k, &t) in times.iter().enumerate() {
            law = me.evolve(&law, t - law.time, None).unwrap();
            let h = entropy_per_particle(&pm, &law).unwrap();
            diffs[k].push((h - gaps[k]).abs());
        }
    }
    let t = start.elapsed();
    let pass = diffs.iter().all(|d| d.windows(2).all(|w| w[1] < w[0])) && within(t, 120.0);
    outcome(pass, format!("gaps at t=0.5 [{}], t=1 [{}], {t:.2?}", list(&diffs[0]), list(&diffs[1])))
}

fn variance_decay(run: &ParticleRun) -> Outcome {
    let slope = log_log_slope(&nf(), &run.variances);
    let pass = (-1.3..=-0.7).contains(&slope) && within(run.elapsed, 300.0);
    outcome(pass, format!("variances [{}], slope {slope:.3}", list(&run.variances)))
}

fn phase_transition() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ctx = RunContext { out_dir: dir.path().to_path_buf(), seed: 0, manifest_sha256: "acceptance".into() };
    let cfg: CwScanConfig = toml::from_str("betas = [0.5, 2.0]").unwrap();
    let report = cmd_cw_scan(&cfg, &ctx).unwrap();
    let rows = &report.summary["rows"];
    let (low, high) = (&rows[0], &rows[1]);
    let m_plus = high["minimizers"][1].as_f64().unwrap();
    let m_minus = high["minimizers"][0].as_f64().unwrap();
    let pass = low["convex"] == true
        && low["minimizers"].as_array().unwrap().len() == 1
        && high["convex"] == false
        && high["minimizers"].as_array().unwrap().len() == 2
        && (m_plus - 0.9575).abs() <= 1e-3
        && (m_minus + 0.9575).abs() <= 1e-3
        && report.pass();
    outcome(pass, format!("β=0.5 convex={}, β=2 minimizers ({m_minus:.6}, {m_plus:.6}), oracle m*={:.6}", low["convex"], high["m_star"]))
}

fn main() -> ExitCode {
    let mut geodesics = Geodesics::default();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient-flow identity", gradient_flow_identity()),
        (2, "energy dissipation", energy_dissipation()),
        (3, "detailed balance", detailed_balance()),
        (4, "two-point metric oracle", metric_oracle(&mut geodesics)),
        (5, "metric axioms", metric_axioms(&mut geodesics)),
    ];
    results.push((6, "constant-speed geodesics", constant_speed(&geodesics)));
    results.push((7, "Stirling bounds", stirling()));
    let run = particle_run();
    results.push((8, "particle convergence", particle_convergence(&run)));
    results.push((9, "entropy convergence", entropy_convergence()));
    results.push((10, "variance decay", variance_decay(&run)));
    results.push((11, "Curie-Weiss phase transition", phase_transition()));

    let mut failed = 0;
    for (k, name, o) in &results {
        println!("{} criterion {k:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
