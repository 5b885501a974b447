//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and runtime budgets are fixed here.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use sep_cli::commands::prepare;
use sep_cli::ExperimentConfig;
use sep_core::ensemble::{
    chebyshev_check, fit_decay, fit_log_linear, kb_average, median_sup, run_ensemble, EnsembleSetup,
};
use sep_core::noise::ito_isometry_check;
use sep_core::{
    divergence, gradient, trajectory_rng, DopingProfile, EnsembleStats, Grid, MomentKind, NeumannPoisson,
    NoiseIncrement, NoiseKind, NoiseModel, Observable, PressureLaw, ScalarField, SteadySolver, VectorField,
};
use sep_verify::{cosine_interpolate, steady_density_newton};

const DT: f64 = 1e-3;
const N: usize = 257;
const EPS: f64 = 0.01;
const WINDOW: [f64; 2] = [2.0, 20.0];
const MEMBERS: usize = 64;
const MASTER_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn base_config(noise: &str, t_end: f64) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "grid": {{"n": {N}, "dim": 1}},
            "pressure": {{"K": 1.0, "gamma": 2.0}},
            "doping": {{"kind": "cosine", "base": 1.0, "amp": 0.1}},
            "noise": {noise},
            "step": {{"dt": {DT}}},
            "t_end": {t_end},
            "record_stride": 100,
            "perturbation": {{"kind": "cosine", "eps": {EPS}}},
            "tau": 1.0,
            "seed": {MASTER_SEED}
        }}"#
    );
    ExperimentConfig::from_json(&text).expect("acceptance config is valid")
}

const NOISE_OFF: &str = r#"{"kind": "off"}"#;
const NOISE_ON: &str = r#"{"K": 8, "kind": "quadratic", "eps": 0.5}"#;

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn criterion_1() -> Outcome {
    let law = PressureLaw::gamma_law(1.0, 2.0).unwrap();
    let solver = SteadySolver::new(1e-10, 500);
    let start = Instant::now();
    let g = Grid::unit(1, N).unwrap();
    let flat = SteadySolver::new(1e-12, 500)
        .solve(&law, &DopingProfile::constant(g, 1.0).unwrap())
        .unwrap();
    let doping = DopingProfile::cosine(g, 1.0, 0.1).unwrap();
    let steady = solver.solve(&law, &doping);
    let elapsed = start.elapsed();
    let steady = match steady {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("cosine solve failed: {e}")),
    };
    let flat_ok = flat.rho_bar.values().iter().all(|&r| r == 1.0)
        && flat.phi_bar.values().iter().all(|&p| p == 0.0)
        && flat.residual <= 1e-12;

    let coarse = Grid::unit(1, 65).unwrap();
    let b65 = DopingProfile::cosine(coarse, 1.0, 0.1).unwrap();
    let oracle = match steady_density_newton(&law, b65.field().values(), 1e-13) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("Newton oracle failed: {e}")),
    };
    let diff = (0..N)
        .map(|i| (steady.rho_bar.values()[i] - cosine_interpolate(&oracle, g.coord(i, 0))).abs())
        .fold(0.0f64, f64::max);

    let pass = flat_ok
        && steady.residual <= 1e-10
        && steady.mass_defect.abs() <= 1e-10
        && steady.min_rho() > 0.0
        && diff <= 1e-6
        && elapsed <= Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "constant doping exact={flat_ok}, residual={:.3e}, mass_defect={:.3e}, min_rho={:.6}, newton_diff={diff:.3e}, time={:.3}s",
            steady.residual,
            steady.mass_defect,
            steady.min_rho(),
            secs(elapsed)
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut cfg = base_config(NOISE_OFF, 10.0);
    cfg.perturbation.kind = sep_cli::config::PerturbationKind::Zero;
    let p = prepare(&cfg).unwrap();
    let start = Instant::now();
    let tr = p
        .integrator
        .simulate(p.initial, &p.steady, 10.0, 100, &mut trajectory_rng(0, 0));
    let elapsed = start.elapsed();
    let tr = match tr {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("integration failed: {e}")),
    };
    let steps = ((tr.final_state.t / DT).round()) as usize;
    let worst = tr.records.iter().map(|r| r.norms.combined).fold(0.0f64, f64::max);
    outcome(
        worst <= 1e-9 && steps == 10_000 && elapsed <= Duration::from_secs(10),
        format!("steps={steps}, max combined={worst:.3e}, time={:.2}s", secs(elapsed)),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = trajectory_rng(MASTER_SEED, 3);

    // mass per step over random admissible states
    let cfg = base_config(NOISE_ON, 0.0);
    let mut small = cfg.clone();
    small.grid.n = 65;
    let p = prepare(&small).unwrap();
    let g = *p.steady.grid();
    let mut worst_mass = 0.0f64;
    for _ in 0..100 {
        let mut s = p.initial.clone();
        let mut sigma: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(-0.05..0.05)).collect();
        let mean = g.integrate(&sigma) / g.volume();
        sigma.iter_mut().for_each(|x| *x -= mean);
        for (r, (rb, x)) in s
            .rho
            .values_mut()
            .iter_mut()
            .zip(p.steady.rho_bar.values().iter().zip(&sigma))
        {
            *r = rb + x;
        }
        for v in s.u.components_mut()[0].iter_mut() {
            *v = rng.random_range(-0.1..0.1);
        }
        s.u.project_boundary();
        let m0 = s.mass();
        let inc = p.integrator.noise().sample_increment(DT, &mut rng);
        if let Err(e) = p.integrator.substep_with(&mut s, &inc) {
            return outcome(false, format!("step failed: {e}"));
        }
        worst_mass = worst_mass.max(((s.mass() - m0) / m0).abs());
    }

    // summation by parts in 1, 2 and 3 dimensions
    let mut worst_sbp = 0.0f64;
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let grid = Grid::new(dim, [33, 17, 9][dim - 1], 1.0 + 0.5 * (trial % 2) as f64).unwrap();
        let f = ScalarField::new(
            grid,
            (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let comps = (0..dim)
            .map(|_| (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut v = VectorField::new(grid, comps).unwrap();
        v.project_boundary();
        let grad = gradient(&f);
        let lhs = grad.inner(&v).unwrap();
        let rhs = f.inner(&divergence(&v).unwrap()).unwrap();
        worst_sbp = worst_sbp.max((lhs + rhs).abs() / (f.norm() * v.norm()));
    }

    // Poisson round trip
    let mut worst_poisson = 0.0f64;
    for (dim, n) in [(1, 257), (2, 33), (3, 17)] {
        let grid = Grid::unit(dim, n).unwrap();
        let solver = NeumannPoisson::new(grid, 1e-10).unwrap();
        for _ in 0..5 {
            let mut rhs: Vec<f64> = (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = grid.integrate(&rhs) / grid.volume();
            rhs.iter_mut().for_each(|x| *x -= mean);
            match solver.solve(&ScalarField::new(grid, rhs).unwrap()) {
                Ok((_, rep)) => worst_poisson = worst_poisson.max(rep.residual),
                Err(e) => return outcome(false, format!("Poisson failed: {e}")),
            }
        }
    }
    outcome(
        worst_mass <= 1e-12 && worst_sbp <= 1e-12 && worst_poisson <= 1e-10,
        format!("mass drift={worst_mass:.3e}, SBP defect={worst_sbp:.3e}, Poisson residual={worst_poisson:.3e}"),
    )
}

fn criterion_4() -> Outcome {
    let cfg = base_config(NOISE_OFF, 20.0);
    let start = Instant::now();
    let p = prepare(&cfg).unwrap();
    let tr = p
        .integrator
        .simulate(p.initial, &p.steady, 20.0, 100, &mut trajectory_rng(0, 0));
    let elapsed = start.elapsed();
    let tr = match tr {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("integration failed: {e}")),
    };
    let (t, y): (Vec<f64>, Vec<f64>) = tr
        .records
        .iter()
        .filter(|r| r.t >= WINDOW[0] - 1e-9 && r.t <= WINDOW[1] + 1e-9)
        .map(|r| (r.t, r.norms.combined))
        .unzip();
    match fit_log_linear(&t, &y, WINDOW) {
        Ok(f) => {
            let r2 = f.r2.unwrap_or(0.0);
            outcome(
                r2 >= 0.95 && f.alpha_hat > 0.0 && elapsed <= Duration::from_secs(30),
                format!(
                    "alpha_hat={:.4}, r2={r2:.4}, points={}, time={:.2}s",
                    f.alpha_hat,
                    f.points,
                    secs(elapsed)
                ),
            )
        }
        Err(e) => outcome(false, format!("fit failed: {e}")),
    }
}

fn ensemble_setup() -> EnsembleSetup {
    let cfg = base_config(NOISE_ON, 20.0);
    let p = prepare(&cfg).unwrap();
    EnsembleSetup {
        integrator: p.integrator,
        steady: p.steady,
        initial: p.initial,
        t_end: 20.0,
        record_stride: 100,
        orders: vec![1, 2],
        bootstrap: 200,
    }
}

fn criterion_5(stats: &EnsembleStats, elapsed: Duration) -> Outcome {
    let fit = |m| fit_decay(stats, m, MomentKind::TailSup, WINDOW);
    let (f1, f2) = match (fit(1), fit(2)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("fit failed: {e}")),
    };
    let (r1, r2) = (f1.r2.unwrap_or(0.0), f2.r2.unwrap_or(0.0));
    let ratio = f2.alpha_hat / f1.alpha_hat;
    let running = fit_decay(stats, 1, MomentKind::RunningSup, WINDOW).map(|f| f.alpha_hat);
    outcome(
        f1.alpha_hat > 0.0
            && f2.alpha_hat > 0.0
            && r1 >= 0.9
            && r2 >= 0.9
            && (1.5..=2.5).contains(&ratio)
            && elapsed <= Duration::from_secs(600),
        format!(
            "tail-sup fits: alpha1={:.4} (r2={r1:.4}), alpha2={:.4} (r2={r2:.4}), ratio={ratio:.3}; running-sup alpha1={:.3e}; M={}, time={:.1}s",
            f1.alpha_hat,
            f2.alpha_hat,
            running.unwrap_or(f64::NAN),
            stats.trajectories(),
            secs(elapsed)
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = base_config(NOISE_ON, 100.0);
    let start = Instant::now();
    let p = prepare(&cfg).unwrap();
    let tr = p
        .integrator
        .simulate(p.initial, &p.steady, 100.0, 100, &mut trajectory_rng(MASTER_SEED, 0));
    let tr = match tr {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("integration failed: {e}")),
    };
    let gaps: Vec<f64> = [25.0, 50.0, 100.0]
        .iter()
        .map(|&h| {
            kb_average(&tr.records, Observable::Exp, h)
                .map(|k| k.gap)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let elapsed = start.elapsed();
    outcome(
        gaps[1] <= 0.7 * gaps[0] && gaps[2] <= 0.7 * gaps[1] && elapsed <= Duration::from_secs(300),
        format!(
            "gap(25)={:.4e}, gap(50)={:.4e}, gap(100)={:.4e}, ratios {:.3}, {:.3}, time={:.1}s",
            gaps[0],
            gaps[1],
            gaps[2],
            gaps[1] / gaps[0],
            gaps[2] / gaps[1],
            secs(elapsed)
        ),
    )
}

fn criterion_7(stats: &EnsembleStats) -> Outcome {
    let model = NoiseModel::geometric(8, NoiseKind::Quadratic, 0.5, 1).unwrap();
    let iso = ito_isometry_check(
        &model,
        1.0,
        &[0.8],
        1.0,
        20,
        10_000,
        &mut trajectory_rng(MASTER_SEED, 7),
    );
    let iso_ok = iso.z_score().abs() <= 3.0;

    // K modes against one effective mode, on the same node state
    let g = Grid::unit(1, 9).unwrap();
    let rho = ScalarField::from_fn(g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
    let mut u = VectorField::from_fn(g, |x| vec![0.3 * (PI * x[0]).sin()]);
    u.project_boundary();
    let single = NoiseModel::geometric(1, NoiseKind::Quadratic, 0.5, 1).unwrap();
    let samples = 10_000;
    let moments = |m: &NoiseModel, stream: u64| {
        let mut rng = trajectory_rng(MASTER_SEED, stream);
        let xs: Vec<f64> = (0..samples)
            .map(|_| {
                let inc: NoiseIncrement = m.sample_increment(DT, &mut rng);
                m.velocity_noise_term(&rho, &u, &inc).unwrap().component(0)[4]
            })
            .collect();
        let n = samples as f64;
        let m1 = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let se1 = ((m2 - m1 * m1) / n).sqrt();
        let se2 = (xs.iter().map(|x| (x * x - m2).powi(2)).sum::<f64>() / n / n).sqrt();
        (m1, se1, m2, se2)
    };
    let (a1, s1, a2, t2) = moments(&model, 71);
    let (b1, r1, b2, q2) = moments(&single, 72);
    let z1 = (a1 - b1) / (s1 * s1 + r1 * r1).sqrt();
    let z2 = (a2 - b2) / (t2 * t2 + q2 * q2).sqrt();
    let collapse_ok = z1.abs() <= 3.0 && z2.abs() <= 3.0;

    let threshold = 4.0 * median_sup(stats);
    let cheb: Vec<_> = [1, 2]
        .iter()
        .map(|&m| chebyshev_check(stats, threshold, m).unwrap())
        .collect();
    let cheb_ok = cheb.iter().all(|r| r.pass);
    outcome(
        iso_ok && collapse_ok && cheb_ok,
        format!(
            "isometry z={:.2}, collapse z=({z1:.2}, {z2:.2}), chebyshev exceedance={:.3} vs bounds ({:.3}, {:.3})",
            iso.z_score(),
            cheb[0].exceedance,
            cheb[0].bound,
            cheb[1].bound
        ),
    )
}

fn criterion_8(setup: &EnsembleSetup, serial: &EnsembleStats, serial_time: Duration) -> Outcome {
    let mut identical = true;
    let mut t8 = Duration::ZERO;
    for workers in [4, 8] {
        let start = Instant::now();
        let stats = run_ensemble(setup, MEMBERS, MASTER_SEED, workers);
        let elapsed = start.elapsed();
        match stats {
            Ok(s) => identical &= &s == serial,
            Err(e) => return outcome(false, format!("ensemble with {workers} workers failed: {e}")),
        }
        if workers == 8 {
            t8 = elapsed;
        }
    }
    let speedup = secs(serial_time) / secs(t8);
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    outcome(
        identical && speedup >= 3.0,
        format!(
            "bit-identical across 1/4/8 workers={identical}, speedup 1->8 = {speedup:.2}x ({cores} core(s) available)"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    report(1, "steady-state correctness", criterion_1());
    report(2, "well-balancing", criterion_2());
    report(3, "conservation and adjointness", criterion_3());
    report(4, "deterministic decay", criterion_4());

    let setup = ensemble_setup();
    let start = Instant::now();
    let serial = run_ensemble(&setup, MEMBERS, MASTER_SEED, 1);
    let serial_time = start.elapsed();
    match serial {
        Ok(stats) => {
            report(5, "stochastic moment decay", criterion_5(&stats, serial_time));
            report(6, "Dirac invariant measure", criterion_6());
            report(7, "noise-model statistics", criterion_7(&stats));
            report(8, "determinism and scaling", criterion_8(&setup, &stats, serial_time));
        }
        Err(e) => {
            for (id, name) in [
                (5, "stochastic moment decay"),
                (7, "noise-model statistics"),
                (8, "determinism and scaling"),
            ] {
                report(id, name, outcome(false, format!("ensemble failed: {e}")));
            }
            report(6, "Dirac invariant measure", criterion_6());
        }
    }

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
