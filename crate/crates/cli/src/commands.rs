//! The four subcommands. Each one validates, computes, then writes its files
//! under `output.dir` and returns their paths.

use std::path::PathBuf;

use log::info;
use serde_json::{json, Value};

use sep_core::ensemble::{chebyshev_check, fit_decay, kb_average, median_sup, run_ensemble, EnsembleSetup};
use sep_core::{initial_state, trajectory_rng, DopingProfile, Integrator, MomentKind, PressureLaw, State, SteadyState};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, write_json, Cell, Table};

pub const TRAJECTORY_COLUMNS: [&str; 14] = [
    "t",
    "sigma_h0",
    "sigma_h1",
    "sigma_h2",
    "sigma_h3",
    "u_h0",
    "u_h1",
    "u_h2",
    "u_h3",
    "grad_phi_l2",
    "energy",
    "mass",
    "min_rho",
    "subsonic",
];

pub const MOMENT_COLUMNS: [&str; 4] = ["t", "m", "estimate", "stderr"];

pub const KB_COLUMNS: [&str; 5] = ["T", "psi_id", "avg", "target", "gap"];

/// Steady state, integrator and initial data shared by the time-dependent
/// subcommands.
pub struct Prepared {
    pub law: PressureLaw,
    pub doping: DopingProfile,
    pub steady: SteadyState,
    pub integrator: Integrator,
    pub initial: State,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let law = cfg.law()?;
    let doping = cfg.doping()?;
    let steady = cfg.steady_solver().solve(&law, &doping)?;
    info!(
        "steady state: residual {:e} after {} iterations",
        steady.residual, steady.iterations
    );
    let step = cfg.step_config(&steady);
    let integrator = Integrator::new(law, &doping, cfg.noise_model()?, step)?;
    let initial = initial_state(&doping, &steady, &cfg.perturbation(), step.rho_floor, cfg.tau)?;
    Ok(Prepared {
        law,
        doping,
        steady,
        integrator,
        initial,
    })
}

pub fn cmd_steady(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let law = cfg.law()?;
    let doping = cfg.doping()?;
    let steady = cfg.steady_solver().solve(&law, &doping)?;
    let grid = *steady.grid();
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;

    let mut header: Vec<String> = (0..grid.dim()).map(|a| format!("x{a}")).collect();
    header.extend(["rho".to_string(), "phi".to_string()]);
    let mut table = Table::new(header);
    for idx in 0..grid.node_count() {
        let mut row: Vec<Cell> = grid.coords(idx).into_iter().map(Cell::from).collect();
        row.push(steady.rho_bar.values()[idx].into());
        row.push(steady.phi_bar.values()[idx].into());
        table.push(row);
    }
    let fields = table.write(dir, "steady", cfg.output.format)?;
    let summary = json!({
        "residual": steady.residual,
        "iterations": steady.iterations,
        "mass_defect": steady.mass_defect,
        "min_rho": steady.min_rho(),
        "enthalpy_shift": steady.enthalpy_shift,
        "subsonic": steady.rho_bar.values().iter().all(|&r| law.is_subsonic(r, &[0.0]).unwrap_or(false)),
    });
    let summary = write_json(&dir.join("steady_summary.json"), &summary)?;
    Ok(vec![fields, summary])
}

pub fn trajectory_table(records: &[sep_core::Record]) -> Table {
    let mut table = Table::new(TRAJECTORY_COLUMNS);
    for r in records {
        let mut row: Vec<Cell> = vec![r.t.into()];
        row.extend(r.norms.sigma_h.iter().map(|&v| Cell::from(v)));
        row.extend(r.norms.u_h.iter().map(|&v| Cell::from(v)));
        row.push(r.norms.grad_phi.into());
        row.push(r.energy.into());
        row.push(r.mass.into());
        row.push(r.min_rho.into());
        row.push(u64::from(r.subsonic).into());
        table.push(row);
    }
    table
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = prepare(cfg)?;
    let seed = cfg.seed();
    let mut rng = trajectory_rng(seed, 0);
    let tr = p
        .integrator
        .simulate(p.initial, &p.steady, cfg.t_end, cfg.record_stride, &mut rng)?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let table = trajectory_table(&tr.records).write(dir, "trajectory", cfg.output.format)?;
    let last = tr.records.last().expect("simulate always records the initial state");
    let summary = json!({
        "seed": seed,
        "t_end": last.t,
        "records": tr.records.len(),
        "cfl_reductions": tr.cfl_reductions,
        "halvings": tr.halvings,
        "final_combined": last.norms.combined,
        "always_subsonic": tr.records.iter().all(|r| r.subsonic),
    });
    let summary = write_json(&dir.join("run_summary.json"), &summary)?;
    Ok(vec![table, summary])
}

fn fit_json(stats: &sep_core::EnsembleStats, kind: MomentKind, orders: &[u32], window: [f64; 2]) -> Value {
    let fits: Vec<Value> = orders
        .iter()
        .map(|&m| match fit_decay(stats, m, kind, window) {
            Ok(f) => json!({
                "m": m,
                "alpha_hat": f.alpha_hat,
                "log_C": f.log_c,
                "r2": f.r2,
                "window": f.window,
                "points": f.points,
            }),
            Err(e) => json!({ "m": m, "error": e.to_string(), "window": window }),
        })
        .collect();
    json!({ "series": kind.label(), "fits": fits })
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn cmd_ensemble(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = prepare(cfg)?;
    let seed = cfg.seed();
    let workers = cfg.workers.unwrap_or_else(default_workers);
    let setup = EnsembleSetup {
        integrator: p.integrator,
        steady: p.steady,
        initial: p.initial,
        t_end: cfg.t_end,
        record_stride: cfg.record_stride,
        orders: cfg.ensemble.moments.clone(),
        bootstrap: cfg.ensemble.bootstrap,
    };
    let stats = run_ensemble(&setup, cfg.ensemble.m, seed, workers)?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for (kind, stem) in [
        (MomentKind::RunningSup, "moments"),
        (MomentKind::TailSup, "moments_tail_sup"),
        (MomentKind::PerTime, "moments_per_time"),
    ] {
        let mut table = Table::new(MOMENT_COLUMNS);
        for series in stats.moments(kind) {
            for (i, &t) in stats.times.iter().enumerate() {
                table.push(vec![
                    t.into(),
                    u64::from(series.m).into(),
                    series.estimate[i].into(),
                    series.stderr[i].into(),
                ]);
            }
        }
        written.push(table.write(dir, stem, cfg.output.format)?);
    }

    let window = cfg.fit_window();
    let headline = cfg.ensemble.fit_kind.into();
    let mut fit = fit_json(&stats, headline, &cfg.ensemble.moments, window);
    let alpha = |m: u32| fit_decay(&stats, m, headline, window).ok().map(|f| f.alpha_hat);
    if let (Some(a1), Some(a2)) = (alpha(1), alpha(2)) {
        fit["rate_ratio_m2_m1"] = json!(a2 / a1);
    }
    fit["other_series"] = Value::Array(
        [MomentKind::RunningSup, MomentKind::TailSup, MomentKind::PerTime]
            .into_iter()
            .filter(|k| *k != headline)
            .map(|k| fit_json(&stats, k, &cfg.ensemble.moments, window))
            .collect(),
    );
    written.push(write_json(&dir.join("fit.json"), &fit)?);

    let median = median_sup(&stats);
    let threshold = cfg.ensemble.chebyshev_factor * median;
    let chebyshev: Vec<Value> = cfg
        .ensemble
        .moments
        .iter()
        .filter_map(|&m| chebyshev_check(&stats, threshold, m).ok())
        .map(|r| {
            json!({
                "m": r.m,
                "threshold": r.threshold,
                "exceedance": r.exceedance,
                "bound": r.bound,
                "stderr": r.stderr,
                "pass": r.pass,
            })
        })
        .collect();
    let summary = json!({
        "M": stats.trajectories(),
        "master_seed": seed,
        "workers": workers,
        "median_sup": median,
        "sups": stats.sups,
        "chebyshev": chebyshev,
    });
    written.push(write_json(&dir.join("ensemble_summary.json"), &summary)?);
    Ok(written)
}

pub fn cmd_measure(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = prepare(cfg)?;
    let seed = cfg.seed();
    let base = cfg.measure.horizon;
    let horizons = [base, 2.0 * base, 4.0 * base];
    let t_end = cfg.t_end.max(horizons[2]);
    let mut rng = trajectory_rng(seed, 0);
    let tr = p
        .integrator
        .simulate(p.initial, &p.steady, t_end, cfg.record_stride, &mut rng)?;
    let mut table = Table::new(KB_COLUMNS);
    for psi in cfg.observables()? {
        for &h in &horizons {
            let kb = kb_average(&tr.records, psi, h)?;
            table.push(vec![
                h.into(),
                psi.id().into(),
                kb.avg.into(),
                kb.target.into(),
                kb.gap.into(),
            ]);
        }
    }
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    Ok(vec![table.write(dir, "kb", cfg.output.format)?])
}
