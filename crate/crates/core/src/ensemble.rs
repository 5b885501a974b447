//! Monte Carlo moments of supremum functionals, log-linear decay fits,
//! Krylov-Bogoliubov time averages and the Chebyshev tail check.
//!
//! Trajectory `i` draws from stream `i` of the master seed and writes into
//! slot `i`, so results do not depend on the number of workers.

use log::info;
use rand::Rng;
use rayon::prelude::*;

use crate::diagnostics::PerturbationNorms;
use crate::error::{Error, Result, TrajectoryFailure};
use crate::integrator::{Integrator, Record, State};
use crate::noise::trajectory_rng;
use crate::steady::SteadyState;

/// Default bootstrap resample count.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Stream reserved for the bootstrap generator.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// Everything a trajectory needs, shared read-only by all workers.
#[derive(Debug, Clone)]
pub struct EnsembleSetup {
    pub integrator: Integrator,
    pub steady: SteadyState,
    pub initial: State,
    pub t_end: f64,
    pub record_stride: usize,
    /// Moment orders `m`.
    pub orders: Vec<u32>,
    pub bootstrap: usize,
}

/// Which per-trajectory functional of `combined` is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `sup_{s <= t} combined(s)`; nondecreasing in `t`.
    RunningSup,
    /// `sup_{t <= s <= t_end} combined(s)`.
    TailSup,
    /// `combined(t)`.
    PerTime,
}

impl MomentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::RunningSup => "running_sup",
            Self::TailSup => "tail_sup",
            Self::PerTime => "per_time",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub m: u32,
    pub estimate: Vec<f64>,
    /// Bootstrap standard error at each record time.
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub master_seed: u64,
    pub running_sup: Vec<MomentSeries>,
    pub tail_sup: Vec<MomentSeries>,
    pub per_time: Vec<MomentSeries>,
    /// `combined(t_i)` of every trajectory.
    pub combined: Vec<Vec<f64>>,
    /// `sup_{[0, t_end]} combined` of every trajectory.
    pub sups: Vec<f64>,
}

impl EnsembleStats {
    pub fn trajectories(&self) -> usize {
        self.combined.len()
    }

    pub fn moments(&self, kind: MomentKind) -> &[MomentSeries] {
        match kind {
            MomentKind::RunningSup => &self.running_sup,
            MomentKind::TailSup => &self.tail_sup,
            MomentKind::PerTime => &self.per_time,
        }
    }

    pub fn series(&self, kind: MomentKind, m: u32) -> Option<&MomentSeries> {
        self.moments(kind).iter().find(|s| s.m == m)
    }

    /// Builds the statistics from per-trajectory `combined` series sampled at
    /// `times`.
    pub fn from_series(
        times: Vec<f64>,
        combined: Vec<Vec<f64>>,
        orders: &[u32],
        bootstrap: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if combined.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an ensemble needs at least 2 trajectories, got {}",
                combined.len()
            )));
        }
        if combined.iter().any(|c| c.len() != times.len()) {
            return Err(Error::InvalidArgument("trajectory series lengths differ".into()));
        }
        let running: Vec<Vec<f64>> = combined.iter().map(|c| running_max(c)).collect();
        let tail: Vec<Vec<f64>> = combined
            .iter()
            .map(|c| {
                let mut rev: Vec<f64> = c.iter().rev().copied().collect();
                rev = running_max(&rev);
                rev.reverse();
                rev
            })
            .collect();
        let sups = running.iter().map(|r| r.last().copied().unwrap_or(0.0)).collect();

        let mut rng = trajectory_rng(master_seed, BOOTSTRAP_STREAM);
        let count = combined.len();
        let resamples: Vec<Vec<usize>> = (0..bootstrap)
            .map(|_| (0..count).map(|_| rng.random_range(0..count)).collect())
            .collect();
        let moments = |data: &[Vec<f64>]| -> Vec<MomentSeries> {
            orders.iter().map(|&m| moment_series(data, m, &resamples)).collect()
        };
        Ok(Self {
            running_sup: moments(&running),
            tail_sup: moments(&tail),
            per_time: moments(&combined),
            times,
            master_seed,
            combined,
            sups,
        })
    }
}

fn running_max(c: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    c.iter()
        .map(|&v| {
            best = best.max(v);
            best
        })
        .collect()
}

fn moment_series(data: &[Vec<f64>], m: u32, resamples: &[Vec<usize>]) -> MomentSeries {
    let count = data.len() as f64;
    let len = data[0].len();
    let powered: Vec<Vec<f64>> = data
        .iter()
        .map(|c| c.iter().map(|v| v.powi(m as i32)).collect())
        .collect();
    let mut estimate = vec![0.0; len];
    for row in &powered {
        estimate.iter_mut().zip(row).for_each(|(e, v)| *e += v);
    }
    estimate.iter_mut().for_each(|e| *e /= count);

    let mut stderr = vec![0.0; len];
    if resamples.len() >= 2 {
        let means: Vec<Vec<f64>> = resamples
            .iter()
            .map(|idx| {
                let mut mean = vec![0.0; len];
                for &j in idx {
                    mean.iter_mut().zip(&powered[j]).for_each(|(a, v)| *a += v);
                }
                mean.iter_mut().for_each(|a| *a /= count);
                mean
            })
            .collect();
        let b = means.len() as f64;
        for (i, se) in stderr.iter_mut().enumerate() {
            let first = means[0][i];
            // identical resample means give exactly zero
            if means.iter().all(|m| m[i] == first) {
                continue;
            }
            let mu = means.iter().map(|m| m[i]).sum::<f64>() / b;
            let var = means.iter().map(|m| (m[i] - mu).powi(2)).sum::<f64>() / (b - 1.0);
            *se = var.sqrt();
        }
    }
    MomentSeries { m, estimate, stderr }
}

/// Runs `count` trajectories on `workers` threads.
pub fn run_ensemble(setup: &EnsembleSetup, count: usize, master_seed: u64, workers: usize) -> Result<EnsembleStats> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble size M must be >= 2, got {count}"
        )));
    }
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    if setup.orders.is_empty() || setup.orders.contains(&0) {
        return Err(Error::InvalidArgument(
            "moment orders must be a non-empty set of positive integers".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    info!("ensemble: M = {count}, seed = {master_seed}, workers = {workers}");
    let results: Vec<Result<Vec<Record>>> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(master_seed, i as u64);
                setup
                    .integrator
                    .simulate(
                        setup.initial.clone(),
                        &setup.steady,
                        setup.t_end,
                        setup.record_stride,
                        &mut rng,
                    )
                    .map(|tr| tr.records)
            })
            .collect()
    });

    let mut failures = Vec::new();
    let mut series = Vec::with_capacity(count);
    let mut times = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(records) => {
                if times.is_empty() {
                    times = records.iter().map(|r| r.t).collect();
                }
                series.push(records.iter().map(|r| r.norms.combined).collect());
            }
            Err(e) => failures.push(TrajectoryFailure {
                index: i,
                master_seed,
                stream: i as u64,
                message: e.to_string(),
            }),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EnsembleFailed { failures });
    }
    EnsembleStats::from_series(times, series, &setup.orders, setup.bootstrap, master_seed)
}

/// Least-squares fit `log y = log_c - alpha t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub log_c: f64,
    /// `None` with fewer than three points or a constant series.
    pub r2: Option<f64>,
    pub window: [f64; 2],
    pub points: usize,
}

pub fn fit_log_linear(t: &[f64], y: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidArgument("fit needs matching t and y".into()));
    }
    if t.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least 2 points, got {}",
            t.len()
        )));
    }
    if let Some((&tt, &v)) = t.iter().zip(y).find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveMoment { t: tt, value: v });
    }
    let n = t.len() as f64;
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    if logs.iter().all(|l| *l == logs[0]) {
        return Ok(DecayFit {
            alpha_hat: 0.0,
            log_c: logs[0],
            r2: None,
            window,
            points: t.len(),
        });
    }
    let tm = t.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&logs).map(|(x, l)| (x - tm) * (l - lm)).sum();
    let syy: f64 = logs.iter().map(|l| (l - lm).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * tm;
    let ss_res: f64 = t
        .iter()
        .zip(&logs)
        .map(|(x, l)| (l - intercept - slope * x).powi(2))
        .sum();
    let r2 = if t.len() >= 3 {
        Some((1.0 - ss_res / syy).clamp(0.0, 1.0))
    } else {
        None
    };
    Ok(DecayFit {
        alpha_hat: -slope,
        log_c: intercept,
        r2,
        window,
        points: t.len(),
    })
}

/// Decay fit of the order-`m` moment of `kind` over record times in `window`.
pub fn fit_decay(stats: &EnsembleStats, m: u32, kind: MomentKind, window: [f64; 2]) -> Result<DecayFit> {
    let series = stats
        .series(kind, m)
        .ok_or_else(|| Error::InvalidArgument(format!("moment order {m} was not computed")))?;
    let slack = 1e-9 * window[1].abs().max(1.0);
    let (t, y): (Vec<f64>, Vec<f64>) = stats
        .times
        .iter()
        .zip(&series.estimate)
        .filter(|(t, _)| **t >= window[0] - slack && **t <= window[1] + slack)
        .map(|(t, y)| (*t, *y))
        .unzip();
    fit_log_linear(&t, &y, window)
}

/// Bounded observable of the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `exp(-combined)`
    Exp,
    /// `tanh(||sigma||_0)`
    Tanh,
}

impl Observable {
    pub fn id(self) -> &'static str {
        match self {
            Self::Exp => "psi_exp",
            Self::Tanh => "psi_tanh",
        }
    }

    pub fn eval(self, norms: &PerturbationNorms) -> f64 {
        match self {
            Self::Exp => (-norms.combined).exp(),
            Self::Tanh => norms.sigma_h[0].tanh(),
        }
    }

    /// Value at the steady state.
    pub fn target(self) -> f64 {
        self.eval(&PerturbationNorms::zero(0.0))
    }

    pub fn sup_abs(self) -> f64 {
        1.0
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi_exp" => Ok(Self::Exp),
            "psi_tanh" => Ok(Self::Tanh),
            other => Err(Error::InvalidArgument(format!(
                "observable `{other}` (expected psi_exp or psi_tanh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBAverage {
    pub psi: Observable,
    pub horizon: f64,
    pub avg: f64,
    pub target: f64,
    pub gap: f64,
}

/// Left-endpoint time average of `psi` over the first `horizon` time units
/// of `records`.
pub fn kb_average(records: &[Record], psi: Observable, horizon: f64) -> Result<KBAverage> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let Some(first) = records.first() else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    let t0 = first.t;
    let t_end = t0 + horizon;
    let last = records.last().map(|r| r.t).unwrap_or(t0);
    if last < t_end - 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "trajectory ends at {last}, before horizon {horizon}"
        )));
    }
    let mut integral = 0.0;
    for pair in records.windows(2) {
        if pair[0].t >= t_end {
            break;
        }
        let dt = pair[1].t.min(t_end) - pair[0].t;
        integral += psi.eval(&pair[0].norms) * dt;
    }
    let avg = integral / horizon;
    let target = psi.target();
    Ok(KBAverage {
        psi,
        horizon,
        avg,
        target,
        gap: (avg - target).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevReport {
    pub threshold: f64,
    pub m: u32,
    /// Fraction of trajectories whose supremum exceeds the threshold.
    pub exceedance: f64,
    /// `E[sup^m] / threshold^m`.
    pub bound: f64,
    /// Binomial standard error at `p = min(bound, 1)`.
    pub stderr: f64,
    pub pass: bool,
}

pub fn chebyshev_check(stats: &EnsembleStats, threshold: f64, m: u32) -> Result<ChebyshevReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let count = stats.sups.len() as f64;
    let exceedance = stats.sups.iter().filter(|s| **s > threshold).count() as f64 / count;
    let moment = stats.sups.iter().map(|s| s.powi(m as i32)).sum::<f64>() / count;
    let bound = moment / threshold.powi(m as i32);
    let p = bound.min(1.0);
    let stderr = (p * (1.0 - p) / count).sqrt();
    Ok(ChebyshevReport {
        threshold,
        m,
        exceedance,
        bound,
        stderr,
        pass: exceedance <= bound + 3.0 * stderr,
    })
}

/// Median of the per-trajectory suprema.
pub fn median_sup(stats: &EnsembleStats) -> f64 {
    let mut s = stats.sups.clone();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
