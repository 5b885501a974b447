//! JSON experiment configuration. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sep_core::{
    DopingProfile, Grid, NoiseKind, NoiseModel, Observable, Perturbation, PressureLaw, Scheme, SteadySolver,
    SteadyState, StepConfig,
};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub pressure: PressureConfig,
    pub doping: DopingConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub step: StepSection,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    /// Overrides `noise.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureConfig {
    #[serde(rename = "K")]
    pub k: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopingKind {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopingConfig {
    pub kind: DopingKind,
    pub base: f64,
    #[serde(default)]
    pub amp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    #[serde(default = "default_steady_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self {
            tol: default_steady_tol(),
            max_iter: default_max_iter(),
            theta: default_theta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindConfig {
    Quadratic,
    Bounded,
    Off,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(rename = "K", default = "default_modes")]
    pub k: usize,
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKindConfig,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Unit vector `d` of the quadratic kind; defaults to `(1, .., 1) / sqrt(dim)`.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            k: default_modes(),
            kind: default_noise_kind(),
            eps: 0.0,
            seed: 0,
            direction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    EulerMaruyama,
    HeunDrift,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Absolute density floor; defaults to `1e-6 min(rho_bar)`.
    #[serde(default)]
    pub rho_floor: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeConfig,
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            cfl: default_cfl(),
            rho_floor: None,
            scheme: default_scheme(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Zero,
    Cosine,
    Velocity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default = "default_perturbation_kind")]
    pub kind: PerturbationKind,
    #[serde(default)]
    pub eps: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            kind: default_perturbation_kind(),
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    RunningSup,
    TailSup,
    PerTime,
}

impl From<FitKind> for sep_core::MomentKind {
    fn from(k: FitKind) -> Self {
        match k {
            FitKind::RunningSup => Self::RunningSup,
            FitKind::TailSup => Self::TailSup,
            FitKind::PerTime => Self::PerTime,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(rename = "M", default = "default_members")]
    pub m: usize,
    #[serde(default = "default_moments")]
    pub moments: Vec<u32>,
    /// Fit window `[t_lo, t_hi]`; defaults to `[t_end / 10, t_end]`.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    /// Moment series used for the headline fit.
    #[serde(default = "default_fit_kind")]
    pub fit_kind: FitKind,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Chebyshev threshold as a multiple of the median supremum.
    #[serde(default = "default_chebyshev_factor")]
    pub chebyshev_factor: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            m: default_members(),
            moments: default_moments(),
            fit_window: None,
            fit_kind: default_fit_kind(),
            bootstrap: default_bootstrap(),
            chebyshev_factor: default_chebyshev_factor(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Base horizon `T`; averages are reported at `T`, `2T` and `4T`.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_psi")]
    pub psi: Vec<String>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            psi: default_psi(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            format: default_format(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_record_stride() -> usize {
    100
}
fn default_steady_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    500
}
fn default_theta() -> f64 {
    0.5
}
fn default_modes() -> usize {
    8
}
fn default_noise_kind() -> NoiseKindConfig {
    NoiseKindConfig::Off
}
fn default_dt() -> f64 {
    1e-3
}
fn default_cfl() -> f64 {
    0.4
}
fn default_scheme() -> SchemeConfig {
    SchemeConfig::EulerMaruyama
}
fn default_perturbation_kind() -> PerturbationKind {
    PerturbationKind::Zero
}
fn default_members() -> usize {
    64
}
fn default_moments() -> Vec<u32> {
    vec![1, 2]
}
fn default_fit_kind() -> FitKind {
    FitKind::TailSup
}
fn default_bootstrap() -> usize {
    sep_core::ensemble::BOOTSTRAP_RESAMPLES
}
fn default_chebyshev_factor() -> f64 {
    4.0
}
fn default_horizon() -> f64 {
    25.0
}
fn default_psi() -> Vec<String> {
    vec!["psi_exp".into()]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        self.grid()?;
        self.law()?;
        if !(self.doping.base > 0.0) {
            return bad("doping.base", format!("must be positive, got {}", self.doping.base));
        }
        if self.doping.kind == DopingKind::Cosine && !(self.doping.amp.abs() < self.doping.base) {
            return bad(
                "doping.amp",
                format!("|amp| must be below base {}, got {}", self.doping.base, self.doping.amp),
            );
        }
        if !(self.steady.tol > 0.0) {
            return bad("steady.tol", format!("must be positive, got {}", self.steady.tol));
        }
        if !(self.steady.theta > 0.0 && self.steady.theta <= 1.0) {
            return bad("steady.theta", format!("must lie in (0, 1], got {}", self.steady.theta));
        }
        if !(self.step.dt > 0.0) {
            return bad("step.dt", format!("must be positive, got {}", self.step.dt));
        }
        if !(self.step.cfl > 0.0 && self.step.cfl <= 1.0) {
            return bad("step.cfl", format!("must lie in (0, 1], got {}", self.step.cfl));
        }
        if let Some(f) = self.step.rho_floor {
            if !(f > 0.0) {
                return bad("step.rho_floor", format!("must be positive, got {f}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be >= 0, got {}", self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride", "must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad("tau", format!("must be positive, got {}", self.tau));
        }
        if !(self.perturbation.eps >= 0.0) {
            return bad(
                "perturbation.eps",
                format!("must be >= 0, got {}", self.perturbation.eps),
            );
        }
        self.noise_model()?;
        if self.ensemble.m < 2 {
            return bad("ensemble.M", format!("must be >= 2, got {}", self.ensemble.m));
        }
        if self.ensemble.moments.is_empty() || self.ensemble.moments.contains(&0) {
            return bad(
                "ensemble.moments",
                "must be a non-empty list of positive integers".into(),
            );
        }
        if let Some([lo, hi]) = self.ensemble.fit_window {
            if !(lo < hi) {
                return bad("ensemble.fit_window", format!("needs lo < hi, got [{lo}, {hi}]"));
            }
        }
        if !(self.ensemble.chebyshev_factor > 0.0) {
            return bad("ensemble.chebyshev_factor", "must be positive".into());
        }
        if !(self.measure.horizon > 0.0) {
            return bad(
                "measure.horizon",
                format!("must be positive, got {}", self.measure.horizon),
            );
        }
        self.observables()?;
        if self.workers == Some(0) {
            return bad("workers", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid.dim, self.grid.n, self.grid.length).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn law(&self) -> Result<PressureLaw, CliError> {
        PressureLaw::gamma_law(self.pressure.k, self.pressure.gamma)
            .map_err(|e| CliError::Config(format!("pressure: {e}")))
    }

    pub fn doping(&self) -> Result<DopingProfile, CliError> {
        let grid = self.grid()?;
        let d = match self.doping.kind {
            DopingKind::Constant => DopingProfile::constant(grid, self.doping.base),
            DopingKind::Cosine => DopingProfile::cosine(grid, self.doping.base, self.doping.amp),
        };
        d.map_err(|e| CliError::Config(format!("doping: {e}")))
    }

    pub fn steady_solver(&self) -> SteadySolver {
        SteadySolver::new(self.steady.tol, self.steady.max_iter).with_theta(self.steady.theta)
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let dim = self.grid.dim;
        let kind = match self.noise.kind {
            NoiseKindConfig::Quadratic => NoiseKind::Quadratic,
            NoiseKindConfig::Bounded => NoiseKind::Bounded,
            NoiseKindConfig::Off => NoiseKind::Off,
        };
        let model = match &self.noise.direction {
            None => NoiseModel::geometric(self.noise.k, kind, self.noise.eps, dim),
            Some(d) => NoiseModel::geometric(self.noise.k, kind, self.noise.eps, dim)
                .and_then(|m| NoiseModel::new(m.weights().to_vec(), kind, self.noise.eps, d.clone())),
        };
        let model = model.map_err(|e| CliError::Config(format!("noise: {e}")))?;
        if model.direction().len() != dim {
            return Err(CliError::Config(format!(
                "noise.direction: needs {dim} components, got {}",
                model.direction().len()
            )));
        }
        Ok(model)
    }

    pub fn step_config(&self, steady: &SteadyState) -> StepConfig {
        let mut cfg = StepConfig::new(self.step.dt, steady);
        cfg.cfl = self.step.cfl;
        if let Some(f) = self.step.rho_floor {
            cfg.rho_floor = f;
        }
        cfg.scheme = match self.step.scheme {
            SchemeConfig::EulerMaruyama => Scheme::EulerMaruyama,
            SchemeConfig::HeunDrift => Scheme::HeunDrift,
        };
        cfg
    }

    pub fn perturbation(&self) -> Perturbation {
        let eps = self.perturbation.eps;
        match self.perturbation.kind {
            PerturbationKind::Zero => Perturbation::Zero,
            PerturbationKind::Cosine => Perturbation::Cosine { eps },
            PerturbationKind::Velocity => Perturbation::Velocity { eps },
        }
    }

    /// Top-level `seed` wins over `noise.seed`.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.noise.seed)
    }

    pub fn fit_window(&self) -> [f64; 2] {
        self.ensemble.fit_window.unwrap_or([0.1 * self.t_end, self.t_end])
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        if self.measure.psi.is_empty() {
            return Err(CliError::Config("measure.psi: needs at least one observable".into()));
        }
        self.measure
            .psi
            .iter()
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("measure.psi: {e}"))))
            .collect()
    }
}
