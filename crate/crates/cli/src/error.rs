use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sep_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Core(e) => match e {
                sep_core::Error::NonConvergence { .. } => "non_convergence",
                sep_core::Error::PositivityLoss { .. } => "positivity_loss",
                sep_core::Error::BlowUp { .. } => "blow_up",
                sep_core::Error::EnsembleFailed { .. } => "ensemble_failed",
                sep_core::Error::Compatibility { .. } => "poisson_compatibility",
                sep_core::Error::NonPositiveMoment { .. } => "non_positive_moment",
                _ => "core",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Self::Core(sep_core::Error::EnsembleFailed { failures }) = self {
            v["failures"] = failures
                .iter()
                .map(|f| json!({ "index": f.index, "master_seed": f.master_seed, "stream": f.stream, "message": f.message }))
                .collect();
        }
        if let Self::Core(sep_core::Error::BlowUp {
            t, min_rho, halvings, ..
        }) = self
        {
            v["t"] = json!(t);
            v["min_rho"] = json!(min_rho);
            v["halvings"] = json!(halvings);
        }
        v
    }
}
