//! TOML experiment files. Every table rejects unknown keys.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use mzmetro_core::bayes::{Budget, Checkpoints};
use mzmetro_core::povm::QUADRATURE_ANGLE;
use mzmetro_core::{FlatPrior, ProbeKind};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    #[default]
    Simulate,
    Personick,
    Loss,
}

/// Probe name plus optional parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

impl StateSpec {
    pub fn named(name: &str) -> Self {
        StateSpec { name: name.into(), r: None, alpha: None, n: None, cutoff: None }
    }

    pub fn kind(&self) -> Result<ProbeKind, CliError> {
        let mut kind = ProbeKind::from_name(&self.name).map_err(CliError::config)?;
        let unused = |what: &str| CliError::Config(format!("state '{}' takes no '{what}' parameter", self.name));
        match &mut kind {
            ProbeKind::Coherent { alpha } => {
                if self.r.is_some() || self.n.is_some() {
                    return Err(unused(if self.r.is_some() { "r" } else { "n" }));
                }
                if let Some(a) = self.alpha {
                    *alpha = C64::new(a, 0.0);
                }
            }
            ProbeKind::Noon { n } => {
                if self.r.is_some() || self.alpha.is_some() {
                    return Err(unused(if self.r.is_some() { "r" } else { "alpha" }));
                }
                if let Some(v) = self.n {
                    *n = v;
                }
            }
            ProbeKind::TwinSqueezedVacuum { r } | ProbeKind::SqueezedEntangled { r } => {
                if self.alpha.is_some() || self.n.is_some() {
                    return Err(unused(if self.alpha.is_some() { "alpha" } else { "n" }));
                }
                if let Some(v) = self.r {
                    *r = v;
                }
            }
            ProbeKind::TwinSqueezedCat { r, alpha } => {
                if self.n.is_some() {
                    return Err(unused("n"));
                }
                if let Some(v) = self.r {
                    *r = v;
                }
                if let Some(v) = self.alpha {
                    *alpha = v;
                }
            }
        }
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub theta_bar: f64,
    #[serde(default = "default_w0")]
    pub w0: f64,
}

fn default_w0() -> f64 {
    PI / 2.0
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { theta_bar: 0.0, w0: default_w0() }
    }
}

impl PriorSpec {
    pub fn prior(&self) -> Result<FlatPrior, CliError> {
        FlatPrior::new(self.theta_bar, self.w0).map_err(CliError::config)
    }
}

/// Sampling settings; every field falls back to the library default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_max_mu: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grid_points: Option<usize>,
    /// Report every `μ` up to this value, then geometrically spaced points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_until: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_mu: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_monte_carlo: Option<bool>,
}

impl BudgetSpec {
    pub fn budget(&self, seed: u64) -> Result<Budget, CliError> {
        let d = Budget::default();
        let (dense, ratio) = match d.checkpoints {
            Checkpoints::Geometric { dense_until, ratio } => (dense_until, ratio),
            Checkpoints::All => (usize::MAX, 1.01),
        };
        let ratio = self.ratio.unwrap_or(ratio);
        if ratio <= 1.0 {
            return Err(CliError::Config(format!("budget.ratio must exceed 1, got {ratio}")));
        }
        let checkpoints = if self.every_mu.unwrap_or(false) {
            Checkpoints::All
        } else {
            Checkpoints::Geometric { dense_until: self.dense_until.unwrap_or(dense), ratio }
        };
        let b = Budget {
            samples: self.samples.unwrap_or(d.samples),
            seed,
            exact_limit: self.exact_limit.unwrap_or(d.exact_limit),
            exact_max_mu: self.exact_max_mu.unwrap_or(d.exact_max_mu),
            grid_points: self.grid_points.unwrap_or(d.grid_points),
            grid_tolerance: self.grid_tolerance.unwrap_or(d.grid_tolerance),
            max_grid_points: self.max_grid_points.unwrap_or(d.max_grid_points),
            checkpoints,
            taylor: true,
            force_monte_carlo: self.force_monte_carlo.unwrap_or(false),
            prune_log: d.prune_log,
        };
        if b.samples == 0 {
            return Err(CliError::Config("budget.samples must be positive".into()));
        }
        Ok(b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// MSE curve, bound table or loss curve, depending on the run kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Estimator spectrum rows (personick runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<PathBuf>,
}

/// One experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: RunKind,
    pub state: StateSpec,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub mu_max: usize,
    #[serde(default)]
    pub seed: u64,
    /// Quadrature angle override for the quadrature scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_angle: Option<f64>,
    /// Transmissivity for loss runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_scheme() -> String {
    "optimal".into()
}

pub const SCHEMES: [&str; 7] = ["optimal", "counting-even", "counting-odd", "quadratures", "undo-preparation", "parity", "collective"];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.kind != RunKind::Loss {
            self.state.kind()?;
        }
        self.prior.prior()?;
        if !SCHEMES.contains(&self.scheme.as_str()) {
            return Err(CliError::Config(format!("unknown scheme '{}' (expected one of {})", self.scheme, SCHEMES.join(", "))));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(CliError::Config(format!("eta must lie in (0, 1], got {eta}")));
            }
        }
        if self.kind != RunKind::Loss && self.eta.is_some() {
            return Err(CliError::Config("'eta' is only valid for loss runs".into()));
        }
        self.budget.budget(self.seed)?;
        Ok(())
    }

    pub fn quadrature_angle(&self) -> f64 {
        self.quadrature_angle.unwrap_or(QUADRATURE_ANGLE)
    }
}

/// A file holds one or more `[[experiment]]` tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.experiments.is_empty() {
            return Err(CliError::Config("config holds no [[experiment]] tables".into()));
        }
        for e in &cfg.experiments {
            e.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[[experiment]]
state = { name = "tsc", r = 1.103, alpha = 1.09, cutoff = 51 }
scheme = "optimal"
prior = { theta_bar = 0.0, w0 = 1.0471975511965976 }
mu_max = 100
seed = 7
budget = { samples = 1000, dense_until = 50 }
outputs = { csv = "out.csv" }

[[experiment]]
kind = "loss"
state = { name = "two-photon" }
eta = 0.9
prior = { theta_bar = 0.7853981633974483 }
mu_max = 10
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        assert_eq!(cfg.experiments.len(), 2);
        assert_eq!(cfg.experiments[0].state.kind().unwrap(), ProbeKind::tsc_intermediate());
        assert_eq!(cfg.experiments[1].prior.w0, PI / 2.0);
        let again = ConfigFile::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_keys() {
        for bad in [
            "[[experiment]]\nstate = { name = \"noon\" }\ncolour = 1\n",
            "[[experiment]]\nstate = { name = \"noon\", squeeze = 1.0 }\n",
            "[[experiment]]\nstate = { name = \"noon\" }\nbudget = { sample = 3 }\n",
            "top = 1\n[[experiment]]\nstate = { name = \"noon\" }\n",
        ] {
            assert!(matches!(ConfigFile::parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "[[experiment]]\nstate = { name = \"laser\" }\n",
            "[[experiment]]\nstate = { name = \"noon\" }\nscheme = \"heterodyne\"\n",
            "[[experiment]]\nstate = { name = \"noon\" }\nprior = { w0 = -1.0 }\n",
            "[[experiment]]\nstate = { name = \"noon\", r = 0.3 }\n",
            "[[experiment]]\nstate = { name = \"noon\" }\neta = 0.5\n",
            "[[experiment]]\nstate = { name = \"noon\" }\nbudget = { samples = 0 }\n",
        ] {
            assert!(matches!(ConfigFile::parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }
}
