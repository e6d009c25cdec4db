//! TOML experiment configuration. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrast::ContrastSpec;
use crate::error::{Error, Result};
use crate::experiment::EstimatorSpec;
use crate::lpa::LpaConfig;
use crate::quadrature::QuadratureRule;
use crate::simulate::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Sample sizes, strictly ascending.
    pub n: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub degree: usize,
    #[serde(default = "default_box_bound")]
    pub box_bound: f64,
    #[serde(default)]
    pub seed: u64,
    /// Separate seed for the noise streams; the design keeps using `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub model: ModelSpec,
    pub estimator: EstimatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametric: Option<ParametricSpec>,
}

fn default_replications() -> usize {
    1
}
fn default_q() -> f64 {
    2.0
}
fn default_box_bound() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSpec {
    pub bandwidth: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_shift: Option<Vec<f64>>,
    /// Hölder exponent of the bias proxy; defaults to the target's metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default = "default_g_inf")]
    pub g_inf: f64,
    #[serde(default)]
    pub quadrature: QuadratureRule,
    pub contrast: ContrastSpec,
}

fn default_g_inf() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricSpec {
    /// Huber scales; defaults to the MAD-based grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Contamination level whose least-favorable scale is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n.is_empty() || self.n.windows(2).any(|w| w[0] >= w[1]) || self.n[0] == 0 {
            return Err(Error::Config("n must be a nonempty, strictly ascending list of positive sizes".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.q > 0.0) {
            return Err(Error::Config("q must be positive".into()));
        }
        if self.x0.len() != self.model.d {
            return Err(Error::Config(format!("x0 has {} coordinates, model has d = {}", self.x0.len(), self.model.d)));
        }
        self.lpa().validate()
    }

    pub fn lpa(&self) -> LpaConfig {
        LpaConfig::new(self.x0.clone(), self.degree).with_box_bound(self.box_bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "t"
n = [100, 200]
x0 = [0.5]

[model]
d = 1
target = { kind = "constant", value = 1.0 }
design = { kind = "uniform" }
noise_level = { kind = "constant", sigma = 1.0 }
noise = { kind = "gaussian", sd = 1.0 }

[estimator]
kind = "fixed"
contrast = { kind = "huber", gamma = 1.0 }
bandwidth = { kind = "fixed", h = [0.2] }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.q, 2.0);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_toml().unwrap(), cfg.to_toml().unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let unknown = MINIMAL.replace("x0 = [0.5]", "x0 = [0.5]\nbogus = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(Error::Config(_))));
        let descending = MINIMAL.replace("n = [100, 200]", "n = [200, 100]");
        assert!(ExperimentConfig::from_toml_str(&descending).is_err());
        let dim = MINIMAL.replace("x0 = [0.5]", "x0 = [0.5, 0.5]");
        assert!(ExperimentConfig::from_toml_str(&dim).is_err());
        let nested = MINIMAL.replace("sd = 1.0 }", "sd = 1.0, extra = 2 }");
        assert!(ExperimentConfig::from_toml_str(&nested).is_err());
    }
}
