//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    #[serde(rename = "2d")]
    TwoD,
    Hd,
    Isoradial,
    Isomorphism,
    Limits,
}

/// Graph families an experiment can run on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphPreset {
    /// Nearest-neighbor box, total jump rate 1.
    BoxUnitRate,
    /// Nearest-neighbor box, unit conductances (rate 2d).
    BoxUnitConductance,
    /// Planar walk with uniform steps to the four diagonal neighbors.
    StepDiagonal,
    IsoradialSquare,
    IsoradialTriangular,
    IsoradialHexagonal,
}

fn default_dt() -> f64 {
    1e-4
}

fn default_dim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Pipeline id, e.g. `eisenbaum` or `hd-limits`.
    pub experiment: String,
    pub regime: RegimeKind,
    pub preset: GraphPreset,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Box radii N.
    #[serde(default)]
    pub n: Vec<usize>,
    /// Thickness levels a.
    #[serde(default)]
    pub a: Vec<f64>,
    /// Replicas (or samples per side) per configuration.
    pub replicas: u64,
    pub seed: u64,
    /// Euler step of the Brownian samplers.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

/// Pipeline-specific knobs; each pipeline documents which it reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Shift s of the Eisenbaum isomorphism.
    pub s: f64,
    /// Local-time levels u of the Ray-Knight harness.
    pub u: Vec<f64>,
    /// How many random sites or site pairs to test.
    pub points: usize,
    /// Size of the Brownian exit-time bank.
    pub tau_bank: u64,
    /// Monte Carlo samples for integrals and kernels.
    pub mc_samples: u64,
    /// Planar box radii used alongside `n` (Green invariants).
    pub n_2d: Vec<usize>,
    /// Radii for the d = 3 max-diagonal bound.
    pub max_diagonal: Vec<usize>,
    /// Radii for extrapolating G_R(0,0) → g.
    pub extrapolation: Vec<usize>,
    /// Source/target pairs in the open cube.
    pub pairs: Vec<[Vec<f64>; 2]>,
    /// Moment-comparison budget of the Ray-Knight harness.
    pub moment_budget: usize,
    /// Run the deliberately wrong left-hand side as well.
    pub negative_control: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            s: 1.0,
            u: Vec::new(),
            points: 5,
            tau_bank: 10_000,
            mc_samples: 10_000,
            n_2d: Vec::new(),
            max_diagonal: Vec::new(),
            extrapolation: Vec::new(),
            pairs: Vec::new(),
            moment_budget: 64,
            negative_control: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.experiment.is_empty() {
            return bad("experiment id is empty".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be positive".into());
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.a.iter().any(|a| !(0.0..=1.5).contains(a)) {
            return bad("every a must lie in [0, 1.5]".into());
        }
        if !(self.params.s > 0.0) {
            return bad(format!("s must be positive, got {}", self.params.s));
        }
        if self.params.u.iter().any(|u| !(*u > 0.0)) {
            return bad("every u must be positive".into());
        }
        for pair in &self.params.pairs {
            if pair
                .iter()
                .any(|p| p.len() != self.dim || p.iter().any(|c| !(c.abs() < 1.0)))
            {
                return bad(format!(
                    "pair {pair:?} must lie in the open cube of dimension {}",
                    self.dim
                ));
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.experiment))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "exp-law"
regime = "2d"
preset = "box-unit-rate"
n = [16]
replicas = 100
seed = 1
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.dim, 2);
        assert_eq!(c.dt, 1e-4);
        assert_eq!(c.params.s, 1.0);
        assert_eq!(c.regime, RegimeKind::TwoD);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 3\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(Error::Config(_))
        ));
        let text = format!("{MINIMAL}\n[params]\nshift = 2.0\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = MINIMAL.replace("replicas = 100", "replicas = 0");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = format!("{MINIMAL}\n[params]\ns = -1.0\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
