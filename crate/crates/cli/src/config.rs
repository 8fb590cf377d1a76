//! Experiment configuration: built-in defaults, overridden by a JSON file,
//! overridden by command-line flags.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Lq,
    Quartic,
    Highdim,
    Gradcheck,
    Custom,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Lq => "lq",
            Self::Quartic => "quartic",
            Self::Highdim => "highdim",
            Self::Gradcheck => "gradcheck",
            Self::Custom => "custom",
        };
        f.write_str(name)
    }
}

/// Inclusive iteration window `[first, last]` for rate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Window {
    pub first: usize,
    pub last: usize,
}

impl Window {
    pub fn new(first: usize, last: usize) -> Result<Self, ConfigError> {
        if last <= first {
            return Err(ConfigError::Invalid(format!("window [{first}, {last}] needs last > first")));
        }
        Ok(Self { first, last })
    }

    /// Half-open index range for slicing traces.
    pub fn range(&self) -> Range<usize> {
        self.first..self.last + 1
    }
}

impl TryFrom<[usize; 2]> for Window {
    type Error = ConfigError;

    fn try_from([first, last]: [usize; 2]) -> Result<Self, Self::Error> {
        Self::new(first, last)
    }
}

impl From<Window> for [usize; 2] {
    fn from(w: Window) -> Self {
        [w.first, w.last]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorChoice {
    Quadratic,
    Quartic,
}

/// Scalar LQ problem `ẋ = ax + u`, `f = ½qx²`, `g = ½sx²` with a selectable
/// mirror map and optional control bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    pub a: f64,
    pub q: f64,
    pub s: f64,
    pub x0: f64,
    pub horizon: f64,
    pub u0: f64,
    pub mirror: MirrorChoice,
    /// Coefficient `ε` of the quartic-augmented map `½|u|² + (ε/4)|u|⁴`.
    pub mirror_eps: f64,
    pub control_box: Option<[f64; 2]>,
}

impl Default for CustomConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            q: 1.0,
            s: 1.0,
            x0: 0.5,
            horizon: 1.0,
            u0: 4.0,
            mirror: MirrorChoice::Quadratic,
            mirror_eps: 1.0,
            control_box: None,
        }
    }
}

/// Fully resolved configuration; every field is materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub tau: f64,
    pub lambda: f64,
    pub nt: usize,
    pub max_iters: usize,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Log-log fit window.
    pub tail_window: Window,
    /// Semilog fit window.
    pub geometric_window: Window,
    /// Offset added to the adjoint directional derivative in gradcheck; a
    /// nonzero value corrupts the gradient on purpose.
    pub gradient_bias: f64,
    pub custom: CustomConfig,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let w = |a, b| Window { first: a, last: b };
        let base = Self {
            experiment,
            tau: 1.0,
            lambda: 30.0,
            nt: 500,
            max_iters: 200,
            dims: vec![5, 10, 20],
            seed: 42,
            output_dir: PathBuf::from("out").join(experiment.to_string()),
            tail_window: w(100, 200),
            geometric_window: w(20, 120),
            gradient_bias: 0.0,
            custom: CustomConfig::default(),
        };
        match experiment {
            Experiment::Lq | Experiment::Custom => base,
            Experiment::Quartic => Self {
                tau: 0.5,
                lambda: 10.0,
                max_iters: 10_000,
                tail_window: w(1000, 10_000),
                geometric_window: w(100, 300),
                ..base
            },
            Experiment::Highdim => Self {
                tau: 0.5,
                lambda: 20.0,
                max_iters: 1000,
                geometric_window: w(20, 200),
                ..base
            },
            Experiment::Gradcheck => Self {
                lambda: 500.0,
                nt: 2000,
                max_iters: 300,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return invalid(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.nt == 0 || self.max_iters == 0 {
            return invalid("nt and max_iters must be positive".into());
        }
        if self.experiment == Experiment::Lq && self.tau == 0.0 {
            return invalid("the lq experiment needs tau > 0".into());
        }
        if self.experiment == Experiment::Highdim && (self.dims.is_empty() || self.dims.contains(&0)) {
            return invalid("highdim needs a nonempty list of positive dims".into());
        }
        if !self.gradient_bias.is_finite() {
            return invalid("gradient_bias must be finite".into());
        }
        let c = &self.custom;
        if !(c.horizon.is_finite() && c.horizon > 0.0 && c.mirror_eps.is_finite() && c.mirror_eps > 0.0) {
            return invalid("custom horizon and mirror_eps must be positive".into());
        }
        if let Some([lo, hi]) = c.control_box {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return invalid(format!("custom control_box [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }
}

/// Optional values from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: Option<Experiment>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub nt: Option<usize>,
    pub max_iters: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub tail_window: Option<Window>,
    pub geometric_window: Option<Window>,
    pub gradient_bias: Option<f64>,
    pub custom: Option<CustomConfig>,
}

impl PartialConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// `self` with every field set in `over` replaced.
    pub fn overlay(self, over: PartialConfig) -> Self {
        Self {
            experiment: over.experiment.or(self.experiment),
            tau: over.tau.or(self.tau),
            lambda: over.lambda.or(self.lambda),
            nt: over.nt.or(self.nt),
            max_iters: over.max_iters.or(self.max_iters),
            dims: over.dims.or(self.dims),
            seed: over.seed.or(self.seed),
            output_dir: over.output_dir.or(self.output_dir),
            tail_window: over.tail_window.or(self.tail_window),
            geometric_window: over.geometric_window.or(self.geometric_window),
            gradient_bias: over.gradient_bias.or(self.gradient_bias),
            custom: over.custom.or(self.custom),
        }
    }

    /// Materializes the experiment's defaults under the set fields.
    pub fn resolve(self) -> Result<ExperimentConfig, ConfigError> {
        let experiment = self
            .experiment
            .ok_or_else(|| ConfigError::Invalid("no experiment selected".into()))?;
        let d = ExperimentConfig::defaults(experiment);
        let config = ExperimentConfig {
            experiment,
            tau: self.tau.unwrap_or(d.tau),
            lambda: self.lambda.unwrap_or(d.lambda),
            nt: self.nt.unwrap_or(d.nt),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            dims: self.dims.unwrap_or(d.dims),
            seed: self.seed.unwrap_or(d.seed),
            output_dir: self.output_dir.unwrap_or(d.output_dir),
            tail_window: self.tail_window.unwrap_or(d.tail_window),
            geometric_window: self.geometric_window.unwrap_or(d.geometric_window),
            gradient_bias: self.gradient_bias.unwrap_or(d.gradient_bias),
            custom: self.custom.unwrap_or(d.custom),
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_win() {
        let file = PartialConfig::from_json(r#"{"experiment":"lq","tau":0.5,"nt":100}"#).unwrap();
        let flags = PartialConfig { tau: Some(0.25), ..Default::default() };
        let c = file.overlay(flags).resolve().unwrap();
        assert_eq!((c.tau, c.nt, c.lambda), (0.25, 100, 30.0));
    }

    #[test]
    fn defaults_per_experiment() {
        let q = ExperimentConfig::defaults(Experiment::Quartic);
        assert_eq!((q.lambda, q.max_iters, q.tail_window.range()), (10.0, 10_000, 1000..10_001));
        let h = ExperimentConfig::defaults(Experiment::Highdim);
        assert_eq!((h.tau, h.lambda, h.dims.clone()), (0.5, 20.0, vec![5, 10, 20]));
        for e in [Experiment::Lq, Experiment::Quartic, Experiment::Highdim, Experiment::Gradcheck, Experiment::Custom] {
            ExperimentConfig::defaults(e).validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            r#"{"experiment":"lq","lambda":0}"#,
            r#"{"experiment":"lq","tau":0}"#,
            r#"{"experiment":"highdim","dims":[]}"#,
            r#"{"experiment":"lq","tail_window":[5,5]}"#,
            r#"{"experiment":"lq","unknown":1}"#,
            r#"{"experiment":"custom","custom":{"control_box":[1,0]}}"#,
            r#"{"tau":1}"#,
        ];
        for text in bad {
            assert!(PartialConfig::from_json(text).and_then(PartialConfig::resolve).is_err(), "{text}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::defaults(Experiment::Custom);
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
