//! Run configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use lattice_lab_core::attractor::{CloudSpec, DEFAULT_HORIZON};
use lattice_lab_core::liouville::LiouvilleSpec;
use lattice_lab_core::measures::MeasureSpec;
use lattice_lab_core::{Forcing, SystemParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub params: SystemParams,
    pub forcing: Forcing,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            params: SystemParams::default(),
            forcing: Forcing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub burn_in: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            seed: 1,
            t_min: -70.0,
            t_max: 12.0,
            dt: 1e-3,
            burn_in: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Parameter values compared against `alpha0`.
    pub alphas: Vec<f64>,
    pub alpha0: f64,
    /// Fiber time of clouds and measures.
    pub tau: f64,
    /// Window half width `N`.
    pub half_width: usize,

    pub pullback_time: f64,
    /// Points per cloud.
    pub m: usize,
    /// Truncation of the absorbing-radius integral.
    pub horizon: f64,
    pub tail_cutoffs: Vec<usize>,

    /// Cesàro window of the empirical measures.
    pub measure_window: f64,
    /// Birth-time spacing.
    pub ds: f64,
    /// Anchor times of the measures.
    pub measure_times: Vec<f64>,
    /// Directions in the test-function dictionary (four bumps each).
    pub dict_directions: usize,
    /// Dictionary scale; taken from the `alpha0` measures when absent.
    pub dict_radius: Option<f64>,

    pub s: f64,
    pub t: f64,
    pub spacing: f64,
    /// Scale of the Liouville test function; taken from the `alpha0` family when absent.
    pub psi_radius: Option<f64>,

    /// `simulate`: final time, starting at `tau`.
    pub t_end: f64,
    pub record_stride: usize,
    /// `simulate`: initial state `u_i = amplitude / (1 + i²)`.
    pub initial_amplitude: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alphas: (1..=6).map(|n| 0.5f64.powi(n)).collect(),
            alpha0: 0.0,
            tau: 0.0,
            half_width: 32,
            pullback_time: 20.0,
            m: 64,
            horizon: DEFAULT_HORIZON,
            tail_cutoffs: vec![8, 16, 24],
            measure_window: 20.0,
            ds: 0.2,
            measure_times: vec![0.0, 1.0],
            dict_directions: 8,
            dict_radius: None,
            s: 0.0,
            t: 1.0,
            spacing: 0.05,
            psi_radius: None,
            t_end: 10.0,
            record_stride: 10,
            initial_amplitude: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Any of `csv`, `json`, `bin`.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into(), "bin".into()],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

fn field(name: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(format!("{name}: {}", reason.into()))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// TOML form without the output location, which does not affect results.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        c.to_toml()
    }

    /// SHA-256 of the canonical TOML form, so equivalent files share a digest.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        m.params
            .validate()
            .map_err(|e| field("model.params", e.to_string()))?;
        m.forcing
            .validate(&m.params)
            .map_err(|e| field("model.forcing", e.to_string()))?;

        let n = &self.noise;
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return Err(field("noise.dt", format!("must be positive, got {}", n.dt)));
        }
        if !(n.t_min < n.t_max) {
            return Err(field("noise.t_min", "must be below noise.t_max"));
        }
        if !(n.burn_in >= 0.0) {
            return Err(field("noise.burn_in", "must be nonnegative"));
        }

        let e = &self.experiment;
        let all_finite = e.alphas.iter().chain([&e.alpha0, &e.tau]).all(|a| a.is_finite());
        if !all_finite {
            return Err(field("experiment.alphas", "values must be finite"));
        }
        if e.half_width == 0 {
            return Err(field("experiment.half_width", "must be positive"));
        }
        if e.m < 2 {
            return Err(field("experiment.m", "need at least two points"));
        }
        if !(e.pullback_time > 0.0) {
            return Err(field("experiment.pullback_time", "must be positive"));
        }
        if e.tau - e.pullback_time < n.t_min {
            return Err(field(
                "experiment.pullback_time",
                format!(
                    "tau - T = {} lies before noise.t_min = {}",
                    e.tau - e.pullback_time,
                    n.t_min
                ),
            ));
        }
        if e.tau > n.t_max {
            return Err(field("experiment.tau", "lies after noise.t_max"));
        }
        if let Some(c) = e.tail_cutoffs.iter().find(|c| **c > e.half_width) {
            return Err(field("experiment.tail_cutoffs", format!("{c} exceeds half_width")));
        }
        if !(e.measure_window > 0.0) {
            return Err(field("experiment.measure_window", "must be positive"));
        }
        let stride = e.ds / n.dt;
        if !(e.ds > 0.0) || (stride - stride.round()).abs() > 1e-6 * stride {
            return Err(field("experiment.ds", "must be a positive multiple of noise.dt"));
        }
        if e.measure_times.is_empty() {
            return Err(field("experiment.measure_times", "need at least one time"));
        }
        if e.dict_directions == 0 {
            return Err(field("experiment.dict_directions", "must be positive"));
        }
        for (name, r) in [("experiment.dict_radius", e.dict_radius), ("experiment.psi_radius", e.psi_radius)] {
            if let Some(r) = r {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(field(name, "must be positive"));
                }
            }
        }
        if !(e.s < e.t) {
            return Err(field("experiment.s", "need s < t"));
        }
        if !(e.spacing > 0.0) || e.spacing > e.t - e.s {
            return Err(field("experiment.spacing", "must lie in (0, t - s]"));
        }
        if !(e.t_end > e.tau) || e.t_end > n.t_max {
            return Err(field("experiment.t_end", "must lie in (tau, noise.t_max]"));
        }
        if e.record_stride == 0 {
            return Err(field("experiment.record_stride", "must be positive"));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "bin") {
                return Err(field("output.formats", format!("unknown format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn cloud_spec(&self) -> CloudSpec {
        let e = &self.experiment;
        CloudSpec {
            tau: e.tau,
            pullback_time: e.pullback_time,
            m: e.m,
            half_width: e.half_width,
            horizon: e.horizon,
        }
    }

    pub fn measure_spec(&self) -> MeasureSpec {
        let e = &self.experiment;
        MeasureSpec {
            tau: e.tau,
            window: e.measure_window,
            ds: e.ds,
            half_width: e.half_width,
        }
    }

    pub fn liouville_spec(&self) -> LiouvilleSpec {
        let e = &self.experiment;
        LiouvilleSpec {
            tau: e.tau,
            s: e.s,
            t: e.t,
            spacing: e.spacing,
            window: e.measure_window,
            ds: e.ds,
            half_width: e.half_width,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn empty_file_means_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = "[model.params]\np = 1.5\n";
        let msg = RunConfig::from_toml(bad).unwrap_err().to_string();
        assert!(msg.contains("model.params") && msg.contains("p >= 2"), "{msg}");
        let bad = "[experiment]\npullback_time = 100.0\n";
        let msg = RunConfig::from_toml(bad).unwrap_err().to_string();
        assert!(msg.contains("experiment.pullback_time"), "{msg}");
        let bad = "[experiment]\nbogus = 1\n";
        assert!(RunConfig::from_toml(bad).unwrap_err().to_string().contains("bogus"));
        let bad = "[model.forcing]\nfamily = \"power_sine\"\namplitude = 1.0\ngamma = 1.0\n[model.params]\nq = 1.5\n";
        let msg = RunConfig::from_toml(bad).unwrap_err().to_string();
        assert!(msg.contains("model.forcing"), "{msg}");
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = RunConfig::from_toml("[noise]\nseed = 7\n").unwrap();
        let b = RunConfig::from_toml("# comment\n[noise]\nseed   =   7\n\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig::default().digest());
        let mut c = a.clone();
        c.output.dir = PathBuf::from("elsewhere");
        assert_eq!(c.digest(), a.digest());
    }
}
