use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use stabrisk::riskmc::RiskMode;
use stabrisk::scenario::ScenarioSpec;

/// Run configuration as read from a TOML file. Every field is optional;
/// missing values fall back to the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub risk_mode: Option<RiskMode>,
    pub voltage_threshold: Option<f64>,
    pub frequency_threshold: Option<f64>,
    pub workers: Option<usize>,
    pub checkpoint_interval: Option<usize>,
    pub convergence_window: Option<usize>,
    pub convergence_threshold: Option<f64>,
    pub histogram_bins: Option<usize>,
    pub scenario: Option<ScenarioSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings shared by the subcommands. The serialized form
/// feeds the manifest hash, so fields that cannot change results are left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// `None` selects the bundled 39-bus case.
    pub case: Option<PathBuf>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n_max: usize,
    pub dt: f64,
    pub t_end: f64,
    pub risk_mode: RiskMode,
    pub voltage_threshold: f64,
    pub frequency_threshold: f64,
    #[serde(skip)]
    pub workers: usize,
    pub checkpoint_interval: usize,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    pub histogram_bins: usize,
    pub scenario: Option<ScenarioSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: None,
            output_dir: PathBuf::from("out"),
            seed: 1,
            n_max: 30_000,
            dt: 0.005,
            t_end: 10.0,
            risk_mode: RiskMode::Sampled,
            voltage_threshold: 0.05,
            frequency_threshold: 0.5,
            workers: 0,
            checkpoint_interval: 1000,
            convergence_window: 5000,
            convergence_threshold: 0.005,
            histogram_bins: 40,
            scenario: None,
        }
    }
}

impl RunConfig {
    /// Command-line values win over the file, the file over the defaults.
    pub fn resolve(cli: &FileConfig, file: &FileConfig) -> anyhow::Result<Self> {
        let d = RunConfig::default();
        macro_rules! pick {
            ($f:ident) => {
                cli.$f.clone().or_else(|| file.$f.clone())
            };
        }
        let cfg = RunConfig {
            case: pick!(case),
            output_dir: pick!(output_dir).unwrap_or(d.output_dir),
            seed: pick!(seed).unwrap_or(d.seed),
            n_max: pick!(n_max).unwrap_or(d.n_max),
            dt: pick!(dt).unwrap_or(d.dt),
            t_end: pick!(t_end).unwrap_or(d.t_end),
            risk_mode: pick!(risk_mode).unwrap_or(d.risk_mode),
            voltage_threshold: pick!(voltage_threshold).unwrap_or(d.voltage_threshold),
            frequency_threshold: pick!(frequency_threshold).unwrap_or(d.frequency_threshold),
            workers: pick!(workers).unwrap_or(d.workers),
            checkpoint_interval: pick!(checkpoint_interval).unwrap_or(d.checkpoint_interval),
            convergence_window: pick!(convergence_window).unwrap_or(d.convergence_window),
            convergence_threshold: pick!(convergence_threshold).unwrap_or(d.convergence_threshold),
            histogram_bins: pick!(histogram_bins).unwrap_or(d.histogram_bins),
            scenario: pick!(scenario),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.n_max > 0, "n_max must be positive");
        anyhow::ensure!(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive, got {}", self.dt);
        anyhow::ensure!(self.t_end > 0.0 && self.t_end.is_finite(), "t_end must be positive, got {}", self.t_end);
        anyhow::ensure!(self.voltage_threshold >= 0.0, "voltage threshold must be non-negative");
        anyhow::ensure!(self.frequency_threshold >= 0.0, "frequency threshold must be non-negative");
        anyhow::ensure!(self.checkpoint_interval > 0, "checkpoint interval must be positive");
        anyhow::ensure!(self.histogram_bins > 0, "histogram needs at least one bin");
        Ok(())
    }

    pub fn metrics(&self) -> stabrisk::metrics::MetricsConfig {
        stabrisk::metrics::MetricsConfig {
            voltage_threshold_pu: self.voltage_threshold,
            frequency_threshold_hz: self.frequency_threshold,
            ..Default::default()
        }
    }

    pub fn sim(&self) -> stabrisk::dynsim::SimOptions {
        stabrisk::dynsim::SimOptions { t_end: self.t_end, dt: self.dt, ..Default::default() }
    }

    pub fn mc(&self) -> stabrisk::riskmc::McConfig {
        stabrisk::riskmc::McConfig {
            n_max: self.n_max,
            seed: self.seed,
            risk_mode: self.risk_mode,
            checkpoint_interval: self.checkpoint_interval,
            convergence_window: self.convergence_window,
            convergence_threshold: self.convergence_threshold,
            workers: self.workers,
            sim: self.sim(),
            metrics: self.metrics(),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_experiment() {
        let c = RunConfig::resolve(&FileConfig::default(), &FileConfig::default()).unwrap();
        assert_eq!((c.n_max, c.dt, c.t_end, c.seed), (30_000, 0.005, 10.0, 1));
        assert_eq!((c.voltage_threshold, c.frequency_threshold), (0.05, 0.5));
        let mc = c.mc();
        assert_eq!(mc.sim.t_end, 10.0);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file: FileConfig = toml::from_str("seed = 5\nn_max = 200\n").unwrap();
        let cli = FileConfig { seed: Some(9), ..Default::default() };
        let c = RunConfig::resolve(&cli, &file).unwrap();
        assert_eq!((c.seed, c.n_max, c.t_end), (9, 200, 10.0));
    }

    #[test]
    fn file_rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<FileConfig>("sed = 5\n").is_err());
        let file: FileConfig = toml::from_str("dt = -1.0\n").unwrap();
        assert!(RunConfig::resolve(&FileConfig::default(), &file).is_err());
    }

    #[test]
    fn scenario_in_file() {
        let file: FileConfig = toml::from_str("[scenario]\nkind = \"load_scale\"\nfactor = 1.1\n").unwrap();
        assert_eq!(file.scenario, Some(ScenarioSpec::LoadScale { factor: 1.1 }));
    }
}
