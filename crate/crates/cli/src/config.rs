// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use paramcpd::cpd::{Bandwidth, DEFAULT_MIN_SIZE, DEFAULT_PENALTY_CONSTANT};
use paramcpd::dataset::{CorpusConfig, PriorSpec, RegimeTable, TrainingSetConfig, CHANNELS, DEFAULT_WINDOW};
use paramcpd::eval::{CURVE_DELTAS, DEFAULT_DELTA};
use paramcpd::npe::{Activation, MdnConfig, TrainConfig, THETA_DIM};
use paramcpd::pipeline::{Aggregator, DetectionConfig, DEFAULT_POSTERIOR_SAMPLES, DEFAULT_SMOOTHING_WIDTH};
use paramcpd::simulator::{DEFAULT_BURN_IN, DEFAULT_DT};
use paramcpd::ParamKind;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorBlock {
    pub dt: f64,
    pub burn_in: usize,
    /// Observation noise as a fraction of each coordinate's RMS.
    pub eta: f64,
    pub ranges: RegimeTable,
}

impl Default for SimulatorBlock {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            burn_in: DEFAULT_BURN_IN,
            eta: 0.01,
            ranges: RegimeTable::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    /// Training pairs.
    pub n: usize,
    pub w: usize,
    /// Steps simulated after burn-in for each training draw.
    pub steps_after_burn_in: usize,
    pub prior: PriorSpec,
    pub segments: usize,
    pub segment_len: usize,
    pub stationary_len: usize,
    /// Changepoint sequences per parameter kind.
    pub n_sequences: usize,
    /// Stationary trajectories per parameter kind.
    pub n_stationary: usize,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            n: 50_000,
            w: DEFAULT_WINDOW,
            steps_after_burn_in: 500,
            prior: PriorSpec::default(),
            segments: 12,
            segment_len: 800,
            stationary_len: 3000,
            n_sequences: 3,
            n_stationary: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub hidden_sizes: Vec<usize>,
    pub n_components: usize,
    pub activation: Activation,
    pub optimizer: TrainConfig,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let m = MdnConfig::for_window(DEFAULT_WINDOW);
        Self {
            hidden_sizes: m.hidden_sizes,
            n_components: m.n_components,
            activation: m.activation,
            optimizer: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionBlock {
    pub stride: usize,
    pub posterior_samples: usize,
    pub aggregator: Aggregator,
    pub penalty_constant: f64,
    pub min_size: usize,
    pub bandwidth: Bandwidth,
    pub smoothing_width: usize,
}

impl Default for DetectionBlock {
    fn default() -> Self {
        Self {
            stride: 1,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
            aggregator: Aggregator::Median,
            penalty_constant: DEFAULT_PENALTY_CONSTANT,
            min_size: DEFAULT_MIN_SIZE,
            bandwidth: Bandwidth::Auto,
            smoothing_width: DEFAULT_SMOOTHING_WIDTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub deltas: Vec<usize>,
    pub reference_delta: usize,
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self {
            deltas: CURVE_DELTAS.to_vec(),
            reference_delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsBlock {
    pub workdir: PathBuf,
    /// Defaults to `<workdir>/model.bin`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<workdir>/corpora`.
    pub corpora: Option<PathBuf>,
}

impl Default for PathsBlock {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("run"),
            checkpoint: None,
            corpora: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub simulator: SimulatorBlock,
    pub dataset: DatasetBlock,
    pub model: ModelBlock,
    pub detection: DetectionBlock,
    pub eval: EvalBlock,
    pub paths: PathsBlock,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let s = &self.simulator;
        if !(s.dt > 0.0 && s.dt.is_finite()) || !(s.eta >= 0.0 && s.eta.is_finite()) {
            bail!("simulator.dt must be positive and simulator.eta non-negative");
        }
        let d = &self.dataset;
        if d.w < 2 || d.n == 0 || d.steps_after_burn_in < d.w {
            bail!("dataset needs n > 0, w >= 2 and steps_after_burn_in >= w");
        }
        if d.segments == 0 || d.segment_len == 0 || d.stationary_len < d.w {
            bail!("corpus shape must be non-empty and stationary_len >= w");
        }
        d.prior.validate()?;
        s.ranges.check_within(&d.prior)?;
        self.mdn_config().validate()?;
        self.model.optimizer.validate()?;
        self.detection_config(ParamKind::Sigma, 0).validate()?;
        let e = &self.eval;
        if e.deltas.is_empty() || e.deltas.windows(2).any(|p| p[0] >= p[1]) {
            bail!("eval.deltas must be non-empty and strictly increasing");
        }
        Ok(())
    }

    pub fn training_set_config(&self) -> TrainingSetConfig {
        TrainingSetConfig {
            prior: self.dataset.prior,
            n: self.dataset.n,
            w: self.dataset.w,
            dt: self.simulator.dt,
            sim_steps: self.simulator.burn_in + self.dataset.steps_after_burn_in,
            burn_in: self.simulator.burn_in,
            eta: self.simulator.eta,
        }
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            segments: self.dataset.segments,
            segment_len: self.dataset.segment_len,
            stationary_len: self.dataset.stationary_len,
            dt: self.simulator.dt,
            burn_in: self.simulator.burn_in,
            eta: self.simulator.eta,
            ranges: self.simulator.ranges,
        }
    }

    pub fn mdn_config(&self) -> MdnConfig {
        MdnConfig {
            hidden_sizes: self.model.hidden_sizes.clone(),
            n_components: self.model.n_components,
            input_dim: CHANNELS * self.dataset.w,
            theta_dim: THETA_DIM,
            activation: self.model.activation,
        }
    }

    pub fn detection_config(&self, kind: ParamKind, seed: u64) -> DetectionConfig {
        let d = &self.detection;
        DetectionConfig {
            w: self.dataset.w,
            stride: d.stride,
            posterior_samples: d.posterior_samples,
            aggregator: d.aggregator,
            varying_dim: kind,
            penalty_constant: d.penalty_constant,
            min_size: d.min_size,
            bandwidth: d.bandwidth,
            smoothing_width: d.smoothing_width,
            seed,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.workdir.join("model.bin"))
    }

    pub fn corpora_dir(&self) -> PathBuf {
        self.paths
            .corpora
            .clone()
            .unwrap_or_else(|| self.paths.workdir.join("corpora"))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(RESOLVED_CONFIG_FILE),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        assert_eq!(cfg.mdn_config(), MdnConfig::for_window(100));
        assert_eq!(cfg.training_set_config(), TrainingSetConfig::default());
        assert_eq!(cfg.corpus_config(), CorpusConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"dataset": {"window": 5}}"#).is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 4, "dataset": {"n": 10}}"#).unwrap();
        assert_eq!((partial.seed, partial.dataset.n, partial.dataset.w), (4, 10, 100));
        let mut bad = ExperimentConfig::default();
        bad.eval.deltas = vec![5, 2];
        assert!(bad.validate().is_err());
        let mut bad = ExperimentConfig::default();
        bad.dataset.prior.sigma = paramcpd::dataset::Interval::new(8.0, 12.0);
        assert!(bad.validate().is_err());
    }
}
