// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sliding-window parameter estimation and the two detectors built on it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cpd::{self, Bandwidth, Segmentation, Series};
use crate::dataset::{write_window, CHANNELS, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::npe::PosteriorModel;
use crate::seed::{self, stream};
use crate::simulator::{LorenzParams, ParamKind, Trajectory};

pub const DEFAULT_POSTERIOR_SAMPLES: usize = 256;
pub const DEFAULT_SMOOTHING_WIDTH: usize = 5;
/// Windows per forward pass.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Median,
    Mean,
}

impl Aggregator {
    /// Reduces `values` to one number; reorders the slice.
    pub fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => median(values),
        }
    }
}

/// Median with the midpoint convention for even lengths; reorders the slice.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub w: usize,
    pub stride: usize,
    pub posterior_samples: usize,
    pub aggregator: Aggregator,
    pub varying_dim: ParamKind,
    /// `c` in the `c · ln(T) · d` penalty, shared by both detectors.
    pub penalty_constant: f64,
    pub min_size: usize,
    pub bandwidth: Bandwidth,
    /// Moving-average width for the observation baseline.
    pub smoothing_width: usize,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            w: DEFAULT_WINDOW,
            stride: 1,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
            aggregator: Aggregator::Median,
            varying_dim: ParamKind::Sigma,
            penalty_constant: cpd::DEFAULT_PENALTY_CONSTANT,
            min_size: cpd::DEFAULT_MIN_SIZE,
            bandwidth: Bandwidth::Auto,
            smoothing_width: DEFAULT_SMOOTHING_WIDTH,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w < 2 || self.stride == 0 {
            return Err(Error::invalid(format!(
                "window length must be at least 2 and stride positive (w={}, s={})",
                self.w, self.stride
            )));
        }
        if self.posterior_samples == 0 || self.min_size == 0 || self.smoothing_width == 0 {
            return Err(Error::invalid(
                "sample count, min_size and smoothing width must be positive",
            ));
        }
        if !(self.penalty_constant >= 0.0 && self.penalty_constant.is_finite()) {
            return Err(Error::invalid("penalty constant must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Window end indices `w-1, w-1+s, ...` below `len`.
pub fn window_ends(len: usize, w: usize, stride: usize) -> Vec<usize> {
    if len < w || w == 0 || stride == 0 {
        return Vec::new();
    }
    (w - 1..len).step_by(stride).collect()
}

/// Maps a window end to the source index at the window centre.
pub fn align_to_source(window_end_index: usize, w: usize) -> usize {
    window_end_index - w / 2
}

/// Aggregated per-window estimates with their source positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTrajectory {
    pub estimates: Vec<LorenzParams>,
    pub window_end_indices: Vec<usize>,
    pub w: usize,
    pub stride: usize,
}

impl ParamTrajectory {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.window_end_indices
            .iter()
            .map(|&e| align_to_source(e, self.w))
            .collect()
    }

    pub fn component(&self, kind: ParamKind) -> Vec<f64> {
        self.estimates.iter().map(|p| p.get(kind)).collect()
    }

    /// Columns `source_index, sigma_hat, rho_hat, beta_hat`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "source_index,sigma_hat,rho_hat,beta_hat")?;
        for (p, i) in self.estimates.iter().zip(self.source_indices()) {
            writeln!(out, "{i},{},{},{}", p.sigma, p.rho, p.beta)?;
        }
        Ok(())
    }
}

/// Posterior draws for window `k` use this seed with [`PosteriorModel::sample_posterior`].
pub fn window_seed(master: u64, k: usize) -> u64 {
    seed::derive(master, stream::POSTERIOR, k as u64)
}

/// Slides a window over `traj`, draws posterior samples per window and
/// aggregates them per parameter.
pub fn estimate_trajectory(
    traj: &Trajectory,
    model: &PosteriorModel,
    cfg: &DetectionConfig,
) -> Result<ParamTrajectory> {
    cfg.validate()?;
    if model.w != cfg.w {
        return Err(Error::DimensionMismatch {
            expected: model.w,
            got: cfg.w,
        });
    }
    if traj.len() < cfg.w {
        return Err(Error::invalid(format!(
            "trajectory of length {} is shorter than the window {}",
            traj.len(),
            cfg.w
        )));
    }
    model.norm.validate()?;
    let ends = window_ends(traj.len(), cfg.w, cfg.stride);
    let dim = CHANNELS * cfg.w;
    let n_chunks = ends.len().div_ceil(CHUNK);
    let chunks = crate::par_map(n_chunks, |c| -> Result<Vec<LorenzParams>> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(ends.len());
        let mut feats = vec![0.0; (hi - lo) * dim];
        for (k, &end) in ends[lo..hi].iter().enumerate() {
            let block = &mut feats[k * dim..(k + 1) * dim];
            write_window(traj, end, cfg.w, block)?;
            model.norm.apply_in_place(block, cfg.w);
        }
        if feats.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature after standardization"));
        }
        let dens = model.forward_batch(&feats)?;
        let mut draws = [
            vec![0.0; cfg.posterior_samples],
            vec![0.0; cfg.posterior_samples],
            vec![0.0; cfg.posterior_samples],
        ];
        Ok(dens
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let mut rng = seed::rng(window_seed(cfg.seed, lo + k), stream::POSTERIOR, 0);
                for m in 0..cfg.posterior_samples {
                    let s = d.sample(&mut rng).to_array();
                    for (col, v) in draws.iter_mut().zip(s) {
                        col[m] = v;
                    }
                }
                LorenzParams::from_array(std::array::from_fn(|i| cfg.aggregator.apply(&mut draws[i])))
            })
            .collect())
    });
    let mut estimates = Vec::with_capacity(ends.len());
    for c in chunks {
        estimates.extend(c?);
    }
    Ok(ParamTrajectory {
        estimates,
        window_end_indices: ends,
        w: cfg.w,
        stride: cfg.stride,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ParamCpd,
    ObsCpd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ParamCpd => "param_cpd",
            Method::ObsCpd => "obs_cpd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub method: Method,
    /// Strictly increasing indices into the source trajectory.
    pub predicted_changepoints: Vec<usize>,
    pub source_len: usize,
    /// Absent when the detector input had fewer than two points.
    pub segmentation: Option<Segmentation>,
    pub config: DetectionConfig,
    #[serde(skip)]
    pub param_trajectory: Option<ParamTrajectory>,
}

fn segment(values: Vec<f64>, cfg: &DetectionConfig) -> Result<Option<Segmentation>> {
    if values.len() < 2 {
        return Ok(None);
    }
    let penalty = cpd::auto_penalty(values.len(), 1, cfg.penalty_constant);
    let series = Series::univariate(values)?;
    cpd::pelt(&series, penalty, cfg.min_size, cfg.bandwidth).map(Some)
}

/// Runs the detector on the varying dimension of precomputed estimates and
/// maps breakpoints to window centres.
pub fn detect_on_estimates(pt: ParamTrajectory, source_len: usize, cfg: &DetectionConfig) -> Result<DetectionResult> {
    cfg.validate()?;
    let seg = segment(pt.component(cfg.varying_dim), cfg)?;
    let predicted = seg
        .iter()
        .flat_map(|s| &s.breakpoints)
        .map(|&b| align_to_source(pt.window_end_indices[b], pt.w))
        .collect();
    Ok(DetectionResult {
        method: Method::ParamCpd,
        predicted_changepoints: predicted,
        source_len,
        segmentation: seg,
        config: cfg.clone(),
        param_trajectory: Some(pt),
    })
}

/// Changepoints of the estimated parameter trajectory.
pub fn detect_param_cpd(traj: &Trajectory, model: &PosteriorModel, cfg: &DetectionConfig) -> Result<DetectionResult> {
    let pt = estimate_trajectory(traj, model, cfg)?;
    detect_on_estimates(pt, traj.len(), cfg)
}

/// Zero mean, unit population variance; a constant input maps to zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        values.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Centred moving average, truncated at the ends. Even widths lean right.
pub fn moving_average(values: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 {
        return Err(Error::invalid("smoothing width must be positive"));
    }
    let (left, right) = ((width - 1) / 2, width / 2);
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Baseline: detector applied to the standardized, smoothed x coordinate.
pub fn detect_obs_cpd(traj: &Trajectory, cfg: &DetectionConfig) -> Result<DetectionResult> {
    cfg.validate()?;
    if traj.len() < cfg.smoothing_width {
        return Err(Error::invalid(format!(
            "trajectory of length {} is shorter than the smoothing width {}",
            traj.len(),
            cfg.smoothing_width
        )));
    }
    let x = moving_average(&standardize(&traj.xs()), cfg.smoothing_width)?;
    let seg = segment(x, cfg)?;
    Ok(DetectionResult {
        method: Method::ObsCpd,
        predicted_changepoints: seg.as_ref().map(|s| s.breakpoints.clone()).unwrap_or_default(),
        source_len: traj.len(),
        segmentation: seg,
        config: cfg.clone(),
        param_trajectory: None,
    })
}
