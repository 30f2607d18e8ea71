// SPDX-License-Identifier: MIT OR Apache-2.0

//! WebAssembly entry points for the static demo page in `www/`.
//!
//! Each exported function returns a JSON string; the plain Rust functions
//! behind them are usable (and tested) natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use paramcpd::cpd::{self, Bandwidth, Series};
use paramcpd::dataset::{build_changepoint_corpus, CorpusConfig};
use paramcpd::eval;
use paramcpd::pipeline::{moving_average, standardize};
use paramcpd::{Error, ParamKind, Result};

/// Longest series the page will simulate.
pub const MAX_LEN: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulatedSeries {
    pub kind: ParamKind,
    /// Observed x coordinate.
    pub x: Vec<f64>,
    /// The varying parameter at every step.
    pub parameter: Vec<f64>,
    pub truth: Vec<usize>,
}

pub fn simulate(kind: ParamKind, segments: usize, segment_len: usize, eta: f64, seed: u64) -> Result<SimulatedSeries> {
    if segments.saturating_mul(segment_len) > MAX_LEN {
        return Err(Error::InvalidInput(format!("series longer than {MAX_LEN} steps")));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput("noise level must be a non-negative number".into()));
    }
    let cfg = CorpusConfig {
        segments,
        segment_len,
        eta,
        ..CorpusConfig::default()
    };
    let seq = build_changepoint_corpus(kind, 1, seed, &cfg)?
        .pop()
        .ok_or_else(|| Error::InvalidInput("empty corpus".into()))?;
    let parameter = seq
        .segment_params
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.get(kind), segment_len))
        .collect();
    Ok(SimulatedSeries {
        kind,
        x: seq.trajectory.xs(),
        parameter,
        truth: seq.ground_truth,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentationView {
    pub breakpoints: Vec<usize>,
    pub penalty: f64,
    pub gamma: f64,
    /// Series actually segmented, after standardising and smoothing.
    pub signal: Vec<f64>,
}

/// Standardises and smooths `values`, then runs kernel PELT with the
/// `c * ln(T)` penalty.
pub fn segment(
    values: &[f64],
    penalty_constant: f64,
    min_size: usize,
    smoothing_width: usize,
) -> Result<SegmentationView> {
    if !(penalty_constant >= 0.0 && penalty_constant.is_finite()) {
        return Err(Error::InvalidInput(
            "penalty constant must be a non-negative number".into(),
        ));
    }
    let signal = moving_average(&standardize(values), smoothing_width)?;
    let penalty = cpd::auto_penalty(signal.len(), 1, penalty_constant);
    let seg = cpd::pelt(
        &Series::univariate(signal.clone())?,
        penalty,
        min_size.max(1),
        Bandwidth::Auto,
    )?;
    Ok(SegmentationView {
        breakpoints: seg.breakpoints,
        penalty,
        gamma: seg.gamma,
        signal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScorePoint {
    pub delta: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mae_steps: Option<f64>,
    pub fp_per_1000: f64,
}

pub fn score(predictions: &[usize], truths: &[usize], len: usize, deltas: &[usize]) -> Result<Vec<ScorePoint>> {
    Ok(eval::f1_delta_curve(predictions, truths, len, deltas)?
        .into_iter()
        .map(|(delta, b)| ScorePoint {
            delta,
            precision: b.precision,
            recall: b.recall,
            f1: b.f1,
            mae_steps: b.mae_steps,
            fp_per_1000: b.fp_per_1000,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn widen(v: &[u32]) -> Vec<usize> {
    v.iter().map(|&i| i as usize).collect()
}

#[wasm_bindgen(js_name = simulateSeries)]
pub fn simulate_series(kind: &str, segments: u32, segment_len: u32, eta: f64, seed: u32) -> Result<String, JsError> {
    let kind: ParamKind = kind.parse().map_err(|e: Error| JsError::new(&e.to_string()))?;
    to_js(simulate(
        kind,
        segments as usize,
        segment_len as usize,
        eta,
        seed as u64,
    ))
}

#[wasm_bindgen(js_name = segmentSeries)]
pub fn segment_series(
    values: &[f64],
    penalty_constant: f64,
    min_size: u32,
    smoothing_width: u32,
) -> Result<String, JsError> {
    to_js(segment(
        values,
        penalty_constant,
        min_size as usize,
        smoothing_width as usize,
    ))
}

#[wasm_bindgen(js_name = scoreDetections)]
pub fn score_detections(predictions: &[u32], truths: &[u32], len: u32, deltas: &[u32]) -> Result<String, JsError> {
    to_js(score(&widen(predictions), &widen(truths), len as usize, &widen(deltas)))
}
