// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tolerance-matched detection scores and posterior calibration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSequence;
use crate::error::{Error, Result};
use crate::npe::PosteriorModel;
use crate::pipeline::{self, median, Aggregator, DetectionConfig, Method};
use crate::simulator::ParamKind;

/// Default matching tolerance in steps.
pub const DEFAULT_DELTA: usize = 10;
/// Tolerances reported in F1–δ curves.
pub const CURVE_DELTAS: [usize; 5] = [2, 5, 10, 20, 40];

/// One-to-one assignment of predictions to ground-truth changepoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(prediction, truth)`, ordered by truth.
    pub pairs: Vec<(usize, usize)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    pub delta: usize,
}

fn check_sorted(v: &[usize], what: &str) -> Result<()> {
    if v.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::invalid(format!("{what} must be sorted ascending")));
    }
    Ok(())
}

/// Greedy matching, closest pair first; ties go to the earlier truth, then
/// the earlier prediction. Pairs farther apart than `delta` never match.
pub fn match_changepoints(predictions: &[usize], truths: &[usize], delta: usize) -> Result<MatchResult> {
    check_sorted(predictions, "predictions")?;
    check_sorted(truths, "truths")?;
    // (distance, truth index, prediction index) for every admissible pair.
    let mut edges = Vec::new();
    let mut start = 0;
    for (ti, &t) in truths.iter().enumerate() {
        while start < predictions.len() && predictions[start] + delta < t {
            start += 1;
        }
        for (pi, &p) in predictions.iter().enumerate().skip(start) {
            if p > t + delta {
                break;
            }
            edges.push((p.abs_diff(t), ti, pi));
        }
    }
    edges.sort_unstable();
    let mut pred_used = vec![false; predictions.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (_, ti, pi) in edges {
        if !pred_used[pi] && !truth_used[ti] {
            pred_used[pi] = true;
            truth_used[ti] = true;
            pairs.push((predictions[pi], truths[ti]));
        }
    }
    pairs.sort_by_key(|&(p, t)| (t, p));
    let unused = |v: &[usize], used: &[bool]| v.iter().zip(used).filter(|(_, &u)| !u).map(|(&x, _)| x).collect();
    Ok(MatchResult {
        pairs,
        false_positives: unused(predictions, &pred_used),
        false_negatives: unused(truths, &truth_used),
        delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean `|p - t|` over matched pairs; `None` without matches.
    pub mae_steps: Option<f64>,
    pub fp_per_1000: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub series_len: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores a match. Empty denominators give zero.
pub fn metrics(m: &MatchResult, series_len: usize) -> Result<MetricBundle> {
    if series_len == 0 {
        return Err(Error::invalid("series length must be positive"));
    }
    let (tp, fp, fn_) = (m.pairs.len(), m.false_positives.len(), m.false_negatives.len());
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let mae_steps = (tp > 0).then(|| m.pairs.iter().map(|&(p, t)| p.abs_diff(t) as f64).sum::<f64>() / tp as f64);
    Ok(MetricBundle {
        precision,
        recall,
        f1,
        mae_steps,
        fp_per_1000: 1000.0 * fp as f64 / series_len as f64,
        tp,
        fp,
        fn_,
        series_len,
    })
}

pub fn score(predictions: &[usize], truths: &[usize], series_len: usize, delta: usize) -> Result<MetricBundle> {
    metrics(&match_changepoints(predictions, truths, delta)?, series_len)
}

/// Metrics at each tolerance in ascending `deltas`.
pub fn f1_delta_curve(
    predictions: &[usize],
    truths: &[usize],
    series_len: usize,
    deltas: &[usize],
) -> Result<Vec<(usize, MetricBundle)>> {
    check_sorted(deltas, "deltas")?;
    deltas
        .iter()
        .map(|&d| Ok((d, score(predictions, truths, series_len, d)?)))
        .collect()
}

/// Mean of per-sequence bundles; MAE averages only sequences with matches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mae_steps: Option<f64>,
    pub fp_per_1000: f64,
    pub n_sequences: usize,
}

pub fn summarize(bundles: &[MetricBundle]) -> Result<MetricSummary> {
    if bundles.is_empty() {
        return Err(Error::invalid("nothing to summarize"));
    }
    let n = bundles.len() as f64;
    let mean = |f: fn(&MetricBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
    let maes: Vec<f64> = bundles.iter().filter_map(|b| b.mae_steps).collect();
    Ok(MetricSummary {
        precision: mean(|b| b.precision),
        recall: mean(|b| b.recall),
        f1: mean(|b| b.f1),
        mae_steps: (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64),
        fp_per_1000: mean(|b| b.fp_per_1000),
        n_sequences: bundles.len(),
    })
}

/// A row of the main results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub param_kind: ParamKind,
    pub seed: u64,
    pub f1: f64,
    pub mae: Option<f64>,
    pub fp_per_1000: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_table_csv(rows: &[TableRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "method,param_kind,seed,f1,mae,fp_per_1000")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method.name(),
            r.param_kind,
            r.seed,
            r.f1,
            fmt_opt(r.mae),
            r.fp_per_1000
        )?;
    }
    Ok(())
}

/// Columns `method,param_kind,delta,reference,precision,recall,f1,mae_steps,fp_per_1000`;
/// `reference` is 1 on the row for `reference_delta`.
pub fn write_curve_csv(
    rows: &[(Method, ParamKind, usize, MetricSummary)],
    reference_delta: usize,
    mut out: impl Write,
) -> Result<()> {
    writeln!(
        out,
        "method,param_kind,delta,reference,precision,recall,f1,mae_steps,fp_per_1000"
    )?;
    for (m, k, d, s) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.name(),
            k,
            d,
            u8::from(*d == reference_delta),
            s.precision,
            s.recall,
            s.f1,
            fmt_opt(s.mae_steps),
            s.fp_per_1000
        )?;
    }
    Ok(())
}

/// OLS fit of estimates on true values for one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCalibration {
    pub kind: ParamKind,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub mae: f64,
    /// `(theta_true, theta_hat)` per trajectory.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: Vec<ParamCalibration>,
}

impl CalibrationReport {
    /// Columns `param_kind,theta_true,theta_hat`.
    pub fn write_scatter_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "param_kind,theta_true,theta_hat")?;
        for p in &self.params {
            for (t, h) in &p.points {
                writeln!(out, "{},{t},{h}", p.kind)?;
            }
        }
        Ok(())
    }
}

/// Least-squares line `hat ≈ slope · true + intercept` with R² and MAE.
pub fn fit_calibration(kind: ParamKind, points: Vec<(f64, f64)>) -> Result<ParamCalibration> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("calibration needs at least two points"));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("true values are all equal; slope undefined"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let mae = points.iter().map(|p| (p.1 - p.0).abs()).sum::<f64>() / nf;
    Ok(ParamCalibration {
        kind,
        slope,
        intercept,
        r2,
        mae,
        points,
    })
}

/// Median of per-window posterior medians over the central windows: windows
/// whose centre lies within `w/2` steps of either end of the valid range are dropped.
pub fn central_estimate(
    seq: &LabeledSequence,
    kind: ParamKind,
    model: &PosteriorModel,
    cfg: &DetectionConfig,
) -> Result<f64> {
    let cfg = DetectionConfig {
        aggregator: Aggregator::Median,
        ..cfg.clone()
    };
    let t_len = seq.trajectory.len();
    let half = cfg.w / 2;
    let lo = cfg.w - 1 + half;
    if t_len < cfg.w || lo + half >= t_len {
        return Err(Error::invalid(format!(
            "trajectory of length {t_len} leaves no central windows for w={}",
            cfg.w
        )));
    }
    let hi = t_len - 1 - half;
    let pt = pipeline::estimate_trajectory(&seq.trajectory, model, &cfg)?;
    let mut kept: Vec<f64> = pt
        .window_end_indices
        .iter()
        .zip(&pt.estimates)
        .filter(|(&e, _)| e >= lo && e <= hi)
        .map(|(_, p)| p.get(kind))
        .collect();
    if kept.is_empty() {
        return Err(Error::invalid("stride skips every central window"));
    }
    Ok(median(&mut kept))
}

/// Calibration of `kind` over a stationary corpus in which `kind` varies.
pub fn calibrate(
    corpus: &[LabeledSequence],
    kind: ParamKind,
    model: &PosteriorModel,
    cfg: &DetectionConfig,
) -> Result<ParamCalibration> {
    if corpus.is_empty() {
        return Err(Error::invalid("calibration corpus is empty"));
    }
    let points = corpus
        .iter()
        .map(|seq| {
            let truth = seq
                .segment_params
                .first()
                .ok_or_else(|| Error::invalid("sequence without parameters"))?
                .get(kind);
            Ok((truth, central_estimate(seq, kind, model, cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_calibration(kind, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Repeatedly scans every open pair for the smallest (distance, truth, prediction).
    fn naive_greedy(p: &[usize], t: &[usize], delta: usize) -> Vec<(usize, usize)> {
        let (mut pu, mut tu) = (vec![false; p.len()], vec![false; t.len()]);
        let mut out = Vec::new();
        loop {
            let mut best: Option<(usize, usize, usize)> = None;
            for (ti, &tv) in t.iter().enumerate() {
                for (pi, &pv) in p.iter().enumerate() {
                    let d = pv.abs_diff(tv);
                    if tu[ti] || pu[pi] || d > delta {
                        continue;
                    }
                    if best.is_none_or(|b| (d, ti, pi) < b) {
                        best = Some((d, ti, pi));
                    }
                }
            }
            let Some((_, ti, pi)) = best else { break };
            tu[ti] = true;
            pu[pi] = true;
            out.push((p[pi], t[ti]));
        }
        out.sort_by_key(|&(a, b)| (b, a));
        out
    }

    /// Largest one-to-one matching size by exhaustive search.
    fn max_matching(p: &[usize], t: &[usize], delta: usize) -> usize {
        fn go(p: &[usize], t: &[usize], delta: usize, used: &mut Vec<bool>) -> usize {
            let Some((&first, rest)) = t.split_first() else {
                return 0;
            };
            let mut best = go(p, rest, delta, used);
            for i in 0..p.len() {
                if !used[i] && p[i].abs_diff(first) <= delta {
                    used[i] = true;
                    best = best.max(1 + go(p, rest, delta, used));
                    used[i] = false;
                }
            }
            best
        }
        go(p, t, delta, &mut vec![false; p.len()])
    }

    fn sorted_unique(rng: &mut impl Rng, n: usize, hi: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).map(|_| rng.random_range(0..hi)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    #[test]
    fn identical_and_empty() {
        let t = [100, 900, 1700];
        let m = score(&t, &t, 2400, 10).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (3, 0, 0));
        assert_eq!((m.precision, m.recall, m.f1, m.mae_steps), (1.0, 1.0, 1.0, Some(0.0)));
        let e = score(&[], &t, 2400, 10).unwrap();
        assert_eq!((e.tp, e.fn_, e.f1, e.mae_steps), (0, 3, 0.0, None));
        let fp_only = score(&[5, 50], &[], 1000, 10).unwrap();
        assert_eq!((fp_only.precision, fp_only.recall, fp_only.f1), (0.0, 0.0, 0.0));
        assert_eq!(fp_only.fp_per_1000, 2.0);
        assert!(match_changepoints(&[5, 3], &[], 1).is_err());
        assert!(metrics(&match_changepoints(&[], &[], 1).unwrap(), 0).is_err());
    }

    #[test]
    fn equidistant_tie_prefers_earlier_prediction() {
        let m = match_changepoints(&[10, 12], &[11], 2).unwrap();
        assert_eq!(m.pairs, vec![(10, 11)]);
        assert_eq!(m.false_positives, vec![12]);
        assert_eq!(m.pairs.len(), max_matching(&[10, 12], &[11], 2));
    }

    #[test]
    fn greedy_matches_naive_oracle() {
        let mut rng = seed::rng(21, 0, 0);
        for case in 0..1000 {
            let (np, nt) = (rng.random_range(0..9), rng.random_range(0..9));
            let p = sorted_unique(&mut rng, np, 120);
            let t = sorted_unique(&mut rng, nt, 120);
            let delta = rng.random_range(0..25);
            let m = match_changepoints(&p, &t, delta).unwrap();
            assert_eq!(m.pairs, naive_greedy(&p, &t, delta), "case {case}: {p:?} {t:?} {delta}");
            assert!(m.pairs.iter().all(|&(a, b)| a.abs_diff(b) <= delta));
            assert_eq!(m.pairs.len() + m.false_positives.len(), p.len());
            assert_eq!(m.pairs.len() + m.false_negatives.len(), t.len());
            assert!(m.pairs.len() <= max_matching(&p, &t, delta));
            // Maximal: no open prediction and open truth remain within tolerance.
            for &fp in &m.false_positives {
                assert!(m.false_negatives.iter().all(|&f| fp.abs_diff(f) > delta));
            }
        }
    }

    #[test]
    fn perfect_and_two_point_calibration() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (7.0 + i as f64 * 0.4, 7.0 + i as f64 * 0.4)).collect();
        let c = fit_calibration(ParamKind::Sigma, pts).unwrap();
        assert!((c.slope - 1.0).abs() < 1e-12 && c.intercept.abs() < 1e-10);
        assert!((c.r2 - 1.0).abs() < 1e-12 && c.mae == 0.0);
        let two = fit_calibration(ParamKind::Rho, vec![(25.0, 26.0), (38.0, 36.0)]).unwrap();
        assert!((two.slope - 10.0 / 13.0).abs() < 1e-12);
        assert!((two.r2 - 1.0).abs() < 1e-12);
        assert!((two.slope * 25.0 + two.intercept - 26.0).abs() < 1e-12);
        assert!(fit_calibration(ParamKind::Beta, vec![(2.0, 2.1)]).is_err());
        assert!(fit_calibration(ParamKind::Beta, vec![(2.0, 2.1), (2.0, 1.9)]).is_err());
    }

    #[test]
    fn table_and_scatter_csv() {
        let rows = vec![TableRow {
            method: Method::ParamCpd,
            param_kind: ParamKind::Sigma,
            seed: 3,
            f1: 0.5,
            mae: None,
            fp_per_1000: 1.25,
        }];
        let mut out = Vec::new();
        write_table_csv(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "method,param_kind,seed,f1,mae,fp_per_1000\nparam_cpd,sigma,3,0.5,,1.25\n"
        );
        let report = CalibrationReport {
            params: vec![fit_calibration(ParamKind::Beta, vec![(2.0, 2.1), (3.5, 3.4)]).unwrap()],
        };
        let mut out = Vec::new();
        report.write_scatter_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().nth(2), Some("beta,3.5,3.4"));
    }

    #[test]
    fn curve_rejects_unsorted_deltas_and_saturates() {
        assert!(f1_delta_curve(&[1], &[2], 10, &[5, 2]).is_err());
        let c = f1_delta_curve(&[0, 30], &[100, 200, 300], 400, &[400]).unwrap();
        assert_eq!(c[0].1.tp, 2);
    }

    proptest! {
        #[test]
        fn swapping_roles_swaps_errors(seed in 0u64..100_000, delta in 0usize..30) {
            let mut rng = seed::rng(seed, 1, 0);
            let p = sorted_unique(&mut rng, 10, 200);
            let t = sorted_unique(&mut rng, 10, 200);
            let a = score(&p, &t, 1000, delta).unwrap();
            let b = score(&t, &p, 1000, delta).unwrap();
            prop_assert_eq!(a.tp, b.tp);
            prop_assert_eq!(a.fp, b.fn_);
            prop_assert_eq!(a.fn_, b.fp);
            prop_assert_eq!(a.mae_steps, b.mae_steps);
        }

        #[test]
        fn f1_non_decreasing_in_delta(seed in 0u64..100_000) {
            let mut rng = seed::rng(seed, 2, 0);
            let p = sorted_unique(&mut rng, 12, 500);
            let t = sorted_unique(&mut rng, 12, 500);
            let deltas: Vec<usize> = (0..60).collect();
            let curve = f1_delta_curve(&p, &t, 500, &deltas).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[1].1.f1 >= w[0].1.f1 - 1e-12, "{:?}", (w[0].0, w[0].1.f1, w[1].1.f1));
            }
        }

        #[test]
        fn fp_rate_is_exact(fp in 0usize..500, len in 1usize..100_000) {
            let preds: Vec<usize> = (0..fp).map(|i| i * 1000).collect();
            let b = score(&preds, &[], len, 0).unwrap();
            prop_assert_eq!(b.fp_per_1000, 1000.0 * fp as f64 / len as f64);
        }

        #[test]
        fn bundle_recomputable_from_match(seed in 0u64..100_000, delta in 0usize..20) {
            let mut rng = seed::rng(seed, 3, 0);
            let p = sorted_unique(&mut rng, 8, 150);
            let t = sorted_unique(&mut rng, 8, 150);
            let m = match_changepoints(&p, &t, delta).unwrap();
            let b = metrics(&m, 150).unwrap();
            let tp = m.pairs.len() as f64;
            let prec = if p.is_empty() { 0.0 } else { tp / p.len() as f64 };
            let rec = if t.is_empty() { 0.0 } else { tp / t.len() as f64 };
            prop_assert_eq!(b.precision, prec);
            prop_assert_eq!(b.recall, rec);
            if prec + rec > 0.0 {
                prop_assert!((b.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-15);
            }
        }
    }
}
