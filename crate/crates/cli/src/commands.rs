// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use paramcpd::dataset::{
    build_changepoint_corpus, build_stationary_corpus, build_training_set, read_corpus, write_corpus, LabeledSequence,
};
use paramcpd::eval::{self, fit_calibration, CalibrationReport, MetricBundle, MetricSummary, TableRow};
use paramcpd::npe::{train_with_progress, PosteriorModel};
use paramcpd::pipeline::{
    detect_obs_cpd, detect_on_estimates, detect_param_cpd, estimate_trajectory, DetectionResult, Method,
};
use paramcpd::seed::{self, stream};
use paramcpd::ParamKind;

use crate::config::ExperimentConfig;

pub const RESULTS_DIR: &str = "results";
pub const EVAL_DIR: &str = "eval";
pub const CALIBRATION_DIR: &str = "calibration";
pub const SWEEP_DIR: &str = "sweep";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

/// Refuses to reuse a non-empty directory unless `force`, in which case it is cleared.
fn prepare_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
        if !force {
            bail!(
                "{} already exists and is not empty (use --force to overwrite)",
                dir.display()
            );
        }
        std::fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn corpus_dir(cfg: &ExperimentConfig, kind: ParamKind, stationary: bool) -> PathBuf {
    let name = if stationary {
        format!("{kind}_stationary")
    } else {
        kind.to_string()
    };
    cfg.corpora_dir().join(name)
}

pub fn simulate(
    cfg: &ExperimentConfig,
    kinds: &[ParamKind],
    changepoint: bool,
    stationary: bool,
    force: bool,
) -> anyhow::Result<()> {
    let ccfg = cfg.corpus_config();
    for &kind in kinds {
        for (on, is_stat) in [(changepoint, false), (stationary, true)] {
            if !on {
                continue;
            }
            let dir = corpus_dir(cfg, kind, is_stat);
            prepare_dir(&dir, force)?;
            let corpus = if is_stat {
                build_stationary_corpus(kind, cfg.dataset.n_stationary, cfg.seed, &ccfg)?
            } else {
                build_changepoint_corpus(kind, cfg.dataset.n_sequences, cfg.seed, &ccfg)?
            };
            write_corpus(&dir, kind, is_stat, cfg.seed, &ccfg, &corpus)?;
            cfg.write_resolved(&dir)?;
            eprintln!("wrote {} sequences to {}", corpus.len(), dir.display());
        }
    }
    Ok(())
}

/// Builds the training set and fits the model; `log` receives CSV lines.
pub fn fit_model(cfg: &ExperimentConfig, mut log: impl Write) -> anyhow::Result<PosteriorModel> {
    let set = build_training_set(&cfg.training_set_config(), seed::derive(cfg.seed, stream::PRIOR, 0))?;
    eprintln!(
        "training set: {} pairs ({} rejected draws resampled)",
        set.len(),
        set.rejected
    );
    writeln!(log, "epoch,train_nll,val_nll")?;
    let mut io_err = None;
    let out = train_with_progress(
        &set,
        &cfg.mdn_config(),
        &cfg.model.optimizer,
        seed::derive(cfg.seed, stream::INIT_WEIGHTS, 0),
        |r| {
            eprintln!("epoch {:>3}  train {:.4}  val {:.4}", r.epoch, r.train_nll, r.val_nll);
            if let Err(e) = writeln!(log, "{},{},{}", r.epoch, r.train_nll, r.val_nll) {
                io_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log.flush()?;
    eprintln!(
        "best epoch {} (val NLL {:.4})",
        out.model.meta.best_epoch, out.best_val_nll
    );
    Ok(out.model)
}

pub fn train(cfg: &ExperimentConfig, force: bool) -> anyhow::Result<()> {
    let ckpt = cfg.checkpoint_path();
    if ckpt.exists() && !force {
        bail!("{} already exists (use --force to overwrite)", ckpt.display());
    }
    let dir = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
    std::fs::create_dir_all(&dir)?;
    let model = fit_model(cfg, create(&dir.join(TRAIN_LOG_FILE))?)?;
    model.save(&ckpt)?;
    cfg.write_resolved(&dir)?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

/// Detection output for one sequence, with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub param_kind: ParamKind,
    pub index: usize,
    pub sequence_seed: u64,
    pub ground_truth: Vec<usize>,
    pub result: DetectionResult,
}

pub fn detection_seed(master: u64, kind: ParamKind, index: usize) -> u64 {
    seed::derive(master, stream::WINDOW, (kind.index() as u64) << 32 | index as u64)
}

/// Runs one detector over a corpus.
pub fn detect_corpus(
    cfg: &ExperimentConfig,
    kind: ParamKind,
    corpus: &[LabeledSequence],
    method: Method,
    model: Option<&PosteriorModel>,
) -> anyhow::Result<Vec<SequenceResult>> {
    corpus
        .iter()
        .enumerate()
        .map(|(j, seq)| {
            let dcfg = cfg.detection_config(kind, detection_seed(cfg.seed, kind, j));
            let result = match method {
                Method::ParamCpd => {
                    let model = model.context("param_cpd needs a trained model")?;
                    detect_param_cpd(&seq.trajectory, model, &dcfg)?
                }
                Method::ObsCpd => detect_obs_cpd(&seq.trajectory, &dcfg)?,
            };
            Ok(SequenceResult {
                param_kind: kind,
                index: j,
                sequence_seed: seq.seed,
                ground_truth: seq.ground_truth.clone(),
                result,
            })
        })
        .collect()
}

fn load_model(cfg: &ExperimentConfig) -> anyhow::Result<PosteriorModel> {
    let path = cfg.checkpoint_path();
    let model = PosteriorModel::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if model.w != cfg.dataset.w {
        bail!("checkpoint window {} differs from dataset.w {}", model.w, cfg.dataset.w);
    }
    Ok(model)
}

pub fn detect(cfg: &ExperimentConfig, kinds: &[ParamKind], methods: &[Method], force: bool) -> anyhow::Result<()> {
    let model = if methods.contains(&Method::ParamCpd) {
        Some(load_model(cfg)?)
    } else {
        None
    };
    let root = cfg.paths.workdir.join(RESULTS_DIR);
    for &method in methods {
        for &kind in kinds {
            let (_, corpus) = read_corpus(&corpus_dir(cfg, kind, false))
                .with_context(|| format!("reading the {kind} corpus (run `simulate` first)"))?;
            let dir = root.join(method.name()).join(kind.to_string());
            prepare_dir(&dir, force)?;
            for r in detect_corpus(cfg, kind, &corpus, method, model.as_ref())? {
                write_json(&dir.join(format!("seq_{:03}.json", r.index)), &r)?;
                if let Some(pt) = &r.result.param_trajectory {
                    pt.write_csv(create(&dir.join(format!("seq_{:03}_trajectory.csv", r.index)))?)?;
                }
                eprintln!(
                    "{} {kind} seq {}: {} predicted, {} true",
                    method.name(),
                    r.index,
                    r.result.predicted_changepoints.len(),
                    r.ground_truth.len()
                );
            }
        }
    }
    cfg.write_resolved(&root)?;
    Ok(())
}

fn read_results(root: &Path) -> anyhow::Result<Vec<SequenceResult>> {
    let mut out = Vec::new();
    for method in [Method::ParamCpd, Method::ObsCpd] {
        for kind in ParamKind::ALL {
            let dir = root.join(method.name()).join(kind.to_string());
            if !dir.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == "json"));
            files.sort();
            for f in files {
                let r: SequenceResult =
                    serde_json::from_slice(&std::fs::read(&f)?).with_context(|| format!("parsing {}", f.display()))?;
                out.push(r);
            }
        }
    }
    if out.is_empty() {
        bail!("no detection results under {}", root.display());
    }
    Ok(out)
}

fn bundle(r: &SequenceResult, delta: usize) -> anyhow::Result<MetricBundle> {
    Ok(eval::score(
        &r.result.predicted_changepoints,
        &r.ground_truth,
        r.result.source_len,
        delta,
    )?)
}

fn table_rows(results: &[SequenceResult], delta: usize) -> anyhow::Result<Vec<TableRow>> {
    results
        .iter()
        .map(|r| {
            let b = bundle(r, delta)?;
            Ok(TableRow {
                method: r.result.method,
                param_kind: r.param_kind,
                seed: r.index as u64,
                f1: b.f1,
                mae: b.mae_steps,
                fp_per_1000: b.fp_per_1000,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryEntry {
    method: Method,
    param_kind: ParamKind,
    delta: usize,
    summary: MetricSummary,
}

#[derive(Serialize)]
struct SequenceEntry {
    method: Method,
    param_kind: ParamKind,
    index: usize,
    delta: usize,
    metrics: MetricBundle,
}

#[derive(Serialize)]
struct MetricsReport {
    reference_delta: usize,
    deltas: Vec<usize>,
    summaries: Vec<SummaryEntry>,
    sequences: Vec<SequenceEntry>,
}

/// Mean metrics per (method, kind) at each delta, in a fixed order.
pub fn summaries(
    results: &[SequenceResult],
    deltas: &[usize],
) -> anyhow::Result<Vec<(Method, ParamKind, usize, MetricSummary)>> {
    let mut out = Vec::new();
    for method in [Method::ParamCpd, Method::ObsCpd] {
        for kind in ParamKind::ALL {
            let group: Vec<&SequenceResult> = results
                .iter()
                .filter(|r| r.result.method == method && r.param_kind == kind)
                .collect();
            if group.is_empty() {
                continue;
            }
            for &d in deltas {
                let bundles = group.iter().map(|r| bundle(r, d)).collect::<anyhow::Result<Vec<_>>>()?;
                out.push((method, kind, d, eval::summarize(&bundles)?));
            }
        }
    }
    Ok(out)
}

pub fn evaluate(cfg: &ExperimentConfig, results_dir: Option<PathBuf>, force: bool) -> anyhow::Result<()> {
    let root = results_dir.unwrap_or_else(|| cfg.paths.workdir.join(RESULTS_DIR));
    let results = read_results(&root)?;
    let out = cfg.paths.workdir.join(EVAL_DIR);
    prepare_dir(&out, force)?;
    let e = &cfg.eval;
    eval::write_table_csv(
        &table_rows(&results, e.reference_delta)?,
        create(&out.join("table.csv"))?,
    )?;
    let sums = summaries(&results, &e.deltas)?;
    eval::write_curve_csv(&sums, e.reference_delta, create(&out.join("f1_delta.csv"))?)?;
    let mut sequences = Vec::new();
    for r in &results {
        for &d in &e.deltas {
            sequences.push(SequenceEntry {
                method: r.result.method,
                param_kind: r.param_kind,
                index: r.index,
                delta: d,
                metrics: bundle(r, d)?,
            });
        }
    }
    let report = MetricsReport {
        reference_delta: e.reference_delta,
        deltas: e.deltas.clone(),
        summaries: sums
            .into_iter()
            .map(|(method, param_kind, delta, summary)| SummaryEntry {
                method,
                param_kind,
                delta,
                summary,
            })
            .collect(),
        sequences,
    };
    write_json(&out.join("metrics.json"), &report)?;
    cfg.write_resolved(&out)?;
    for s in report.summaries.iter().filter(|s| s.delta == e.reference_delta) {
        eprintln!(
            "{:<9} {:<5} F1 {:.3}  FP/1000 {:.2}",
            s.method.name(),
            s.param_kind,
            s.summary.f1,
            s.summary.fp_per_1000
        );
    }
    Ok(())
}

fn calibration_seed(master: u64, kind: ParamKind, index: usize) -> u64 {
    seed::derive(
        master,
        stream::WINDOW,
        1 << 48 | (kind.index() as u64) << 32 | index as u64,
    )
}

pub fn calibrate(cfg: &ExperimentConfig, kinds: &[ParamKind], perfect: bool, force: bool) -> anyhow::Result<()> {
    let model = if perfect { None } else { Some(load_model(cfg)?) };
    let out = cfg.paths.workdir.join(CALIBRATION_DIR);
    prepare_dir(&out, force)?;
    let mut report = CalibrationReport::default();
    for &kind in kinds {
        let (_, corpus) = read_corpus(&corpus_dir(cfg, kind, true))
            .with_context(|| format!("reading the {kind} stationary corpus (run `simulate --stationary` first)"))?;
        let points = corpus
            .iter()
            .enumerate()
            .map(|(j, seq)| {
                let truth = seq
                    .segment_params
                    .first()
                    .context("sequence without parameters")?
                    .get(kind);
                let hat = match &model {
                    None => truth,
                    Some(m) => {
                        let dcfg = cfg.detection_config(kind, calibration_seed(cfg.seed, kind, j));
                        eval::central_estimate(seq, kind, m, &dcfg)?
                    }
                };
                Ok((truth, hat))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let fit = fit_calibration(kind, points)?;
        eprintln!(
            "{kind:<5} slope {:.3}  intercept {:.3}  R2 {:.4}  MAE {:.4}",
            fit.slope, fit.intercept, fit.r2, fit.mae
        );
        let single = CalibrationReport {
            params: vec![fit.clone()],
        };
        single.write_scatter_csv(create(&out.join(format!("scatter_{kind}.csv")))?)?;
        report.params.push(fit);
    }
    write_json(&out.join("calibration.json"), &report)?;
    cfg.write_resolved(&out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Delta,
    W,
    Eta,
    Penalty,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::W => "w",
            SweepAxis::Eta => "eta",
            SweepAxis::Penalty => "penalty",
        }
    }
}

fn write_sweep_rows(out: &mut impl Write, axis: SweepAxis, value: &str, rows: &[TableRow]) -> anyhow::Result<()> {
    for r in rows {
        writeln!(
            out,
            "{},{value},{},{},{},{},{},{}",
            axis.name(),
            r.method.name(),
            r.param_kind,
            r.seed,
            r.f1,
            r.mae.map(|m| m.to_string()).unwrap_or_default(),
            r.fp_per_1000
        )?;
    }
    Ok(())
}

/// Simulates fresh corpora and runs both detectors, all in memory.
fn run_in_memory(
    cfg: &ExperimentConfig,
    kinds: &[ParamKind],
    model: &PosteriorModel,
) -> anyhow::Result<Vec<SequenceResult>> {
    let mut results = Vec::new();
    for &kind in kinds {
        let corpus = build_changepoint_corpus(kind, cfg.dataset.n_sequences, cfg.seed, &cfg.corpus_config())?;
        for method in [Method::ParamCpd, Method::ObsCpd] {
            results.extend(detect_corpus(cfg, kind, &corpus, method, Some(model))?);
        }
    }
    results.sort_by_key(|r| (r.result.method == Method::ObsCpd, r.param_kind.index(), r.index));
    Ok(results)
}

/// Penalty-constant sweep over fresh corpora; each parameter trajectory is
/// estimated once and re-segmented per value.
fn penalty_sweep(
    cfg: &ExperimentConfig,
    kinds: &[ParamKind],
    values: &[f64],
    model: &PosteriorModel,
) -> anyhow::Result<Vec<Vec<SequenceResult>>> {
    let mut per_value = vec![Vec::new(); values.len()];
    for &kind in kinds {
        let corpus = build_changepoint_corpus(kind, cfg.dataset.n_sequences, cfg.seed, &cfg.corpus_config())?;
        for (j, seq) in corpus.iter().enumerate() {
            let base = cfg.detection_config(kind, detection_seed(cfg.seed, kind, j));
            let pt = estimate_trajectory(&seq.trajectory, model, &base)?;
            for (slot, &c) in per_value.iter_mut().zip(values) {
                let dcfg = paramcpd::pipeline::DetectionConfig {
                    penalty_constant: c,
                    ..base.clone()
                };
                dcfg.validate()?;
                let param = detect_on_estimates(pt.clone(), seq.trajectory.len(), &dcfg)?;
                let obs = detect_obs_cpd(&seq.trajectory, &dcfg)?;
                for result in [param, obs] {
                    slot.push(SequenceResult {
                        param_kind: kind,
                        index: j,
                        sequence_seed: seq.seed,
                        ground_truth: seq.ground_truth.clone(),
                        result,
                    });
                }
            }
        }
    }
    for slot in &mut per_value {
        slot.sort_by_key(|r| (r.result.method == Method::ObsCpd, r.param_kind.index(), r.index));
    }
    Ok(per_value)
}

/// Long-format metrics across one axis; `delta` rescores saved results,
/// `eta` and `penalty` re-simulate, `w` also retrains.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    kinds: &[ParamKind],
    results_dir: Option<PathBuf>,
    force: bool,
) -> anyhow::Result<()> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let out = cfg.paths.workdir.join(SWEEP_DIR);
    std::fs::create_dir_all(&out)?;
    let path = out.join(format!("{}.csv", axis.name()));
    if path.exists() && !force {
        bail!("{} already exists (use --force to overwrite)", path.display());
    }
    let mut buf = Vec::new();
    writeln!(buf, "axis,value,method,param_kind,seed,f1,mae,fp_per_1000")?;
    match axis {
        SweepAxis::Delta => {
            let root = results_dir.unwrap_or_else(|| cfg.paths.workdir.join(RESULTS_DIR));
            let results = read_results(&root)?;
            let results: Vec<SequenceResult> = results.into_iter().filter(|r| kinds.contains(&r.param_kind)).collect();
            for v in values {
                let d: usize = v.parse().with_context(|| format!("bad delta {v:?}"))?;
                write_sweep_rows(&mut buf, axis, v, &table_rows(&results, d)?)?;
            }
        }
        SweepAxis::Eta => {
            let model = load_model(cfg)?;
            for v in values {
                let mut c = cfg.clone();
                c.simulator.eta = v.parse().with_context(|| format!("bad eta {v:?}"))?;
                c.validate()?;
                let results = run_in_memory(&c, kinds, &model)?;
                write_sweep_rows(&mut buf, axis, v, &table_rows(&results, c.eval.reference_delta)?)?;
            }
        }
        SweepAxis::Penalty => {
            let model = load_model(cfg)?;
            let cs = values
                .iter()
                .map(|v| v.parse::<f64>().with_context(|| format!("bad penalty constant {v:?}")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            for (v, results) in values.iter().zip(penalty_sweep(cfg, kinds, &cs, &model)?) {
                write_sweep_rows(&mut buf, axis, v, &table_rows(&results, cfg.eval.reference_delta)?)?;
            }
        }
        SweepAxis::W => {
            for v in values {
                let mut c = cfg.clone();
                c.dataset.w = v.parse().with_context(|| format!("bad w {v:?}"))?;
                c.validate()?;
                let model = fit_model(&c, std::io::sink())?;
                let results = run_in_memory(&c, kinds, &model)?;
                write_sweep_rows(&mut buf, axis, v, &table_rows(&results, c.eval.reference_delta)?)?;
            }
        }
    }
    std::fs::write(&path, buf)?;
    cfg.write_resolved(&out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
