// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prior sampling, window featurization and corpus generation.
//!
//! Training pairs follow the one-simulation-per-draw loop: sample a parameter
//! vector from the prior, simulate, discard burn-in, add noise and cut one window
//! at a random position. Evaluation corpora are either piecewise-constant
//! changepoint sequences or long stationary trajectories.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::par_map;
use crate::seed::{self, stream};
use crate::simulator::{
    add_noise, simulate_schedule, Integrator, LorenzParams, NoiseSpec, ParamKind, Segment, SegmentSchedule, State,
    Trajectory, DEFAULT_BURN_IN, DEFAULT_DT,
};

/// Number of feature channels: x, y, z and y - x.
pub const CHANNELS: usize = 4;

pub const DEFAULT_WINDOW: usize = 100;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.lo + self.width() * rng.random::<f64>()
    }
}

/// Independent uniform prior over the three parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub sigma: Interval,
    pub rho: Interval,
    pub beta: Interval,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            sigma: Interval::new(6.0, 16.0),
            rho: Interval::new(22.0, 42.0),
            beta: Interval::new(1.5, 4.0),
        }
    }
}

impl PriorSpec {
    pub fn intervals(&self) -> [Interval; 3] {
        [self.sigma, self.rho, self.beta]
    }

    pub fn interval(&self, kind: ParamKind) -> Interval {
        self.intervals()[kind.index()]
    }

    /// Lower bounds must not exceed upper bounds; degenerate (point) ranges are allowed.
    pub fn validate(&self) -> Result<()> {
        for (iv, kind) in self.intervals().iter().zip(ParamKind::ALL) {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi && iv.lo > 0.0) {
                return Err(Error::invalid(format!("bad prior range for {kind}: {iv:?}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &LorenzParams) -> bool {
        self.intervals().iter().zip(p.to_array()).all(|(iv, v)| iv.contains(v))
    }

    pub fn center(&self) -> [f64; 3] {
        self.intervals().map(|iv| iv.mid())
    }

    /// Half-widths, used to put parameters on a unit scale.
    pub fn half_width(&self) -> [f64; 3] {
        self.intervals().map(|iv| 0.5 * iv.width())
    }

    fn sample(&self, rng: &mut impl Rng) -> LorenzParams {
        LorenzParams {
            sigma: self.sigma.sample(rng),
            rho: self.rho.sample(rng),
            beta: self.beta.sample(rng),
        }
    }
}

/// One uniform draw per dimension.
pub fn sample_prior(prior: &PriorSpec, seed: u64) -> LorenzParams {
    prior.sample(&mut seed::rng(seed, stream::PRIOR, 0))
}

/// Low and high value ranges the varying parameter alternates between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeRanges {
    pub low: Interval,
    pub high: Interval,
}

impl RegimeRanges {
    pub fn default_for(kind: ParamKind) -> Self {
        match kind {
            ParamKind::Sigma => Self {
                low: Interval::new(7.0, 9.0),
                high: Interval::new(13.0, 15.0),
            },
            ParamKind::Rho => Self {
                low: Interval::new(24.0, 28.0),
                high: Interval::new(36.0, 40.0),
            },
            ParamKind::Beta => Self {
                low: Interval::new(1.8, 2.4),
                high: Interval::new(3.2, 3.8),
            },
        }
    }

    /// Uniform draw over the union of both ranges.
    fn sample_union(&self, rng: &mut impl Rng) -> f64 {
        let total = self.low.width() + self.high.width();
        let u = rng.random::<f64>() * total;
        if u < self.low.width() {
            self.low.lo + u
        } else {
            (self.high.lo + (u - self.low.width())).min(self.high.hi)
        }
    }
}

/// Per-kind regime ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeTable {
    pub sigma: RegimeRanges,
    pub rho: RegimeRanges,
    pub beta: RegimeRanges,
}

impl Default for RegimeTable {
    fn default() -> Self {
        Self {
            sigma: RegimeRanges::default_for(ParamKind::Sigma),
            rho: RegimeRanges::default_for(ParamKind::Rho),
            beta: RegimeRanges::default_for(ParamKind::Beta),
        }
    }
}

impl RegimeTable {
    pub fn get(&self, kind: ParamKind) -> RegimeRanges {
        match kind {
            ParamKind::Sigma => self.sigma,
            ParamKind::Rho => self.rho,
            ParamKind::Beta => self.beta,
        }
    }

    /// Every regime range must sit inside the training prior.
    pub fn check_within(&self, prior: &PriorSpec) -> Result<()> {
        for kind in ParamKind::ALL {
            let r = self.get(kind);
            let iv = prior.interval(kind);
            if !(iv.contains_interval(&r.low) && iv.contains_interval(&r.high)) {
                return Err(Error::invalid(format!(
                    "{kind} regime ranges {r:?} fall outside the prior {iv:?}"
                )));
            }
            if !iv.contains(LorenzParams::CLASSIC.get(kind)) {
                return Err(Error::invalid(format!(
                    "prior {iv:?} excludes the classic {kind} value"
                )));
            }
        }
        Ok(())
    }
}

/// A raw `4 x w` channel block, channel-major: `data[c * w + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWindow {
    pub data: Vec<f64>,
    pub w: usize,
}

impl RawWindow {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.w..(c + 1) * self.w]
    }
}

/// Copies the window ending at `end_index` (inclusive) and appends the y - x channel.
pub fn extract_window(traj: &Trajectory, end_index: usize, w: usize) -> Result<RawWindow> {
    let mut data = vec![0.0; CHANNELS * w];
    write_window(traj, end_index, w, &mut data)?;
    Ok(RawWindow { data, w })
}

pub(crate) fn write_window(traj: &Trajectory, end_index: usize, w: usize, out: &mut [f64]) -> Result<()> {
    if w == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if end_index >= traj.len() || end_index + 1 < w {
        return Err(Error::OutOfRange {
            index: end_index,
            len: traj.len(),
        });
    }
    debug_assert_eq!(out.len(), CHANNELS * w);
    let start = end_index + 1 - w;
    for (j, s) in traj.states[start..=end_index].iter().enumerate() {
        out[j] = s.x;
        out[w + j] = s.y;
        out[2 * w + j] = s.z;
        out[3 * w + j] = s.y - s.x;
    }
    Ok(())
}

/// Per-channel standardization statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// Population moments per channel over a stack of flat `4 x w` blocks.
    pub fn from_blocks<'a>(blocks: impl IntoIterator<Item = &'a [f64]>, w: usize) -> Result<Self> {
        let mut sum = [0.0; CHANNELS];
        let mut sumsq = [0.0; CHANNELS];
        let mut count = 0usize;
        let blocks: Vec<&[f64]> = blocks.into_iter().collect();
        for b in &blocks {
            for c in 0..CHANNELS {
                sum[c] += b[c * w..(c + 1) * w].iter().sum::<f64>();
            }
            count += w;
        }
        if count == 0 {
            return Err(Error::invalid("no windows to compute statistics from"));
        }
        let mean = sum.map(|s| s / count as f64);
        // Two-pass variance.
        for b in &blocks {
            for c in 0..CHANNELS {
                sumsq[c] += b[c * w..(c + 1) * w].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let stats = Self {
            mean,
            std: sumsq.map(|s| (s / count as f64).sqrt()),
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..CHANNELS {
            if !(self.std[c] > 0.0 && self.std[c].is_finite() && self.mean[c].is_finite()) {
                return Err(Error::ZeroStd { channel: c });
            }
        }
        Ok(())
    }

    pub(crate) fn apply_in_place(&self, block: &mut [f64], w: usize) {
        for c in 0..CHANNELS {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in &mut block[c * w..(c + 1) * w] {
                *v = (*v - m) / s;
            }
        }
    }
}

/// A standardized window, flattened channel-major, with the statistics used.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFeatures {
    pub values: Vec<f64>,
    pub w: usize,
    pub norm: NormStats,
}

pub fn featurize(raw: &RawWindow, stats: &NormStats) -> Result<WindowFeatures> {
    stats.validate()?;
    let mut values = raw.data.clone();
    stats.apply_in_place(&mut values, raw.w);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature after standardization"));
    }
    Ok(WindowFeatures {
        values,
        w: raw.w,
        norm: *stats,
    })
}

/// Settings for generating (parameter, window) training pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSetConfig {
    pub prior: PriorSpec,
    pub n: usize,
    pub w: usize,
    pub dt: f64,
    /// Total steps simulated per draw, burn-in included.
    pub sim_steps: usize,
    pub burn_in: usize,
    pub eta: f64,
}

impl Default for TrainingSetConfig {
    fn default() -> Self {
        Self {
            prior: PriorSpec::default(),
            n: 50_000,
            w: DEFAULT_WINDOW,
            dt: DEFAULT_DT,
            sim_steps: DEFAULT_BURN_IN + 500,
            burn_in: DEFAULT_BURN_IN,
            eta: 0.01,
        }
    }
}

/// Paired `(theta, features)` samples with frozen standardization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub thetas: Vec<LorenzParams>,
    /// `n x (4 w)` row-major standardized features.
    pub features: Vec<f64>,
    pub norm: NormStats,
    pub prior: PriorSpec,
    pub w: usize,
    /// Prior draws that diverged and were redrawn.
    pub rejected: usize,
}

const TSET_MAGIC: &[u8; 4] = b"PCTS";
const TSET_VERSION: u32 = 1;

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        CHANNELS * self.w
    }

    pub fn features_of(&self, i: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_header(TSET_MAGIC, TSET_VERSION);
        enc.usize(self.w);
        enc.usize(self.len());
        enc.usize(self.rejected);
        for iv in self.prior.intervals() {
            enc.f64(iv.lo);
            enc.f64(iv.hi);
        }
        enc.f64s(&self.norm.mean);
        enc.f64s(&self.norm.std);
        for (i, t) in self.thetas.iter().enumerate() {
            enc.f64s(&t.to_array());
            enc.f64s(self.features_of(i));
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::open(bytes, TSET_MAGIC, TSET_VERSION, "training set")?;
        let w = dec.usize()?;
        let n = dec.usize()?;
        let rejected = dec.usize()?;
        let b = dec.f64s(6)?;
        let prior = PriorSpec {
            sigma: Interval::new(b[0], b[1]),
            rho: Interval::new(b[2], b[3]),
            beta: Interval::new(b[4], b[5]),
        };
        let mean: [f64; CHANNELS] = dec.f64s(CHANNELS)?.try_into().unwrap();
        let std: [f64; CHANNELS] = dec.f64s(CHANNELS)?.try_into().unwrap();
        let d = CHANNELS * w;
        let mut thetas = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n * d);
        for _ in 0..n {
            let t = dec.f64s(3)?;
            thetas.push(LorenzParams::from_array([t[0], t[1], t[2]]));
            features.extend(dec.f64s(d)?);
        }
        dec.finish()?;
        Ok(Self {
            thetas,
            features,
            norm: NormStats { mean, std },
            prior,
            w,
            rejected,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn perturbed_initial(rng: &mut impl Rng) -> State {
    let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    State::new(1.0 + e[0], 1.0 + e[1], 1.0 + e[2])
}

/// Generates `cfg.n` training pairs. Each pair owns its random streams, so the
/// output does not depend on the number of worker threads.
pub fn build_training_set(cfg: &TrainingSetConfig, seed: u64) -> Result<TrainingSet> {
    cfg.prior.validate()?;
    if cfg.n == 0 {
        return Err(Error::invalid("training set size must be positive"));
    }
    if cfg.w < 2 {
        return Err(Error::invalid("window length must be at least 2"));
    }
    if cfg.sim_steps < cfg.w + cfg.burn_in {
        return Err(Error::invalid(format!(
            "sim_steps {} shorter than window {} plus burn-in {}",
            cfg.sim_steps, cfg.w, cfg.burn_in
        )));
    }
    let integ = Integrator::new(cfg.dt);
    let budget = cfg.n / 10;
    let kept = cfg.sim_steps - cfg.burn_in;
    let d = CHANNELS * cfg.w;

    let results: Vec<Result<(LorenzParams, Vec<f64>, usize)>> = par_map(cfg.n, |i| {
        let mut rng = seed::rng(seed, stream::PRIOR, i as u64);
        let mut rejected = 0;
        loop {
            let theta = cfg.prior.sample(&mut rng);
            let initial = perturbed_initial(&mut rng);
            let sim = integ
                .advance(initial, theta, cfg.burn_in)
                .and_then(|s| integ.integrate(s, theta, kept - 1));
            match sim {
                Ok(clean) => {
                    let noisy = add_noise(
                        &clean,
                        NoiseSpec {
                            eta: cfg.eta,
                            seed: seed::derive(seed, stream::NOISE, i as u64),
                        },
                    );
                    let end = rng.random_range(cfg.w - 1..noisy.len());
                    let mut block = vec![0.0; d];
                    write_window(&noisy, end, cfg.w, &mut block)?;
                    return Ok((theta, block, rejected));
                }
                Err(e) if e.is_numerical() => {
                    rejected += 1;
                    if rejected > budget {
                        return Err(Error::ResampleBudget {
                            rejected,
                            attempted: cfg.n,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    });

    let mut thetas = Vec::with_capacity(cfg.n);
    let mut features = Vec::with_capacity(cfg.n * d);
    let mut rejected = 0;
    for r in results {
        let (theta, block, rej) = r?;
        thetas.push(theta);
        features.extend_from_slice(&block);
        rejected += rej;
    }
    if rejected > budget {
        return Err(Error::ResampleBudget {
            rejected,
            attempted: cfg.n,
        });
    }
    let norm = NormStats::from_blocks(features.chunks_exact(d), cfg.w)?;
    for block in features.chunks_exact_mut(d) {
        norm.apply_in_place(block, cfg.w);
    }
    Ok(TrainingSet {
        thetas,
        features,
        norm,
        prior: cfg.prior,
        w: cfg.w,
        rejected,
    })
}

/// Shape and noise settings for evaluation corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Segments per changepoint sequence.
    pub segments: usize,
    /// Steps per segment.
    pub segment_len: usize,
    /// Post-burn-in length of stationary trajectories.
    pub stationary_len: usize,
    pub dt: f64,
    pub burn_in: usize,
    pub eta: f64,
    pub ranges: RegimeTable,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            segments: 12,
            segment_len: 800,
            stationary_len: 3000,
            dt: DEFAULT_DT,
            burn_in: DEFAULT_BURN_IN,
            eta: 0.01,
            ranges: RegimeTable::default(),
        }
    }
}

/// A simulated sequence with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub trajectory: Trajectory,
    pub ground_truth: Vec<usize>,
    /// Parameters of each segment, in order (one entry for stationary trajectories).
    pub segment_params: Vec<LorenzParams>,
    pub seed: u64,
}

fn simulate_labeled(
    cfg: &CorpusConfig,
    segments: Vec<Segment>,
    initial: State,
    seq_seed: u64,
) -> Result<LabeledSequence> {
    let schedule = SegmentSchedule {
        segments,
        burn_in: cfg.burn_in,
    };
    let noise = NoiseSpec {
        eta: cfg.eta,
        seed: seed::derive(seq_seed, stream::NOISE, 0),
    };
    let (trajectory, ground_truth) = simulate_schedule(&schedule, initial, cfg.dt, noise)?;
    Ok(LabeledSequence {
        trajectory,
        ground_truth,
        segment_params: schedule.segments.iter().map(|s| s.params).collect(),
        seed: seq_seed,
    })
}

/// Piecewise-constant sequences where `kind` alternates between its low and high
/// ranges (fresh draw per segment, starting low) and the others stay classic.
pub fn build_changepoint_corpus(
    kind: ParamKind,
    n_sequences: usize,
    seed: u64,
    cfg: &CorpusConfig,
) -> Result<Vec<LabeledSequence>> {
    if cfg.segments == 0 || cfg.segment_len == 0 {
        return Err(Error::invalid("corpus needs at least one non-empty segment"));
    }
    let ranges = cfg.ranges.get(kind);
    par_map(n_sequences, |j| {
        let seq_seed = seed::derive(seed, stream::CORPUS, (kind.index() as u64) << 32 | j as u64);
        let mut rng = seed::rng(seq_seed, stream::SEGMENT, 0);
        let segments = (0..cfg.segments)
            .map(|k| {
                let iv = if k % 2 == 0 { ranges.low } else { ranges.high };
                Segment {
                    params: LorenzParams::CLASSIC.with(kind, iv.sample(&mut rng)),
                    length: cfg.segment_len,
                }
            })
            .collect();
        let initial = perturbed_initial(&mut rng);
        simulate_labeled(cfg, segments, initial, seq_seed)
    })
    .into_iter()
    .collect()
}

/// Stationary trajectories whose varying parameter is uniform over the union of
/// its regime ranges.
pub fn build_stationary_corpus(
    kind: ParamKind,
    n_trajectories: usize,
    seed: u64,
    cfg: &CorpusConfig,
) -> Result<Vec<LabeledSequence>> {
    if cfg.stationary_len == 0 {
        return Err(Error::invalid("stationary length must be positive"));
    }
    let ranges = cfg.ranges.get(kind);
    par_map(n_trajectories, |j| {
        let seq_seed = seed::derive(seed, stream::CORPUS, 1 << 48 | (kind.index() as u64) << 32 | j as u64);
        let mut rng = seed::rng(seq_seed, stream::SEGMENT, 0);
        let params = LorenzParams::CLASSIC.with(kind, ranges.sample_union(&mut rng));
        let initial = perturbed_initial(&mut rng);
        simulate_labeled(
            cfg,
            vec![Segment {
                params,
                length: cfg.stationary_len,
            }],
            initial,
            seq_seed,
        )
    })
    .into_iter()
    .collect()
}

/// JSON manifest describing a corpus directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub kind: ParamKind,
    pub stationary: bool,
    pub master_seed: u64,
    pub dt: f64,
    pub eta: f64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub length: usize,
    pub ground_truth: Vec<usize>,
    pub segment_lengths: Vec<usize>,
    pub segment_params: Vec<LorenzParams>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `seq_XXX.bin` trajectory records plus `manifest.json` into `dir`.
pub fn write_corpus(
    dir: &Path,
    kind: ParamKind,
    stationary: bool,
    master_seed: u64,
    cfg: &CorpusConfig,
    corpus: &[LabeledSequence],
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for (j, seq) in corpus.iter().enumerate() {
        let file = format!("seq_{j:03}.bin");
        seq.trajectory.save(&dir.join(&file), seq.seed)?;
        let mut bounds = seq.ground_truth.clone();
        bounds.insert(0, 0);
        bounds.push(seq.trajectory.len());
        entries.push(ManifestEntry {
            file,
            seed: seq.seed,
            length: seq.trajectory.len(),
            ground_truth: seq.ground_truth.clone(),
            segment_lengths: bounds.windows(2).map(|b| b[1] - b[0]).collect(),
            segment_params: seq.segment_params.clone(),
        });
    }
    let manifest = CorpusManifest {
        kind,
        stationary,
        master_seed,
        dt: cfg.dt,
        eta: cfg.eta,
        entries,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<LabeledSequence>)> {
    let manifest: CorpusManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path: PathBuf = dir.join(&e.file);
        let (trajectory, seed) = Trajectory::load(&path)?;
        if trajectory.len() != e.length || seed != e.seed {
            return Err(Error::Format(format!("{} disagrees with the manifest", path.display())));
        }
        out.push(LabeledSequence {
            trajectory,
            ground_truth: e.ground_truth.clone(),
            segment_params: e.segment_params.clone(),
            seed,
        });
    }
    Ok((manifest, out))
}
