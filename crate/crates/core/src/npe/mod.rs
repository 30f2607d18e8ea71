// SPDX-License-Identifier: MIT OR Apache-2.0

//! Neural posterior estimator: an MLP encoder over flattened window features
//! feeding a diagonal-Gaussian mixture-density head.
//!
//! Parameters live in one flat vector. Each layer stores a `fan_in x fan_out`
//! row-major weight block followed by its bias. The head emits, per component,
//! a mixture logit, a mean and a log-std for each parameter dimension; means and
//! stds are expressed on the prior's unit scale (centre and half-width) and mapped
//! back to parameter units on output.

mod checkpoint;
mod train;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, train_with_progress, EpochRecord, TrainConfig, TrainOutcome};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{NormStats, PriorSpec, WindowFeatures, CHANNELS};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::simulator::LorenzParams;

/// Lower bound on every component standard deviation, in parameter units.
pub const STD_FLOOR: f64 = 1e-4;

pub const THETA_DIM: usize = 3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// `x * sigmoid(x)`.
    Silu,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Silu => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Silu),
            c => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

/// Network shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdnConfig {
    pub hidden_sizes: Vec<usize>,
    pub n_components: usize,
    pub input_dim: usize,
    pub theta_dim: usize,
    pub activation: Activation,
}

impl MdnConfig {
    /// Default architecture for windows of length `w`.
    pub fn for_window(w: usize) -> Self {
        Self {
            hidden_sizes: vec![256, 256],
            n_components: 5,
            input_dim: CHANNELS * w,
            theta_dim: THETA_DIM,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if self.theta_dim != THETA_DIM {
            return Err(Error::invalid(format!("theta_dim must be {THETA_DIM}")));
        }
        if self.input_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.n_components * (1 + 2 * self.theta_dim)
    }

    fn layers(&self) -> Vec<Layer> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_sizes);
        dims.push(self.output_dim());
        let mut off = 0;
        dims.windows(2)
            .map(|d| {
                let l = Layer {
                    fan_in: d[0],
                    fan_out: d[1],
                    w: off,
                    b: off + d[0] * d[1],
                };
                off = l.b + d[1];
                l
            })
            .collect()
    }

    pub fn n_weights(&self) -> usize {
        self.layers().last().map_or(0, |l| l.b + l.fan_out)
    }
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn weight<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.fan_in, self.fan_out), &p[self.w..self.b]).unwrap()
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.fan_out]
    }
}

/// Metadata recorded by training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_nll: f64,
    pub seed: u64,
}

/// A trained (or freshly initialised) conditional density `q(theta | features)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorModel {
    pub config: MdnConfig,
    pub weights: Vec<f64>,
    pub norm: NormStats,
    pub prior: PriorSpec,
    pub w: usize,
    pub meta: TrainingMeta,
}

/// Diagonal Gaussian mixture over `(sigma, rho, beta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDensity {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; THETA_DIM]>,
    pub stds: Vec<[f64; THETA_DIM]>,
}

impl MixtureDensity {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn log_prob(&self, theta: &LorenzParams) -> f64 {
        let t = theta.to_array();
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + diag_log_normal(&t, &self.means[k], &self.stds[k]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn mean(&self) -> [f64; THETA_DIM] {
        let mut m = [0.0; THETA_DIM];
        for (wk, mk) in self.weights.iter().zip(&self.means) {
            for d in 0..THETA_DIM {
                m[d] += wk * mk[d];
            }
        }
        m
    }

    /// Ancestral sampling: pick a component by weight, then draw from its Gaussian.
    pub fn sample(&self, rng: &mut impl Rng) -> LorenzParams {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (j, wj) in self.weights.iter().enumerate() {
            acc += wj;
            if u < acc {
                k = j;
                break;
            }
        }
        LorenzParams::from_array(std::array::from_fn(|d| {
            let e: f64 = StandardNormal.sample(rng);
            self.means[k][d] + self.stds[k][d] * e
        }))
    }
}

fn diag_log_normal(t: &[f64; THETA_DIM], mean: &[f64; THETA_DIM], std: &[f64; THETA_DIM]) -> f64 {
    (0..THETA_DIM)
        .map(|d| {
            let z = (t[d] - mean[d]) / std[d];
            -0.5 * z * z - std[d].ln() - HALF_LN_2PI
        })
        .sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A mini-batch of `(theta, features)` pairs; `features` is `len x input_dim` row-major.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub thetas: &'a [LorenzParams],
    pub features: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn new(thetas: &'a [LorenzParams], features: &'a [f64]) -> Self {
        Self { thetas, features }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Head parameters decoded for one row, in parameter units.
struct HeadRow {
    log_weights: Vec<f64>,
    means: Vec<[f64; THETA_DIM]>,
    stds: Vec<[f64; THETA_DIM]>,
    /// Whether each std sits at the floor (zero gradient through the log-std).
    floored: Vec<[bool; THETA_DIM]>,
}

impl PosteriorModel {
    /// Fresh model with Glorot-uniform hidden layers, a down-scaled output layer and zero biases.
    pub fn init(config: MdnConfig, norm: NormStats, prior: PriorSpec, w: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.input_dim != CHANNELS * w {
            return Err(Error::DimensionMismatch {
                expected: CHANNELS * w,
                got: config.input_dim,
            });
        }
        let layers = config.layers();
        let mut weights = vec![0.0; config.n_weights()];
        let mut rng = seed::rng(seed, stream::INIT_WEIGHTS, 0);
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let mut limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            if i == last {
                limit *= 0.1;
            }
            for v in &mut weights[l.w..l.b] {
                *v = limit * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(Self {
            config,
            weights,
            norm,
            prior,
            w,
            meta: TrainingMeta {
                seed,
                ..TrainingMeta::default()
            },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn check_features(&self, features: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if !features.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: features.len(),
            });
        }
        Ok(features.len() / d)
    }

    /// Runs the MLP, returning every post-activation matrix; the last one is the raw head output.
    fn activations(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let layers = self.config.layers();
        let mut pre = Vec::with_capacity(layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let input = if i == 0 { x.view() } else { post[i - 1].view() };
            let mut z = Array2::<f64>::zeros((input.nrows(), l.fan_out));
            let bias = l.bias(&self.weights);
            for mut row in z.rows_mut() {
                row.as_slice_mut().unwrap().copy_from_slice(bias);
            }
            general_mat_mul(1.0, &input, &l.weight(&self.weights), 1.0, &mut z);
            if i == last {
                post.push(z);
                pre.push(Array2::zeros((0, 0)));
            } else {
                let act = self.config.activation;
                let a = z.mapv(|v| act.apply(v));
                pre.push(z);
                post.push(a);
            }
        }
        (pre, post)
    }

    fn decode_head(&self, out: &[f64]) -> HeadRow {
        let k_mix = self.config.n_components;
        let dim = self.config.theta_dim;
        let c = self.prior.center();
        let h = self.prior.half_width();
        let logits = &out[..k_mix];
        let lse = log_sum_exp(logits);
        let mut means = Vec::with_capacity(k_mix);
        let mut stds = Vec::with_capacity(k_mix);
        let mut floored = Vec::with_capacity(k_mix);
        for k in 0..k_mix {
            let m_raw = &out[k_mix + k * dim..k_mix + (k + 1) * dim];
            let s_raw = &out[k_mix * (1 + dim) + k * dim..k_mix * (1 + dim) + (k + 1) * dim];
            means.push(std::array::from_fn(|d| c[d] + h[d] * m_raw[d]));
            let raw: [f64; THETA_DIM] = std::array::from_fn(|d| h[d] * s_raw[d].exp());
            floored.push(raw.map(|v| !(v > STD_FLOOR)));
            stds.push(raw.map(|v| if v > STD_FLOOR { v } else { STD_FLOOR }));
        }
        HeadRow {
            log_weights: logits.iter().map(|l| l - lse).collect(),
            means,
            stds,
            floored,
        }
    }

    fn to_density(row: HeadRow) -> MixtureDensity {
        MixtureDensity {
            weights: row.log_weights.iter().map(|l| l.exp()).collect(),
            means: row.means,
            stds: row.stds,
        }
    }

    /// Mixture density for a single standardized window.
    pub fn forward(&self, features: &WindowFeatures) -> Result<MixtureDensity> {
        if features.values.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: features.values.len(),
            });
        }
        Ok(self.forward_batch(&features.values)?.pop().unwrap())
    }

    /// Mixture densities for a row-major stack of standardized windows.
    pub fn forward_batch(&self, features: &[f64]) -> Result<Vec<MixtureDensity>> {
        let n = self.check_features(features)?;
        let x = ArrayView2::from_shape((n, self.input_dim()), features).unwrap();
        let (_, post) = self.activations(x);
        let out = post.last().unwrap();
        Ok(out
            .rows()
            .into_iter()
            .map(|r| Self::to_density(self.decode_head(r.as_slice().unwrap())))
            .collect())
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let n = self.check_features(batch.features)?;
        if n != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len() * self.input_dim(),
                got: batch.features.len(),
            });
        }
        Ok(())
    }

    /// Mean negative log-density of the true parameters.
    pub fn nll_loss(&self, batch: &Batch<'_>) -> Result<f64> {
        self.check_batch(batch)?;
        let x = ArrayView2::from_shape((batch.len(), self.input_dim()), batch.features).unwrap();
        let (_, post) = self.activations(x);
        let out = post.last().unwrap();
        let total: f64 = out
            .rows()
            .into_iter()
            .zip(batch.thetas)
            .map(|(r, t)| -self.row_log_prob(r.as_slice().unwrap(), t).0)
            .sum();
        let loss = total / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { batch: 0, loss });
        }
        Ok(loss)
    }

    /// Log-density of one row plus per-component log terms (log weight + log normal).
    fn row_log_prob(&self, out: &[f64], theta: &LorenzParams) -> (f64, HeadRow, Vec<f64>) {
        let head = self.decode_head(out);
        let t = theta.to_array();
        let terms: Vec<f64> = (0..self.config.n_components)
            .map(|k| head.log_weights[k] + diag_log_normal(&t, &head.means[k], &head.stds[k]))
            .collect();
        (log_sum_exp(&terms), head, terms)
    }

    /// Loss and its exact gradient with respect to the flat weight vector.
    pub fn grad_nll(&self, batch: &Batch<'_>) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.weights.len()];
        let loss = self.grad_nll_into(batch, &mut grad)?;
        Ok((loss, grad))
    }

    /// Like [`grad_nll`](Self::grad_nll) but writes into a caller-owned buffer.
    pub fn grad_nll_into(&self, batch: &Batch<'_>, grad: &mut [f64]) -> Result<f64> {
        self.check_batch(batch)?;
        if grad.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: grad.len(),
            });
        }
        let b = batch.len();
        let x = ArrayView2::from_shape((b, self.input_dim()), batch.features).unwrap();
        let (pre, post) = self.activations(x);
        let out = post.last().unwrap();

        let k_mix = self.config.n_components;
        let dim = self.config.theta_dim;
        let h = self.prior.half_width();
        let inv_b = 1.0 / b as f64;
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        let mut total = 0.0;
        for ((r, t), mut g) in out.rows().into_iter().zip(batch.thetas).zip(delta.rows_mut()) {
            let (lp, head, terms) = self.row_log_prob(r.as_slice().unwrap(), t);
            total -= lp;
            let t = t.to_array();
            let g = g.as_slice_mut().unwrap();
            for k in 0..k_mix {
                let resp = (terms[k] - lp).exp();
                let pi = head.log_weights[k].exp();
                g[k] = (pi - resp) * inv_b;
                for d in 0..dim {
                    let s = head.stds[k][d];
                    let diff = t[d] - head.means[k][d];
                    g[k_mix + k * dim + d] = -resp * h[d] * diff / (s * s) * inv_b;
                    if !head.floored[k][d] {
                        g[k_mix * (1 + dim) + k * dim + d] = -resp * (diff * diff / (s * s) - 1.0) * inv_b;
                    }
                }
            }
        }
        let loss = total * inv_b;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { batch: 0, loss });
        }

        let layers = self.config.layers();
        let act = self.config.activation;
        for i in (0..layers.len()).rev() {
            let l = layers[i];
            let input = if i == 0 { x.view() } else { post[i - 1].view() };
            {
                let (gw, gb) = grad[l.w..l.b + l.fan_out].split_at_mut(l.b - l.w);
                let mut gw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), gw).unwrap();
                general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut gw);
                for (dst, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *dst = s;
                }
            }
            if i > 0 {
                let mut next = delta.dot(&l.weight(&self.weights).t());
                let (z, a) = (&pre[i - 1], &post[i - 1]);
                ndarray::Zip::from(&mut next)
                    .and(z)
                    .and(a)
                    .for_each(|g, &z, &a| *g *= act.derivative(z, a));
                delta = next;
            }
        }
        Ok(loss)
    }

    /// `log q(theta | features)`; equals minus the loss on the singleton batch.
    pub fn log_prob(&self, features: &WindowFeatures, theta: &LorenzParams) -> Result<f64> {
        Ok(-self.nll_loss(&Batch::new(std::slice::from_ref(theta), &features.values))?)
    }

    /// `m` ancestral draws from the posterior for one window.
    pub fn sample_posterior(&self, features: &WindowFeatures, m: usize, seed: u64) -> Result<Vec<LorenzParams>> {
        if m == 0 {
            return Err(Error::invalid("number of posterior samples must be positive"));
        }
        let density = self.forward(features)?;
        let mut rng = seed::rng(seed, stream::POSTERIOR, 0);
        Ok((0..m).map(|_| density.sample(&mut rng)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_model(k_mix: usize, seed: u64) -> PosteriorModel {
        let config = MdnConfig {
            hidden_sizes: vec![7, 5],
            n_components: k_mix,
            input_dim: 8,
            theta_dim: 3,
            activation: Activation::Tanh,
        };
        let mut m = PosteriorModel::init(config, NormStats::identity(), PriorSpec::default(), 2, seed).unwrap();
        // Larger output weights so components differ visibly.
        let mut rng = seed::rng(seed, 99, 0);
        for v in &mut m.weights {
            *v += 0.3 * (2.0 * rng.random::<f64>() - 1.0);
        }
        m
    }

    fn window(values: Vec<f64>) -> WindowFeatures {
        WindowFeatures {
            w: values.len() / CHANNELS,
            values,
            norm: NormStats::identity(),
        }
    }

    #[test]
    fn layout_and_sizes() {
        let cfg = MdnConfig::for_window(100);
        assert_eq!(cfg.input_dim, 400);
        assert_eq!(cfg.output_dim(), 35);
        assert_eq!(cfg.n_weights(), 400 * 256 + 256 + 256 * 256 + 256 + 256 * 35 + 35);
        let bad = MdnConfig {
            n_components: 0,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        assert!(PosteriorModel::init(cfg, NormStats::identity(), PriorSpec::default(), 50, 0).is_err());
    }

    #[test]
    fn zero_network_is_uniform_prior_centred() {
        let mut m = tiny_model(4, 1);
        m.weights.iter_mut().for_each(|v| *v = 0.0);
        let d = m.forward(&window(vec![0.3; 8])).unwrap();
        let c = m.prior.center();
        let h = m.prior.half_width();
        for k in 0..4 {
            assert_eq!(d.weights[k], 0.25);
            assert_eq!(d.means[k], c);
            assert_eq!(d.stds[k], h);
        }
    }

    #[test]
    fn weights_form_simplex() {
        let m = tiny_model(5, 2);
        let mut rng = seed::rng(3, 0, 0);
        for _ in 0..50 {
            let f: Vec<f64> = (0..8).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
            let d = m.forward(&window(f)).unwrap();
            assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.weights.iter().all(|&w| w > 0.0));
            assert!(d.stds.iter().flatten().all(|&s| s >= STD_FLOOR));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = tiny_model(2, 0);
        assert!(matches!(
            m.forward(&window(vec![0.0; 12])),
            Err(Error::DimensionMismatch { .. })
        ));
        let t = [LorenzParams::CLASSIC];
        assert!(m.nll_loss(&Batch::new(&t, &[0.0; 16])).is_err());
        assert!(m.nll_loss(&Batch::new(&[], &[])).is_err());
    }

    /// Forces a single component with mean `theta` and stds `s` by editing the output bias.
    fn pinned_model(theta: [f64; 3], s: [f64; 3]) -> PosteriorModel {
        let mut m = tiny_model(1, 4);
        let layers = m.config.layers();
        let out = *layers.last().unwrap();
        m.weights[out.w..out.b].iter_mut().for_each(|v| *v = 0.0);
        let c = m.prior.center();
        let h = m.prior.half_width();
        let bias = &mut m.weights[out.b..out.b + 7];
        bias[0] = 0.0;
        for d in 0..3 {
            bias[1 + d] = (theta[d] - c[d]) / h[d];
            bias[4 + d] = (s[d] / h[d]).ln();
        }
        m
    }

    #[test]
    fn gaussian_at_its_mean() {
        let theta = [9.0, 30.0, 2.0];
        let s = [0.5, 1.5, 0.1];
        let m = pinned_model(theta, s);
        let t = [LorenzParams::from_array(theta)];
        let nll = m.nll_loss(&Batch::new(&t, &[0.2; 8])).unwrap();
        let expected: f64 = s.iter().map(|sd| (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum();
        assert!((nll - expected).abs() < 1e-12, "{nll} vs {expected}");

        // Mean-parameter gradients vanish at the mean.
        let (_, g) = m.grad_nll(&Batch::new(&t, &[0.2; 8])).unwrap();
        let out = *m.config.layers().last().unwrap();
        for d in 0..3 {
            assert!(g[out.b + 1 + d].abs() < 1e-14);
            for j in 0..5 {
                assert!(g[out.w + j * 7 + 1 + d].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn duplicate_components_collapse() {
        let one = MixtureDensity {
            weights: vec![1.0],
            means: vec![[10.0, 28.0, 2.5]],
            stds: vec![[0.3, 0.7, 0.05]],
        };
        let two = MixtureDensity {
            weights: vec![0.3, 0.7],
            means: vec![one.means[0]; 2],
            stds: vec![one.stds[0]; 2],
        };
        let t = LorenzParams::new(10.2, 27.5, 2.52).unwrap();
        assert!((one.log_prob(&t) - two.log_prob(&t)).abs() < 1e-12);
    }

    #[test]
    fn log_prob_is_negative_singleton_loss() {
        let m = tiny_model(3, 8);
        let f = window(vec![0.1, -0.4, 0.9, 0.0, 1.2, -1.0, 0.3, 0.5]);
        let t = LorenzParams::new(11.0, 30.0, 2.0).unwrap();
        let lp = m.log_prob(&f, &t).unwrap();
        let nll = m.nll_loss(&Batch::new(std::slice::from_ref(&t), &f.values)).unwrap();
        assert!((lp + nll).abs() < 1e-12);
        assert!((lp - m.forward(&f).unwrap().log_prob(&t)).abs() < 1e-12);
    }

    #[test]
    fn density_peaks_at_mean() {
        let m = pinned_model([9.0, 30.0, 2.0], [0.5, 1.5, 0.1]);
        let f = window(vec![0.0; 8]);
        let at = m.log_prob(&f, &LorenzParams::from_array([9.0, 30.0, 2.0])).unwrap();
        let away = m.log_prob(&f, &LorenzParams::from_array([10.5, 34.5, 2.3])).unwrap();
        assert!(at >= away);
    }

    #[test]
    fn doubled_batch_has_same_gradient() {
        let m = tiny_model(3, 5);
        let mut rng = seed::rng(6, 0, 0);
        let thetas: Vec<LorenzParams> = (0..3)
            .map(|_| PriorSpec::default().sample_for_tests(&mut rng))
            .collect();
        let feats: Vec<f64> = (0..24).map(|_| rng.random::<f64>() - 0.5).collect();
        let (l1, g1) = m.grad_nll(&Batch::new(&thetas, &feats)).unwrap();
        let t2: Vec<LorenzParams> = thetas.iter().chain(&thetas).copied().collect();
        let f2: Vec<f64> = feats.iter().chain(&feats).copied().collect();
        let (l2, g2) = m.grad_nll(&Batch::new(&t2, &f2)).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_at_floor_clusters_on_mean() {
        let m = pinned_model([9.0, 30.0, 2.0], [1e-9, 1e-9, 1e-9]);
        let f = window(vec![0.0; 8]);
        let d = m.forward(&f).unwrap();
        assert_eq!(d.stds[0], [STD_FLOOR; 3]);
        for s in m.sample_posterior(&f, 500, 3).unwrap() {
            for (v, mu) in s.to_array().iter().zip([9.0, 30.0, 2.0]) {
                assert!((v - mu).abs() < 5.0 * STD_FLOOR);
            }
        }
        assert!(m.sample_posterior(&f, 0, 3).is_err());
    }

    #[test]
    fn component_frequencies_match_weights() {
        let d = MixtureDensity {
            weights: vec![0.2, 0.5, 0.3],
            means: vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [200.0, 0.0, 0.0]],
            stds: vec![[1.0; 3]; 3],
        };
        let mut rng = seed::rng(1, stream::POSTERIOR, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = d.sample(&mut rng);
            counts[((s.sigma + 50.0) / 100.0).floor() as usize] += 1;
        }
        for (c, w) in counts.iter().zip(d.weights.iter()) {
            assert!((*c as f64 / n as f64 - w).abs() < 0.01);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_finite_differences() {
        for case in 0..100u64 {
            let mut m = tiny_model(1 + case as usize % 3, 100 + case);
            m.config.activation = if case % 2 == 0 {
                Activation::Tanh
            } else {
                Activation::Silu
            };
            let mut rng = seed::rng(case, 0, 0);
            let thetas: Vec<LorenzParams> = (0..4)
                .map(|_| PriorSpec::default().sample_for_tests(&mut rng))
                .collect();
            let feats: Vec<f64> = (0..32).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let batch = Batch::new(&thetas, &feats);
            let (_, g) = m.grad_nll(&batch).unwrap();
            let h = 1e-5;
            for i in 0..m.weights.len() {
                let w0 = m.weights[i];
                m.weights[i] = w0 + h;
                let lp = m.nll_loss(&batch).unwrap();
                m.weights[i] = w0 - h;
                let lm = m.nll_loss(&batch).unwrap();
                m.weights[i] = w0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "case {case} weight {i}: fd {fd} analytic {}", g[i]);
            }
        }
    }

    /// Plain-loop forward pass and direct mixture density, no log-sum-exp.
    fn direct_nll(m: &PosteriorModel, thetas: &[LorenzParams], feats: &[f64]) -> f64 {
        let layers = m.config.layers();
        let k_mix = m.config.n_components;
        let (c, h) = (m.prior.center(), m.prior.half_width());
        let mut total = 0.0;
        for (b, t) in thetas.iter().enumerate() {
            let mut a: Vec<f64> = feats[b * 8..(b + 1) * 8].to_vec();
            for (li, l) in layers.iter().enumerate() {
                let mut z: Vec<f64> = m.weights[l.b..l.b + l.fan_out].to_vec();
                for (i, ai) in a.iter().enumerate() {
                    for (j, zj) in z.iter_mut().enumerate() {
                        *zj += ai * m.weights[l.w + i * l.fan_out + j];
                    }
                }
                a = if li + 1 == layers.len() {
                    z
                } else {
                    z.iter().map(|v| v.tanh()).collect()
                };
            }
            let norm: f64 = a[..k_mix].iter().map(|l| l.exp()).sum();
            let t = t.to_array();
            let mut dens = 0.0;
            for k in 0..k_mix {
                let mut p = a[k].exp() / norm;
                for d in 0..3 {
                    let mu = c[d] + h[d] * a[k_mix + 3 * k + d];
                    let sd = (h[d] * a[4 * k_mix + 3 * k + d].exp()).max(STD_FLOOR);
                    p *= (-0.5 * ((t[d] - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                }
                dens += p;
            }
            total -= dens.ln();
        }
        total / thetas.len() as f64
    }

    #[test]
    fn loss_matches_direct_density() {
        for case in 0..20u64 {
            let m = tiny_model(1 + case as usize % 4, 300 + case);
            let mut rng = seed::rng(case, 1, 0);
            let thetas: Vec<LorenzParams> = (0..4)
                .map(|_| PriorSpec::default().sample_for_tests(&mut rng))
                .collect();
            let feats: Vec<f64> = (0..32).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let loss = m.nll_loss(&Batch::new(&thetas, &feats)).unwrap();
            let oracle = direct_nll(&m, &thetas, &feats);
            assert!((loss - oracle).abs() < 1e-10, "case {case}: {loss} vs {oracle}");
        }
    }

    /// Midpoint-rule mass of `log_density` over the default prior box.
    fn grid_mass(log_density: impl Fn(&LorenzParams) -> f64, n: usize) -> f64 {
        let ivs = PriorSpec::default().intervals();
        let step = ivs.map(|iv| iv.width() / n as f64);
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = LorenzParams::from_array([
                        ivs[0].lo + (i as f64 + 0.5) * step[0],
                        ivs[1].lo + (j as f64 + 0.5) * step[1],
                        ivs[2].lo + (k as f64 + 0.5) * step[2],
                    ]);
                    mass += log_density(&t).exp();
                }
            }
        }
        mass * step.iter().product::<f64>()
    }

    #[test]
    fn grid_quadrature_recovers_mass_in_box() {
        let m = pinned_model([9.0, 30.0, 2.5], [0.4, 1.2, 0.08]);
        let f = window(vec![0.0; 8]);
        let mass = grid_mass(|t| m.log_prob(&f, t).unwrap(), 120);
        assert!((mass - 1.0).abs() < 0.02, "{mass}");

        // Second component centred on the upper sigma edge keeps half its mass inside.
        let d = MixtureDensity {
            weights: vec![0.6, 0.4],
            means: vec![[11.0, 32.0, 2.8], [16.0, 30.0, 2.0]],
            stds: vec![[0.5, 1.0, 0.1], [0.4, 1.5, 0.12]],
        };
        let mass = grid_mass(|t| d.log_prob(t), 120);
        assert!((mass - 0.8).abs() < 0.02, "{mass}");
    }

    impl PriorSpec {
        pub(crate) fn sample_for_tests(&self, rng: &mut impl Rng) -> LorenzParams {
            LorenzParams::from_array(self.intervals().map(|iv| iv.lo + iv.width() * rng.random::<f64>()))
        }
    }
}
