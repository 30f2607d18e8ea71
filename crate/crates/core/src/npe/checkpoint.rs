// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned binary checkpoint: config, normalization, prior, weights, training metadata.

use std::path::Path;

use super::{Activation, MdnConfig, PosteriorModel, TrainingMeta};
use crate::codec::{Decoder, Encoder};
use crate::dataset::{Interval, NormStats, PriorSpec, CHANNELS};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCNP";
pub const CHECKPOINT_VERSION: u32 = 1;

impl PosteriorModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        let c = &self.config;
        enc.usize(c.hidden_sizes.len());
        for &h in &c.hidden_sizes {
            enc.usize(h);
        }
        enc.usize(c.n_components);
        enc.usize(c.input_dim);
        enc.usize(c.theta_dim);
        enc.u32(c.activation.code());
        enc.usize(self.w);
        enc.f64s(&self.norm.mean);
        enc.f64s(&self.norm.std);
        for iv in self.prior.intervals() {
            enc.f64(iv.lo);
            enc.f64(iv.hi);
        }
        enc.usize(self.weights.len());
        enc.f64s(&self.weights);
        enc.usize(self.meta.epochs);
        enc.usize(self.meta.best_epoch);
        enc.f64(self.meta.final_nll);
        enc.u64(self.meta.seed);
        enc.finish()
    }

    /// Decodes a checkpoint, rejecting version and dimension mismatches.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
        let n_hidden = dec.usize()?;
        if n_hidden > 64 {
            return Err(Error::Format(format!("implausible hidden layer count {n_hidden}")));
        }
        let hidden_sizes = (0..n_hidden).map(|_| dec.usize()).collect::<Result<Vec<_>>>()?;
        let config = MdnConfig {
            hidden_sizes,
            n_components: dec.usize()?,
            input_dim: dec.usize()?,
            theta_dim: dec.usize()?,
            activation: Activation::from_code(dec.u32()?)?,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let w = dec.usize()?;
        if config.input_dim != CHANNELS * w {
            return Err(Error::DimensionMismatch {
                expected: CHANNELS * w,
                got: config.input_dim,
            });
        }
        let norm = NormStats {
            mean: dec.f64s(CHANNELS)?.try_into().unwrap(),
            std: dec.f64s(CHANNELS)?.try_into().unwrap(),
        };
        let b = dec.f64s(6)?;
        let prior = PriorSpec {
            sigma: Interval::new(b[0], b[1]),
            rho: Interval::new(b[2], b[3]),
            beta: Interval::new(b[4], b[5]),
        };
        let n_weights = dec.usize()?;
        if n_weights != config.n_weights() {
            return Err(Error::DimensionMismatch {
                expected: config.n_weights(),
                got: n_weights,
            });
        }
        let weights = dec.f64s(n_weights)?;
        let meta = TrainingMeta {
            epochs: dec.usize()?,
            best_epoch: dec.usize()?,
            final_nll: dec.f64()?,
            seed: dec.u64()?,
        };
        dec.finish()?;
        Ok(Self {
            config,
            weights,
            norm,
            prior,
            w,
            meta,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Encoder;

    fn model() -> PosteriorModel {
        let cfg = MdnConfig {
            hidden_sizes: vec![6, 4],
            n_components: 3,
            input_dim: 12,
            theta_dim: 3,
            activation: Activation::Silu,
        };
        let mut m = PosteriorModel::init(cfg, NormStats::identity(), PriorSpec::default(), 3, 17).unwrap();
        m.meta.final_nll = -1.25;
        m
    }

    #[test]
    fn roundtrip_gives_identical_outputs() {
        let m = model();
        let back = PosteriorModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(m.forward_batch(&x).unwrap(), back.forward_batch(&x).unwrap());
    }

    #[test]
    fn rejects_version_and_dimension_mismatch() {
        let m = model();
        let mut bytes = m.to_bytes();
        bytes[4] = 9;
        assert!(matches!(PosteriorModel::from_bytes(&bytes), Err(Error::Format(_))));

        // Re-encode with a window length that disagrees with input_dim.
        let mut enc = Encoder::with_header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        enc.usize(0);
        enc.usize(1);
        enc.usize(12);
        enc.usize(3);
        enc.u32(0);
        enc.usize(4);
        assert!(matches!(
            PosteriorModel::from_bytes(&enc.finish()),
            Err(Error::DimensionMismatch { .. })
        ));

        let mut truncated = m.to_bytes();
        truncated.truncate(truncated.len() - 3);
        assert!(PosteriorModel::from_bytes(&truncated).is_err());
    }
}
