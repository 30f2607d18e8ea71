// SPDX-License-Identifier: MIT OR Apache-2.0

//! Parameter-space changepoint detection for chaotic dynamics.
//!
//! The pipeline has two stages. Offline, a mixture-density network is trained on
//! simulated Lorenz-63 windows to approximate the posterior over `(sigma, rho, beta)`.
//! At detection time the network is slid over an observed series, posterior
//! samples are aggregated into a parameter trajectory, and kernel PELT segments
//! that trajectory. The same detector run directly on the observed `x(t)` serves
//! as the observation-space baseline.

#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod codec;
pub mod cpd;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod npe;
pub mod pipeline;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
pub use simulator::{LorenzParams, ParamKind, State, Trajectory};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on. Output
/// order always matches the index order.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
