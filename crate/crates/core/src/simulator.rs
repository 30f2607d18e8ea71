// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lorenz-63 simulation: fixed-step RK4 integration under constant or
//! piecewise-constant parameters, plus additive Gaussian observation noise.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::seed;

/// Magnitude above which a state component counts as a blow-up.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

/// Integration timestep used throughout the experiments.
pub const DEFAULT_DT: f64 = 0.01;

/// Steps discarded at the start of every simulation so trajectories begin on the attractor.
pub const DEFAULT_BURN_IN: usize = 1000;

/// Governing parameters `(sigma, rho, beta)` of the Lorenz-63 system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl LorenzParams {
    pub const CLASSIC: Self = Self {
        sigma: 10.0,
        rho: 28.0,
        beta: 8.0 / 3.0,
    };

    pub fn new(sigma: f64, rho: f64, beta: f64) -> Result<Self> {
        let p = Self { sigma, rho, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("Lorenz parameters must be positive: {self:?}")))
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.sigma, self.rho, self.beta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            sigma: a[0],
            rho: a[1],
            beta: a[2],
        }
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        self.to_array()[kind.index()]
    }

    pub fn with(mut self, kind: ParamKind, value: f64) -> Self {
        match kind {
            ParamKind::Sigma => self.sigma = value,
            ParamKind::Rho => self.rho = value,
            ParamKind::Beta => self.beta = value,
        }
        self
    }
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self::CLASSIC
    }
}

/// Which of the three parameters a corpus varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Sigma,
    Rho,
    Beta,
}

impl ParamKind {
    pub const ALL: [ParamKind; 3] = [ParamKind::Sigma, ParamKind::Rho, ParamKind::Beta];

    pub fn index(self) -> usize {
        match self {
            ParamKind::Sigma => 0,
            ParamKind::Rho => 1,
            ParamKind::Beta => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Sigma => "sigma",
            ParamKind::Rho => "rho",
            ParamKind::Beta => "beta",
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigma" => Ok(Self::Sigma),
            "rho" => Ok(Self::Rho),
            "beta" => Ok(Self::Beta),
            other => Err(Error::invalid(format!(
                "unknown parameter kind '{other}'; expected sigma, rho or beta"
            ))),
        }
    }
}

/// A point in Lorenz state space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn axpy(self, a: f64, d: State) -> State {
        State::new(self.x + a * d.x, self.y + a * d.y, self.z + a * d.z)
    }

    fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Time derivative of the Lorenz-63 flow.
#[inline]
pub fn lorenz_rhs(s: State, p: LorenzParams) -> State {
    State::new(
        p.sigma * (s.y - s.x),
        s.x * (p.rho - s.z) - s.y,
        s.x * s.y - p.beta * s.z,
    )
}

/// One classical fourth-order Runge-Kutta step.
#[inline]
pub fn rk4_step(s: State, p: LorenzParams, dt: f64) -> State {
    let k1 = lorenz_rhs(s, p);
    let k2 = lorenz_rhs(s.axpy(0.5 * dt, k1), p);
    let k3 = lorenz_rhs(s.axpy(0.5 * dt, k2), p);
    let k4 = lorenz_rhs(s.axpy(dt, k3), p);
    State::new(
        s.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        s.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        s.z + dt / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
    )
}

/// Uniformly sampled state series; index `i` sits at time `t0 + i * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub dt: f64,
    pub t0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn last(&self) -> State {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn xs(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.x).collect()
    }

    /// Root-mean-square of each coordinate.
    pub fn coordinate_rms(&self) -> [f64; 3] {
        let n = self.len().max(1) as f64;
        let mut acc = [0.0; 3];
        for s in &self.states {
            for (a, v) in acc.iter_mut().zip(s.to_array()) {
                *a += v * v;
            }
        }
        acc.map(|a| (a / n).sqrt())
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,x,y,z")?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(out, "{},{},{},{}", self.time(i), s.x, s.y, s.z)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self, seed: u64) -> Vec<u8> {
        let mut enc = Encoder::with_header(TRAJ_MAGIC, TRAJ_VERSION);
        enc.f64(self.dt);
        enc.f64(self.t0);
        enc.usize(self.len());
        enc.u64(seed);
        for s in &self.states {
            enc.f64s(&s.to_array());
        }
        enc.finish()
    }

    /// Decodes a binary trajectory record, returning it with its stored seed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        let mut dec = Decoder::open(bytes, TRAJ_MAGIC, TRAJ_VERSION, "trajectory")?;
        let dt = dec.f64()?;
        let t0 = dec.f64()?;
        let len = dec.usize()?;
        let seed = dec.u64()?;
        let flat = dec.f64s(
            len.checked_mul(3)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        dec.finish()?;
        if len == 0 || !(dt > 0.0) {
            return Err(Error::Format("trajectory must be non-empty with dt > 0".into()));
        }
        let states = flat.chunks_exact(3).map(|c| State::new(c[0], c[1], c[2])).collect();
        Ok((Self { states, dt, t0 }, seed))
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        std::fs::write(path, self.to_bytes(seed))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

const TRAJ_MAGIC: &[u8; 4] = b"LZTR";
const TRAJ_VERSION: u32 = 1;

/// Fixed-step integrator with a divergence guard.
#[derive(Clone, Copy, Debug)]
pub struct Integrator {
    pub dt: f64,
    pub bound: f64,
}

impl Integrator {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }

    fn check(&self, s: State, step: usize) -> Result<()> {
        let m = s.max_abs();
        if !s.is_finite() || m > self.bound {
            return Err(Error::Divergence { step, magnitude: m });
        }
        Ok(())
    }

    /// Advances `steps` times, appending each new state to `out`.
    fn extend(&self, out: &mut Vec<State>, mut s: State, p: LorenzParams, steps: usize) -> Result<State> {
        out.reserve(steps);
        for _ in 0..steps {
            s = rk4_step(s, p, self.dt);
            self.check(s, out.len())?;
            out.push(s);
        }
        Ok(s)
    }

    /// Advances `steps` times without recording.
    pub fn advance(&self, mut s: State, p: LorenzParams, steps: usize) -> Result<State> {
        for step in 0..steps {
            s = rk4_step(s, p, self.dt);
            self.check(s, step + 1)?;
        }
        Ok(s)
    }

    pub fn integrate(&self, initial: State, params: LorenzParams, steps: usize) -> Result<Trajectory> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        self.check(initial, 0)?;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(initial);
        self.extend(&mut states, initial, params, steps)?;
        Ok(Trajectory {
            states,
            dt: self.dt,
            t0: 0.0,
        })
    }
}

/// Integrates `steps` RK4 steps from `initial`; the result has `steps + 1` states.
pub fn integrate(initial: State, params: LorenzParams, steps: usize, dt: f64) -> Result<Trajectory> {
    Integrator::new(dt).integrate(initial, params, steps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub params: LorenzParams,
    pub length: usize,
}

/// Piecewise-constant parameter plan. Burn-in runs under the first segment's
/// parameters and is discarded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    pub segments: Vec<Segment>,
    pub burn_in: usize,
}

impl SegmentSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("schedule has no segments"));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.length == 0 {
                return Err(Error::invalid(format!("segment {k} has zero length")));
            }
            seg.params.validate()?;
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Cumulative segment boundaries (K - 1 of them for K segments).
    pub fn changepoints(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut cps = Vec::with_capacity(self.segments.len().saturating_sub(1));
        for seg in &self.segments[..self.segments.len().saturating_sub(1)] {
            acc += seg.length;
            cps.push(acc);
        }
        cps
    }
}

/// Relative observation noise: per-coordinate std is `eta` times that coordinate's RMS.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self::default()
    }
}

/// Simulates a schedule and returns the (noisy) trajectory with its ground-truth changepoints.
///
/// Output index 0 is the first step after burn-in. The state at a segment boundary
/// is the continuation of the previous state under the new segment's parameters.
pub fn simulate_schedule(
    schedule: &SegmentSchedule,
    initial: State,
    dt: f64,
    noise: NoiseSpec,
) -> Result<(Trajectory, Vec<usize>)> {
    schedule.validate()?;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let integ = Integrator::new(dt);
    let mut s = integ.advance(initial, schedule.segments[0].params, schedule.burn_in)?;
    let mut states = Vec::with_capacity(schedule.total_len());
    for seg in &schedule.segments {
        s = integ.extend(&mut states, s, seg.params, seg.length)?;
    }
    let clean = Trajectory {
        states,
        dt,
        t0: (schedule.burn_in + 1) as f64 * dt,
    };
    Ok((add_noise(&clean, noise), schedule.changepoints()))
}

/// Adds i.i.d. Gaussian noise scaled per coordinate by the clean RMS.
pub fn add_noise(traj: &Trajectory, spec: NoiseSpec) -> Trajectory {
    if spec.eta == 0.0 {
        return traj.clone();
    }
    let sd = traj.coordinate_rms().map(|r| spec.eta * r);
    let mut rng = seed::rng(spec.seed, seed::stream::NOISE, 0);
    let states = traj
        .states
        .iter()
        .map(|s| {
            let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            State::new(s.x + sd[0] * e[0], s.y + sd[1] * e[1], s.z + sd[2] * e[2])
        })
        .collect();
    Trajectory {
        states,
        dt: traj.dt,
        t0: traj.t0,
    }
}
