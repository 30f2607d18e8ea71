// SPDX-License-Identifier: MIT OR Apache-2.0

//! Offline penalized segmentation with an RBF kernel cost.
//!
//! Both solvers stream kernel column sums instead of holding a `T × T` gram
//! matrix, so memory is linear in the series length. Column sums are
//! accumulated in the same order by [`pelt`] and [`exact_dp`], which makes
//! their segment costs bitwise identical.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_SIZE: usize = 20;
/// Multiplier `c` in the `c * ln(T) * d` penalty, tuned on held-out sequences.
pub const DEFAULT_PENALTY_CONSTANT: f64 = 0.75;
/// Points used by the median heuristic.
pub const BANDWIDTH_SUBSAMPLE: usize = 512;
/// Longest series accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_LEN: usize = 24;

/// A `T × d` row-major matrix of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    dim: usize,
}

impl Series {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite series entry at flat index {i}")));
        }
        Ok(Self { values, dim })
    }

    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// RBF bandwidth: explicit `γ` or the median heuristic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, series: &Series) -> Result<f64> {
        match self {
            Bandwidth::Auto => Ok(median_heuristic_gamma(series)),
            Bandwidth::Fixed(g) if g > 0.0 && g.is_finite() => Ok(g),
            Bandwidth::Fixed(g) => Err(Error::invalid(format!("kernel bandwidth must be positive, got {g}"))),
        }
    }
}

/// `γ = 1 / (2 m²)` with `m` the median pairwise distance over at most
/// [`BANDWIDTH_SUBSAMPLE`] evenly spaced rows. Falls back to 1 when `m = 0`.
pub fn median_heuristic_gamma(series: &Series) -> f64 {
    let n = series.len();
    let k = n.min(BANDWIDTH_SUBSAMPLE);
    if k < 2 {
        return 1.0;
    }
    let idx: Vec<usize> = (0..k).map(|i| i * n / k).collect();
    let mut d: Vec<f64> = Vec::with_capacity(k * (k - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(series.sq_dist(i, j).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    if median > 0.0 {
        1.0 / (2.0 * median * median)
    } else {
        1.0
    }
}

/// `c · ln(T) · d`.
pub fn auto_penalty(len: usize, dim: usize, constant: f64) -> f64 {
    constant * (len.max(1) as f64).ln() * dim as f64
}

fn rbf(series: &Series, gamma: f64, i: usize, j: usize) -> f64 {
    (-gamma * series.sq_dist(i, j)).exp()
}

/// `(b − a) − S / (b − a)` clamped at zero, with `S` the kernel block sum.
fn segment_cost(len: usize, block_sum: f64) -> f64 {
    let n = len as f64;
    (n - block_sum / n).max(0.0)
}

/// Random-access kernel segment costs from a full gram matrix and its 2D prefix sums.
///
/// Memory is quadratic in `T`; the solvers do not use it.
#[derive(Clone, Debug)]
pub struct KernelCostModel {
    gamma: f64,
    n: usize,
    gram: Vec<f64>,
    /// `(T+1)²` table, entry `[a][b]` = sum of `k(i, j)` for `i < a`, `j < b`.
    prefix: Vec<f64>,
}

impl KernelCostModel {
    pub fn new(series: &Series, bandwidth: Bandwidth) -> Result<Self> {
        let gamma = bandwidth.resolve(series)?;
        let n = series.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            gram[i * n + i] = 1.0;
            for j in i + 1..n {
                let v = rbf(series, gamma, i, j);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        let m = n + 1;
        let mut prefix = vec![0.0; m * m];
        for a in 1..m {
            let mut row = 0.0;
            for b in 1..m {
                row += gram[(a - 1) * n + (b - 1)];
                prefix[a * m + b] = prefix[(a - 1) * m + b] + row;
            }
        }
        Ok(Self { gamma, n, gram, prefix })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    /// Kernel cost of the half-open segment `[a, b)`.
    pub fn rbf_cost(&self, a: usize, b: usize) -> Result<f64> {
        if a >= b || b > self.n {
            return Err(Error::invalid(format!("segment [{a}, {b}) outside 0..{}", self.n)));
        }
        let m = self.n + 1;
        let p = |i: usize, j: usize| self.prefix[i * m + j];
        let block = p(b, b) - p(a, b) - p(b, a) + p(a, a);
        Ok(segment_cost(b - a, block))
    }
}

/// Changepoint estimate. Breakpoints are segment starts in `1..T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub breakpoints: Vec<usize>,
    pub penalty: f64,
    pub gamma: f64,
    pub min_size: usize,
    pub total_cost: f64,
}

impl Segmentation {
    pub fn n_changepoints(&self) -> usize {
        self.breakpoints.len()
    }
}

fn validate(series: &Series, penalty: f64, min_size: usize) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::invalid("detection needs at least two points"));
    }
    if !(penalty >= 0.0) {
        return Err(Error::invalid(format!("penalty must be non-negative, got {penalty}")));
    }
    if min_size == 0 {
        return Err(Error::invalid("min_size must be at least 1"));
    }
    Ok(())
}

/// Cost differences below this are ties. Costs are bounded by `T` per
/// segment set, so the scale covers every partial objective.
fn tie_tolerance(n: usize, penalty: f64, min_size: usize) -> f64 {
    let max_pen = if penalty.is_finite() {
        penalty * (n / min_size) as f64
    } else {
        0.0
    };
    1e-9 * (1.0 + n as f64 + max_pen)
}

/// Lexicographic order of `a ++ [x]` against `b ++ [y]` (empty tails for start 0).
fn cmp_paths(a: &[usize], x: usize, b: &[usize], y: usize) -> Ordering {
    let tail = |s: usize| if s == 0 { None } else { Some(s) };
    a.iter().copied().chain(tail(x)).cmp(b.iter().copied().chain(tail(y)))
}

/// Optimal partitioning, optionally with PELT pruning.
fn solve(series: &Series, penalty: f64, min_size: usize, bandwidth: Bandwidth, prune: bool) -> Result<Segmentation> {
    validate(series, penalty, min_size)?;
    let gamma = bandwidth.resolve(series)?;
    let n = series.len();
    let single = |total_cost| Segmentation {
        breakpoints: Vec::new(),
        penalty,
        gamma,
        min_size,
        total_cost,
    };
    if n < 2 * min_size || penalty.is_infinite() {
        let mut block = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in (0..j).rev() {
                col += rbf(series, gamma, i, j);
            }
            block += 2.0 * col + 1.0;
        }
        return Ok(single(segment_cost(n, block)));
    }

    let tol = tie_tolerance(n, penalty, min_size);
    let mut f = vec![f64::INFINITY; n + 1];
    f[0] = 0.0;
    let mut counts = vec![0usize; n + 1];
    let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    // Kernel block sum S(s, t) for every tracked start s.
    let mut sums = vec![0.0; n + 1];
    // Time from which a pruned start is no longer evaluated.
    let mut expiry = vec![usize::MAX; n + 1];
    let mut active: Vec<usize> = vec![0];
    let mut values: Vec<(usize, f64)> = Vec::new();

    for t in 1..=n {
        active.retain(|&s| expiry[s] > t);
        // Add row j = t - 1 to every tracked block.
        let j = t - 1;
        let mut col = 0.0;
        let mut i = j;
        for &s in active.iter().rev() {
            while i > s {
                i -= 1;
                col += rbf(series, gamma, i, j);
            }
            sums[s] += 2.0 * col + 1.0;
        }

        values.clear();
        for &s in &active {
            if t - s < min_size {
                break;
            }
            let pen = if s == 0 { 0.0 } else { penalty };
            values.push((s, f[s] + segment_cost(t - s, sums[s]) + pen));
        }
        if !values.is_empty() {
            let best_value = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            let mut win: Option<(usize, f64)> = None;
            for &(s, v) in &values {
                if v > best_value + tol {
                    continue;
                }
                let c = counts[s] + usize::from(s > 0);
                win = match win {
                    None => Some((s, v)),
                    Some((w, wv)) => {
                        let cw = counts[w] + usize::from(w > 0);
                        let better = c.cmp(&cw).then_with(|| cmp_paths(&paths[s], s, &paths[w], w)) == Ordering::Less;
                        if better {
                            Some((s, v))
                        } else {
                            Some((w, wv))
                        }
                    }
                };
            }
            let (w, wv) = win.expect("tie set contains the minimum");
            f[t] = wv;
            counts[t] = counts[w] + usize::from(w > 0);
            let mut p = paths[w].clone();
            if w > 0 {
                p.push(w);
            }
            paths[t] = p;

            // A start worse than t by more than the tie margin stays worse
            // once t itself becomes usable, min_size steps later.
            if prune && t <= n - min_size {
                for &(s, v) in &values {
                    if v > f[t] + penalty + 2.0 * tol && expiry[s] == usize::MAX {
                        expiry[s] = t + min_size;
                    }
                }
            }
        }
        if t >= min_size && t <= n - min_size {
            active.push(t);
        }
    }

    Ok(Segmentation {
        breakpoints: std::mem::take(&mut paths[n]),
        penalty,
        gamma,
        min_size,
        total_cost: f[n],
    })
}

/// Penalized kernel segmentation with PELT pruning.
///
/// Ties within a small tolerance go to fewer changepoints, then to the
/// lexicographically earlier breakpoint list.
pub fn pelt(series: &Series, penalty: f64, min_size: usize, bandwidth: Bandwidth) -> Result<Segmentation> {
    solve(series, penalty, min_size, bandwidth, true)
}

/// Unpruned `O(T²)` optimal partitioning under the same tie-break as [`pelt`].
pub fn exact_dp(series: &Series, penalty: f64, min_size: usize, bandwidth: Bandwidth) -> Result<Segmentation> {
    solve(series, penalty, min_size, bandwidth, false)
}

/// Exhaustive search over every segmentation respecting `min_size`, with
/// costs from direct double sums. Exponential; for testing.
pub fn brute_force(series: &Series, penalty: f64, min_size: usize, bandwidth: Bandwidth) -> Result<Segmentation> {
    validate(series, penalty, min_size)?;
    let n = series.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::invalid(format!(
            "brute force limited to {BRUTE_FORCE_MAX_LEN} points, got {n}"
        )));
    }
    let gamma = bandwidth.resolve(series)?;
    let cost = |a: usize, b: usize| {
        let mut block = 0.0;
        for i in a..b {
            for j in a..b {
                block += rbf(series, gamma, i, j);
            }
        }
        segment_cost(b - a, block)
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::new();
    let tol = tie_tolerance(n, penalty, min_size);

    fn visit(start: usize, n: usize, min_size: usize, current: &mut Vec<usize>, emit: &mut dyn FnMut(&[usize])) {
        emit(current);
        for b in start + min_size..=n.saturating_sub(min_size) {
            current.push(b);
            visit(b, n, min_size, current, emit);
            current.pop();
        }
    }

    let mut emit = |bps: &[usize]| {
        let mut edges = vec![0];
        edges.extend_from_slice(bps);
        edges.push(n);
        let seg: f64 = edges.windows(2).map(|e| cost(e[0], e[1])).sum();
        let total = if bps.is_empty() {
            seg
        } else {
            seg + penalty * bps.len() as f64
        };
        let replace = match &best {
            None => true,
            Some((bv, bb)) => {
                if total < bv - tol {
                    true
                } else if total <= bv + tol {
                    (bps.len(), bps) < (bb.len(), bb.as_slice())
                } else {
                    false
                }
            }
        };
        if replace {
            best = Some((total, bps.to_vec()));
        }
    };
    if n < 2 * min_size {
        emit(&[]);
    } else {
        visit(0, n, min_size, &mut current, &mut emit);
    }
    let (total_cost, breakpoints) = best.expect("at least the empty segmentation");
    Ok(Segmentation {
        breakpoints,
        penalty,
        gamma,
        min_size,
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_cost(s: &Series, gamma: f64, a: usize, b: usize) -> f64 {
        let mut block = 0.0;
        for i in a..b {
            for j in a..b {
                let d2: f64 = s.row(i).iter().zip(s.row(j)).map(|(x, y)| (x - y).powi(2)).sum();
                block += (-gamma * d2).exp();
            }
        }
        let m = (b - a) as f64;
        m - block / m
    }

    fn random_series(rng: &mut impl Rng, n: usize, dim: usize) -> Series {
        // Piecewise levels plus noise so optimal segmentations are non-trivial.
        let mut level = vec![0.0; dim];
        let mut v = Vec::with_capacity(n * dim);
        for _ in 0..n {
            if rng.random::<f64>() < 0.15 {
                level.iter_mut().for_each(|l| *l = 4.0 * rng.random::<f64>() - 2.0);
            }
            for l in &level {
                v.push(l + 0.3 * (rng.random::<f64>() - 0.5));
            }
        }
        Series::new(v, dim).unwrap()
    }

    #[test]
    fn constant_and_unit_segments_cost_nothing() {
        let s = Series::univariate(vec![2.5; 10]).unwrap();
        let m = KernelCostModel::new(&s, Bandwidth::Fixed(0.7)).unwrap();
        assert_eq!(m.rbf_cost(0, 10).unwrap(), 0.0);
        let r = Series::univariate(vec![0.0, 3.0, -1.0, 7.0]).unwrap();
        let m = KernelCostModel::new(&r, Bandwidth::Auto).unwrap();
        for a in 0..4 {
            assert!(m.rbf_cost(a, a + 1).unwrap().abs() < 1e-15);
        }
        assert!(m.rbf_cost(2, 2).is_err());
        assert!(m.rbf_cost(1, 5).is_err());
    }

    #[test]
    fn cost_matches_double_sum() {
        let mut rng = seed::rng(11, 0, 0);
        for dim in 1..=3 {
            let s = Series::new((0..6 * dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(), dim).unwrap();
            let m = KernelCostModel::new(&s, Bandwidth::Auto).unwrap();
            for a in 0..6 {
                for b in a + 1..=6 {
                    let c = m.rbf_cost(a, b).unwrap();
                    assert!((c - naive_cost(&s, m.gamma(), a, b)).abs() < 1e-10);
                    assert!(c >= 0.0);
                }
            }
            for i in 0..6 {
                assert_eq!(m.kernel(i, i), 1.0);
                for j in 0..6 {
                    assert_eq!(m.kernel(i, j), m.kernel(j, i));
                }
            }
        }
    }

    #[test]
    fn median_heuristic_known_value() {
        // Pairwise distances 1, 2, 3, 1, 2, 1: median of six is 1.5.
        let s = Series::univariate(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((median_heuristic_gamma(&s) - 1.0 / (2.0 * 2.25)).abs() < 1e-15);
        let c = Series::univariate(vec![1.0; 5]).unwrap();
        assert_eq!(median_heuristic_gamma(&c), 1.0);
    }

    #[test]
    fn auto_penalty_rule() {
        assert!((auto_penalty(9600, 1, 3.0) - 27.5).abs() < 0.01);
        assert_eq!(auto_penalty(100, 2, 1.0), 2.0 * 100f64.ln());
    }

    #[test]
    fn constant_series_has_no_changepoints() {
        let s = Series::univariate(vec![1.0; 50]).unwrap();
        for pen in [1e-3, 1.0, 100.0] {
            assert!(pelt(&s, pen, 5, Bandwidth::Auto).unwrap().breakpoints.is_empty());
        }
    }

    #[test]
    fn step_series_splits_at_ten() {
        let mut v = vec![0.0; 10];
        v.extend([1.0; 10]);
        let s = Series::univariate(v).unwrap();
        for algo in [pelt, exact_dp] {
            let seg = algo(&s, 0.5, 2, Bandwidth::Auto).unwrap();
            assert_eq!(seg.breakpoints, vec![10]);
        }
    }

    #[test]
    fn short_series_and_infinite_penalty() {
        let s = Series::univariate(vec![0.0, 0.0, 5.0, 5.0, 5.0]).unwrap();
        let seg = pelt(&s, 0.1, 3, Bandwidth::Auto).unwrap();
        assert!(seg.breakpoints.is_empty());
        let model = KernelCostModel::new(&s, Bandwidth::Auto).unwrap();
        assert!((seg.total_cost - model.rbf_cost(0, 5).unwrap()).abs() < 1e-12);

        let mut rng = seed::rng(3, 0, 0);
        let r = random_series(&mut rng, 40, 1);
        let whole = KernelCostModel::new(&r, Bandwidth::Auto)
            .unwrap()
            .rbf_cost(0, 40)
            .unwrap();
        for pen in [2.0 * whole + 1.0, f64::INFINITY] {
            assert!(exact_dp(&r, pen, 2, Bandwidth::Auto).unwrap().breakpoints.is_empty());
        }
    }

    #[test]
    fn invalid_configs() {
        let s = Series::univariate(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(pelt(&s, -1.0, 1, Bandwidth::Auto).is_err());
        assert!(pelt(&s, f64::NAN, 1, Bandwidth::Auto).is_err());
        assert!(pelt(&s, 1.0, 0, Bandwidth::Auto).is_err());
        assert!(pelt(&s, 1.0, 1, Bandwidth::Fixed(0.0)).is_err());
        assert!(pelt(&Series::univariate(vec![1.0]).unwrap(), 1.0, 1, Bandwidth::Auto).is_err());
        assert!(Series::new(vec![1.0, f64::NAN], 1).is_err());
        assert!(Series::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn total_cost_is_recomputable() {
        let mut rng = seed::rng(5, 0, 0);
        for _ in 0..20 {
            let s = random_series(&mut rng, 48, 2);
            let seg = pelt(&s, 1.5, 3, Bandwidth::Auto).unwrap();
            let m = KernelCostModel::new(&s, Bandwidth::Fixed(seg.gamma)).unwrap();
            let mut edges = vec![0];
            edges.extend(&seg.breakpoints);
            edges.push(48);
            let total: f64 = edges.windows(2).map(|e| m.rbf_cost(e[0], e[1]).unwrap()).sum::<f64>()
                + seg.penalty * seg.breakpoints.len() as f64;
            assert!((total - seg.total_cost).abs() < 1e-9);
            assert!(edges.windows(2).all(|e| e[1] - e[0] >= 3));
        }
    }

    #[test]
    fn exhaustive_agreement_up_to_sixteen() {
        let mut rng = seed::rng(7, 0, 0);
        for case in 0..300 {
            let n = 2 + case % 15;
            let dim = 1 + case % 2;
            let s = random_series(&mut rng, n, dim);
            let min_size = 1 + case % 3;
            let pen = [0.05, 0.3, 1.0, 3.0][case % 4];
            let brute = brute_force(&s, pen, min_size, Bandwidth::Auto).unwrap();
            let dp = exact_dp(&s, pen, min_size, Bandwidth::Auto).unwrap();
            let pe = pelt(&s, pen, min_size, Bandwidth::Auto).unwrap();
            assert_eq!(dp.breakpoints, brute.breakpoints, "case {case}");
            assert_eq!(pe.breakpoints, brute.breakpoints, "case {case}");
            assert!((dp.total_cost - brute.total_cost).abs() < 1e-9);
            assert_eq!(pe.total_cost, dp.total_cost);
        }
    }

    #[test]
    fn pelt_equals_dp_on_larger_series() {
        let mut rng = seed::rng(9, 0, 0);
        for case in 0..500 {
            let n = rng.random_range(4..=64);
            let s = random_series(&mut rng, n, 1 + case % 3);
            let min_size = rng.random_range(1..=4);
            let pen = 0.1 + 4.0 * rng.random::<f64>();
            let a = pelt(&s, pen, min_size, Bandwidth::Auto).unwrap();
            let b = exact_dp(&s, pen, min_size, Bandwidth::Auto).unwrap();
            assert_eq!(a, b, "case {case}");
        }
    }

    #[test]
    fn segmentation_json_roundtrip() {
        let seg = Segmentation {
            breakpoints: vec![20, 55],
            penalty: 27.5,
            gamma: 0.031,
            min_size: 20,
            total_cost: 3.25,
        };
        let text = serde_json::to_string(&seg).unwrap();
        for key in ["breakpoints", "penalty", "gamma", "min_size", "total_cost"] {
            assert!(text.contains(key));
        }
        assert_eq!(serde_json::from_str::<Segmentation>(&text).unwrap(), seg);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn breakpoints_non_increasing_in_penalty(seed in 0u64..10_000, dim in 1usize..3) {
            let mut rng = seed::rng(seed, 0, 0);
            let s = random_series(&mut rng, 60, dim);
            let gamma = median_heuristic_gamma(&s);
            let mut last = usize::MAX;
            for pen in [0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0] {
                let k = pelt(&s, pen, 2, Bandwidth::Fixed(gamma)).unwrap().breakpoints.len();
                prop_assert!(k <= last);
                last = k;
            }
        }

        #[test]
        fn segment_cost_ignores_point_order(seed in 0u64..10_000, len in 2usize..12) {
            let mut rng = seed::rng(seed, 1, 0);
            let s = random_series(&mut rng, len, 2);
            let mut order: Vec<usize> = (0..len).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let shuffled = Series::new(order.iter().flat_map(|&i| s.row(i).to_vec()).collect(), 2).unwrap();
            let a = KernelCostModel::new(&s, Bandwidth::Fixed(0.4)).unwrap().rbf_cost(0, len).unwrap();
            let b = KernelCostModel::new(&shuffled, Bandwidth::Fixed(0.4)).unwrap().rbf_cost(0, len).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn breakpoints_invariant_under_positive_affine_maps(
            seed in 0u64..10_000,
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let mut rng = seed::rng(seed, 2, 0);
            let s = random_series(&mut rng, 80, 1);
            let mapped = Series::univariate(s.values().iter().map(|v| scale * v + shift).collect()).unwrap();
            let a = pelt(&s, 2.0, 4, Bandwidth::Auto).unwrap();
            let b = pelt(&mapped, 2.0, 4, Bandwidth::Auto).unwrap();
            prop_assert_eq!(a.breakpoints, b.breakpoints);
        }
    }
}
