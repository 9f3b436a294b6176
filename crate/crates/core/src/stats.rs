//! Distribution distances: Wasserstein-1 and Kolmogorov–Smirnov between
//! empirical samples and piecewise-linear CDFs.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Continuous CDF, linear between breakpoints, 0 before the first and 1
/// after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearCdf {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl PiecewiseLinearCdf {
    pub fn new(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != fs.len() {
            return Err(Error::config("CDF needs at least two breakpoints"));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) || fs.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(Error::config("CDF breakpoints and values must be non-decreasing"));
        }
        Ok(PiecewiseLinearCdf { xs, fs })
    }

    /// CDF of a density that is constant on each cell `[edges[i], edges[i+1])`.
    pub fn from_cell_density(edges: &[f64], density: &[f64]) -> Result<Self> {
        if edges.len() != density.len() + 1 {
            return Err(Error::config("need one more edge than cells"));
        }
        let mut fs = Vec::with_capacity(edges.len());
        fs.push(0.0);
        let mut acc = 0.0;
        for i in 0..density.len() {
            acc += density[i].max(0.0) * (edges[i + 1] - edges[i]);
            fs.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InsufficientData("density has no mass".into()));
        }
        fs.iter_mut().for_each(|f| *f /= acc);
        Self::new(edges.to_vec(), fs)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.fs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return if x < self.xs[0] { 0.0 } else { self.fs[0] };
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let p = self.xs.partition_point(|&k| k <= x);
        let (x0, x1) = (self.xs[p - 1], self.xs[p]);
        if x1 == x0 {
            return self.fs[p];
        }
        let w = (x - x0) / (x1 - x0);
        self.fs[p - 1] * (1.0 - w) + self.fs[p] * w
    }

    pub fn mean(&self) -> f64 {
        // E[X] = x_max − ∫ F over the support.
        let n = self.xs.len();
        let mut integral = 0.0;
        for i in 1..n {
            integral += 0.5 * (self.fs[i] + self.fs[i - 1]) * (self.xs[i] - self.xs[i - 1]);
        }
        self.xs[n - 1] - integral
    }
}

/// `∫_a^b |g|` for `g` linear with end values `ga`, `gb`.
fn abs_linear_integral(ga: f64, gb: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return 0.0;
    }
    if (ga >= 0.0) == (gb >= 0.0) {
        0.5 * (ga.abs() + gb.abs()) * width
    } else {
        let t = ga.abs() / (ga.abs() + gb.abs());
        0.5 * ga.abs() * t * width + 0.5 * gb.abs() * (1.0 - t) * width
    }
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InsufficientData("non-finite sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Empirical CDF evaluated at `x` for already-sorted samples.
pub fn ecdf(sorted_samples: &[f64], x: f64) -> f64 {
    sorted_samples.partition_point(|&s| s <= x) as f64 / sorted_samples.len() as f64
}

fn merged_breakpoints(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `W1 = ∫ |F_a − F_b|` between two piecewise-linear CDFs, exact.
pub fn wasserstein1(a: &PiecewiseLinearCdf, b: &PiecewiseLinearCdf) -> f64 {
    let pts = merged_breakpoints(&a.xs, &b.xs);
    let mut total = 0.0;
    for w in pts.windows(2) {
        // Evaluate just inside the interval to respect jumps at shared knots.
        let ga = a.eval_right(w[0]) - b.eval_right(w[0]);
        let gb = a.eval_left(w[1]) - b.eval_left(w[1]);
        total += abs_linear_integral(ga, gb, w[1] - w[0]);
    }
    total
}

impl PiecewiseLinearCdf {
    fn eval_left(&self, x: f64) -> f64 {
        let p = self.xs.partition_point(|&k| k < x);
        if p == 0 {
            return 0.0;
        }
        if p >= self.xs.len() {
            return 1.0;
        }
        let (x0, x1) = (self.xs[p - 1], self.xs[p]);
        let w = (x - x0) / (x1 - x0);
        self.fs[p - 1] * (1.0 - w) + self.fs[p] * w
    }

    fn eval_right(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

/// `W1` between samples and a piecewise-linear CDF, exact for the ECDF step
/// function.
pub fn wasserstein1_samples(samples: &[f64], cdf: &PiecewiseLinearCdf) -> Result<f64> {
    let s = sorted(samples)?;
    let pts = merged_breakpoints(&s, &cdf.xs);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let fe = ecdf(&s, w[0]);
        let ga = fe - cdf.eval_right(w[0]);
        let gb = fe - cdf.eval_left(w[1]);
        total += abs_linear_integral(ga, gb, w[1] - w[0]);
    }
    Ok(total)
}

/// `W1` between two sample sets.
pub fn wasserstein1_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let sa = sorted(a)?;
    let sb = sorted(b)?;
    let pts = merged_breakpoints(&sa, &sb);
    Ok(pts
        .windows(2)
        .map(|w| (ecdf(&sa, w[0]) - ecdf(&sb, w[0])).abs() * (w[1] - w[0]))
        .sum())
}

/// Kolmogorov–Smirnov statistic `sup |F_n − F|` for a continuous `F`.
pub fn ks_samples(samples: &[f64], cdf: &PiecewiseLinearCdf) -> Result<f64> {
    let s = sorted(samples)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf.eval(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

/// Sup-distance between two piecewise-linear CDFs.
pub fn ks_cdfs(a: &PiecewiseLinearCdf, b: &PiecewiseLinearCdf) -> f64 {
    merged_breakpoints(&a.xs, &b.xs)
        .iter()
        .map(|&x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Standard error of the empirical `W1` estimate, `∫ √(F(1 − F)/n)`.
pub fn w1_standard_error(cdf: &PiecewiseLinearCdf, n: usize) -> f64 {
    let sub = 16;
    let mut total = 0.0;
    for w in cdf.xs.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for k in 0..sub {
            let x = w[0] + (k as f64 + 0.5) * h;
            let f = cdf.eval(x);
            total += math::sqrt((f * (1.0 - f)).max(0.0) / n as f64) * h;
        }
    }
    total
}
