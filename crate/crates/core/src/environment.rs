// SPDX-License-Identifier: MIT OR Apache-2.0

//! Problem instances and the sampling oracle.
//!
//! A [`StepFunction`] is the ground truth `f(x) = mu0 + sum_i jump_i * 1{x >= x_i}`.
//! An [`Environment`] pairs it with a [`NoiseModel`] and a seeded generator and is
//! the only way algorithms may observe `f`. Every call to [`Environment::sample`]
//! bumps the query counter by one, which is how budgets are accounted.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CpError, Result};

/// Piecewise-constant function on `[0, 1]`, right-continuous at its change points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStepFunction", into = "RawStepFunction")]
pub struct StepFunction {
    baseline: f64,
    change_points: Vec<f64>,
    jumps: Vec<f64>,
    // levels[j] = baseline + jumps[..j].sum()
    levels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawStepFunction {
    baseline: f64,
    change_points: Vec<f64>,
    jumps: Vec<f64>,
}

impl TryFrom<RawStepFunction> for StepFunction {
    type Error = CpError;

    fn try_from(raw: RawStepFunction) -> Result<Self> {
        StepFunction::new(raw.baseline, raw.change_points, raw.jumps)
    }
}

impl From<StepFunction> for RawStepFunction {
    fn from(f: StepFunction) -> Self {
        RawStepFunction {
            baseline: f.baseline,
            change_points: f.change_points,
            jumps: f.jumps,
        }
    }
}

impl StepFunction {
    pub fn new(baseline: f64, change_points: Vec<f64>, jumps: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(CpError::InvalidInstance(msg));
        if !baseline.is_finite() {
            return bad("baseline must be finite".into());
        }
        if change_points.len() != jumps.len() {
            return bad(format!(
                "change_points and jumps must have equal length (got {} and {})",
                change_points.len(),
                jumps.len()
            ));
        }
        for (i, &x) in change_points.iter().enumerate() {
            if !(x > 0.0 && x < 1.0) {
                return bad(format!(
                    "change_points[{i}] = {x} must lie in the open interval (0, 1)"
                ));
            }
            if i > 0 && x <= change_points[i - 1] {
                return bad(format!(
                    "change_points must be strictly increasing (change_points[{}] = {} >= change_points[{i}] = {x})",
                    i - 1,
                    change_points[i - 1]
                ));
            }
        }
        for (i, &d) in jumps.iter().enumerate() {
            if !d.is_finite() || d == 0.0 {
                return bad(format!("jumps[{i}] = {d} must be finite and nonzero"));
            }
            if d.abs() > 1.0 {
                return bad(format!("|jumps[{i}]| = {} exceeds the bound 1", d.abs()));
            }
        }
        let mut levels = Vec::with_capacity(jumps.len() + 1);
        let mut acc = baseline;
        levels.push(acc);
        for &d in &jumps {
            acc += d;
            levels.push(acc);
        }
        Ok(Self {
            baseline,
            change_points,
            jumps,
            levels,
        })
    }

    /// Constant function (no change points). Useful as a null instance.
    pub fn constant(baseline: f64) -> Result<Self> {
        Self::new(baseline, Vec::new(), Vec::new())
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn change_points(&self) -> &[f64] {
        &self.change_points
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn num_change_points(&self) -> usize {
        self.change_points.len()
    }

    /// `f(x)`. Binary search over the sorted change points.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.value_at(x))
    }

    #[inline]
    pub(crate) fn value_at(&self, x: f64) -> f64 {
        let active = self.change_points.partition_point(|&c| c <= x);
        self.levels[active]
    }

    /// `f(r(I)) - f(l(I))`.
    pub fn interval_jump(&self, interval: Interval) -> f64 {
        self.value_at(interval.right()) - self.value_at(interval.left())
    }

    /// Number of change points `x` with `left < x <= right`, i.e. those that
    /// make `f(right) != f(left)` possible.
    pub fn change_points_in(&self, interval: Interval) -> usize {
        let lo = self.change_points.partition_point(|&c| c <= interval.left());
        let hi = self.change_points.partition_point(|&c| c <= interval.right());
        hi - lo
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(CpError::Domain { x })
    }
}

/// Closed sub-interval `[left, right]` of `[0, 1]` with `left < right`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    left: f64,
    right: f64,
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = CpError;

    fn try_from((left, right): (f64, f64)) -> Result<Self> {
        Interval::new(left, right)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> Self {
        (i.left, i.right)
    }
}

impl Interval {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if left >= 0.0 && left < right && right <= 1.0 {
            Ok(Self { left, right })
        } else {
            Err(CpError::InvalidInterval { left, right })
        }
    }

    /// Dyadic cell `[index / 2^depth, (index + 1) / 2^depth]`.
    pub fn dyadic(depth: u32, index: u64) -> Result<Self> {
        let n = (1u64 << depth) as f64;
        Self::new(index as f64 / n, (index + 1) as f64 / n)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn len(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn contains_point(&self, x: f64) -> bool {
        self.left <= x && x <= self.right
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.left <= other.left && other.right <= self.right
    }

    /// True when the interiors intersect.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.left < other.right && other.left < self.right
    }
}

/// Additive observation noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Zero,
    /// Uniform on `[-half_width, half_width]`.
    Bounded { half_width: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Gaussian { sigma: 1.0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => Err(
                CpError::InvalidInstance(format!("noise.sigma = {sigma} must be finite and >= 0")),
            ),
            NoiseModel::Bounded { half_width } if !(half_width.is_finite() && half_width >= 0.0) => {
                Err(CpError::InvalidInstance(format!(
                    "noise.half_width = {half_width} must be finite and >= 0"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether the noise is 1-sub-Gaussian, which the guarantees assume.
    pub fn is_unit_subgaussian(&self) -> bool {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma <= 1.0,
            NoiseModel::Zero => true,
            NoiseModel::Bounded { half_width } => half_width <= 1.0,
        }
    }

    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            NoiseModel::Zero => 0.0,
            NoiseModel::Bounded { half_width } => {
                if half_width == 0.0 {
                    0.0
                } else {
                    rng.random_range(-half_width..=half_width)
                }
            }
        }
    }
}

/// The bandit oracle: noisy evaluations of a hidden step function.
///
/// Single-threaded by construction; clone the function `Arc` and build one
/// environment per replicate for parallel work.
#[derive(Clone, Debug)]
pub struct Environment {
    function: Arc<StepFunction>,
    noise: NoiseModel,
    seed: u64,
    rng: ChaCha8Rng,
    queries_used: u64,
}

impl Environment {
    pub fn new(function: impl Into<Arc<StepFunction>>, noise: NoiseModel, seed: u64) -> Self {
        Self {
            function: function.into(),
            noise,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queries_used: 0,
        }
    }

    /// Fresh environment over the same function and noise with a new seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(Arc::clone(&self.function), self.noise, seed)
    }

    pub fn function(&self) -> &StepFunction {
        &self.function
    }

    pub fn shared_function(&self) -> Arc<StepFunction> {
        Arc::clone(&self.function)
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }

    /// One noisy observation `f(x) + eps`.
    pub fn sample(&mut self, x: f64) -> Result<f64> {
        check_unit(x)?;
        self.queries_used += 1;
        Ok(self.function.value_at(x) + self.noise.draw(&mut self.rng))
    }

    /// Mean of `n` fresh observations at `x`; costs `n` queries.
    ///
    /// Returns `NaN` when `n == 0`. Callers guard against that case.
    pub fn sample_mean(&mut self, x: f64, n: u64) -> Result<f64> {
        check_unit(x)?;
        let value = self.function.value_at(x);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += value + self.noise.draw(&mut self.rng);
        }
        self.queries_used += n;
        Ok(sum / n as f64)
    }
}

/// On-disk instance description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub baseline: f64,
    pub change_points: Vec<f64>,
    pub jumps: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.step_function()?;
        file.noise.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn step_function(&self) -> Result<StepFunction> {
        StepFunction::new(self.baseline, self.change_points.clone(), self.jumps.clone())
    }

    pub fn environment(&self) -> Result<Environment> {
        self.noise.validate()?;
        Ok(Environment::new(self.step_function()?, self.noise, self.seed))
    }
}
