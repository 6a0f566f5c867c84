// SPDX-License-Identifier: MIT OR Apache-2.0

//! Comparison strategies: the continuous/discrete adapter, a uniform-grid batch
//! detector, and the overlay format for externally produced baseline curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Interval, StepFunction};
use crate::error::{param, CpError, Result};

/// `K = floor(1/eta) + 1` arms, arm `k` (1-based) sitting at `(k - 1) eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscreteBanditView {
    pub eta: f64,
    pub arm_count: usize,
}

pub fn discretize(eta: f64) -> Result<DiscreteBanditView> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(param("eta", format!("{eta} not in (0, 1)")));
    }
    Ok(DiscreteBanditView {
        eta,
        arm_count: (1.0 / eta).floor() as usize + 1,
    })
}

impl DiscreteBanditView {
    /// Position of 1-based arm `k`.
    pub fn arm_position(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.arm_count {
            return Err(param("arm", format!("{k} not in 1..={}", self.arm_count)));
        }
        Ok(((k - 1) as f64 * self.eta).min(1.0))
    }

    pub fn sample_arm(&self, env: &mut Environment, k: usize) -> Result<f64> {
        env.sample(self.arm_position(k)?)
    }

    /// Continuous estimate for a discrete change detected between arms `k` and `k + 1`.
    pub fn map_back(&self, k: usize) -> Result<f64> {
        self.arm_position(k)
    }

    /// Noiseless discrete change points: arms `k` with `f(arm k) != f(arm k+1)`.
    pub fn discrete_change_points(&self, f: &StepFunction) -> Vec<usize> {
        (1..self.arm_count)
            .filter(|&k| {
                let a = f.value_at(((k - 1) as f64 * self.eta).min(1.0));
                let b = f.value_at((k as f64 * self.eta).min(1.0));
                a != b
            })
            .collect()
    }
}

/// Step function realizing a `K`-armed discrete problem: arm `k` (1-based)
/// owns `[(k-1)/K, k/K)`, so discrete change `k | k+1` sits at `k / K`.
pub fn discrete_to_step_function(means: &[f64]) -> Result<StepFunction> {
    if means.len() < 2 {
        return Err(param("means", "need at least two arms"));
    }
    let arms = means.len() as f64;
    let mut cps = Vec::new();
    let mut jumps = Vec::new();
    for (k, w) in means.windows(2).enumerate() {
        if w[1] != w[0] {
            cps.push((k + 1) as f64 / arms);
            jumps.push(w[1] - w[0]);
        }
    }
    StepFunction::new(means[0], cps, jumps)
}

/// Recover the discrete change `k | k+1` from a continuous estimate that is
/// within `eta < 1/(2K)` of `k / K`.
pub fn recover_discrete_change(estimate: f64, arm_count: usize) -> usize {
    (estimate * arm_count as f64).round() as usize
}

/// Sample every point of a uniform grid `reps` times and flag adjacent pairs
/// whose mean difference exceeds `sqrt((4 / reps) ln(2 grid / delta))`.
pub fn uniform_batch_baseline(
    env: &mut Environment,
    grid_size: usize,
    reps_per_point: u64,
    delta: f64,
) -> Result<Vec<Interval>> {
    if grid_size < 2 {
        return Err(param("grid_size", "must be at least 2"));
    }
    if reps_per_point == 0 {
        return Err(param("reps_per_point", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param("delta", format!("{delta} not in (0, 1)")));
    }
    let last = (grid_size - 1) as f64;
    let threshold = uniform_threshold(grid_size, reps_per_point, delta);
    let mut means = Vec::with_capacity(grid_size);
    for i in 0..grid_size {
        means.push(env.sample_mean(i as f64 / last, reps_per_point)?);
    }
    let mut flagged = Vec::new();
    for i in 1..grid_size {
        if (means[i] - means[i - 1]).abs() > threshold {
            flagged.push(Interval::new((i - 1) as f64 / last, i as f64 / last)?);
        }
    }
    Ok(flagged)
}

pub fn uniform_threshold(grid_size: usize, reps_per_point: u64, delta: f64) -> f64 {
    ((4.0 / reps_per_point as f64) * (2.0 * grid_size as f64 / delta).ln()).sqrt()
}

/// One row of an external baseline overlay file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub x_param: f64,
    pub mean_budget: f64,
    pub q05: f64,
    pub q95: f64,
    pub label: String,
}

pub const OVERLAY_COLUMNS: [&str; 5] = ["x_param", "mean_budget", "q05", "q95", "label"];

pub fn read_overlay(reader: impl std::io::Read) -> Result<Vec<OverlayRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in OVERLAY_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(CpError::Schema(format!("missing column `{col}`")));
        }
    }
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<OverlayRow>, _>>()?;
    if rows.is_empty() {
        return Err(CpError::Schema("overlay has no rows".into()));
    }
    Ok(rows)
}

pub fn load_overlay(path: impl AsRef<Path>) -> Result<Vec<OverlayRow>> {
    read_overlay(std::fs::File::open(path)?)
}

pub fn write_overlay(writer: impl std::io::Write, rows: &[OverlayRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::NoiseModel;
    use proptest::prelude::*;

    #[test]
    fn discretize_examples() {
        let v = discretize(0.25).unwrap();
        assert_eq!(v.arm_count, 5);
        let pos: Vec<f64> = (1..=5).map(|k| v.arm_position(k).unwrap()).collect();
        assert_eq!(pos, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(discretize(2f64.powi(-8)).unwrap().arm_count, 257);
        assert!(v.arm_position(0).is_err());
        assert!(v.arm_position(6).is_err());
        assert!(discretize(0.0).is_err());
    }

    #[test]
    fn sampling_a_discrete_arm_queries_its_position() {
        let f = StepFunction::new(0.0, vec![0.3], vec![1.0]).unwrap();
        let mut env = Environment::new(f, NoiseModel::Zero, 0);
        let v = discretize(0.25).unwrap();
        assert_eq!(v.sample_arm(&mut env, 2).unwrap(), 0.0);
        assert_eq!(v.sample_arm(&mut env, 3).unwrap(), 1.0);
        assert_eq!(env.queries_used(), 2);
    }

    #[test]
    fn uncovered_tail_is_a_fidelity_gap() {
        // 1/0.3 is not an integer: arms at 0, .3, .6, .9 leave (0.9, 1) uncovered
        let v = discretize(0.3).unwrap();
        assert_eq!(v.arm_count, 4);
        let f = StepFunction::new(0.0, vec![0.95], vec![1.0]).unwrap();
        assert!(v.discrete_change_points(&f).is_empty());
    }

    #[test]
    fn reverse_adapter_exact_when_eta_below_half_cell() {
        let means = [0.0, 0.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.0];
        let f = discrete_to_step_function(&means).unwrap();
        let k_arms = means.len();
        assert_eq!(f.change_points(), &[2.0 / 8.0, 4.0 / 8.0, 7.0 / 8.0]);
        let eta = 0.99 / (2.0 * k_arms as f64);
        for (&x, expect) in f.change_points().iter().zip([2usize, 4, 7]) {
            for c in [x - eta, x, x + eta] {
                assert_eq!(recover_discrete_change(c, k_arms), expect);
            }
        }
    }

    proptest! {
        #[test]
        fn adapter_roundtrip_within_eta(x in 0.001f64..0.999, k in 3i32..12) {
            let eta = 2f64.powi(-k);
            let v = discretize(eta).unwrap();
            let f = StepFunction::new(0.0, vec![x], vec![1.0]).unwrap();
            let found = v.discrete_change_points(&f);
            // CPs inside the covered range are seen exactly once
            if x <= (v.arm_count - 1) as f64 * eta {
                prop_assert_eq!(found.len(), 1);
                let c = v.map_back(found[0]).unwrap();
                prop_assert!((x - c).abs() <= eta);
            }
        }
    }

    #[test]
    fn uniform_baseline_zero_noise() {
        let f = StepFunction::new(0.0, vec![0.3], vec![1.0]).unwrap();
        let mut env = Environment::new(f, NoiseModel::Zero, 0);
        let flagged = uniform_batch_baseline(&mut env, 101, 50, 0.05).unwrap();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].left() < 0.3 && 0.3 <= flagged[0].right());
        assert_eq!(env.queries_used(), 101 * 50);
    }

    #[test]
    fn uniform_baseline_validation() {
        let f = StepFunction::constant(0.0).unwrap();
        let mut env = Environment::new(f, NoiseModel::Zero, 0);
        assert!(uniform_batch_baseline(&mut env, 1, 10, 0.05).is_err());
        assert!(uniform_batch_baseline(&mut env, 10, 0, 0.05).is_err());
    }

    #[test]
    fn overlay_roundtrip_and_schema() {
        let rows = vec![OverlayRow {
            x_param: 0.25,
            mean_budget: 1e5,
            q05: 5e4,
            q95: 2e5,
            label: "MCPI".into(),
        }];
        let mut buf = Vec::new();
        write_overlay(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_param,mean_budget,q05,q95,label"));
        assert_eq!(read_overlay(buf.as_slice()).unwrap(), rows);

        let bad = "x_param,mean_budget,q95,label\n1,2,3,x\n";
        let err = read_overlay(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("q05"), "{err}");
        let empty = "x_param,mean_budget,q05,q95,label\n";
        assert!(read_overlay(empty.as_bytes()).is_err());
    }
}
