// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adaptive jump-magnitude estimation over candidate intervals.
//!
//! Round `k` gives every still-active interval `2^(k-1)` fresh samples per
//! endpoint and accepts it once the round's endpoint difference clears
//! [`acceptance_threshold`]. Means are per round, never pooled.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::Serialize;

use crate::environment::{Environment, Interval};
use crate::error::{param, CpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEstimate {
    pub interval: Interval,
    pub delta_hat: f64,
    pub accepted_round: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpEstimationResult {
    /// Sorted by `delta_hat` descending, ties by left endpoint ascending.
    pub accepted: Vec<JumpEstimate>,
    pub queries_used: u64,
    /// Fewer than `N` acceptances when the loop stopped.
    pub exhausted: bool,
    pub rounds: u32,
}

/// `sqrt(2^-(k-5) * ln(pi^2 M k^2 / (3 delta)))`.
pub fn acceptance_threshold(round: u32, candidates: usize, delta: f64) -> f64 {
    let k = round as f64;
    let scale = 2f64.powi(5 - round as i32);
    (scale * (PI * PI * candidates as f64 * k * k / (3.0 * delta)).ln()).sqrt()
}

fn by_estimate(a: &JumpEstimate, b: &JumpEstimate) -> Ordering {
    b.delta_hat
        .total_cmp(&a.delta_hat)
        .then(a.interval.left().total_cmp(&b.interval.left()))
}

pub fn estimate_jumps(
    env: &mut Environment,
    intervals: &[Interval],
    delta: f64,
    budget: u64,
    target: usize,
) -> Result<JumpEstimationResult> {
    if intervals.is_empty() {
        return Err(param("intervals", "at least one candidate interval is required"));
    }
    if target == 0 {
        return Err(param("target", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param("delta", format!("{delta} not in (0, 1)")));
    }

    let start = env.queries_used();
    let candidates = intervals.len();
    let mut active: Vec<Interval> = intervals.to_vec();
    active.sort_by(|a, b| a.left().total_cmp(&b.left()));
    let mut accepted = Vec::new();
    let mut spent: u64 = 0;
    let mut round: u32 = 1;

    while accepted.len() < target && !active.is_empty() && round < 63 {
        let round_cost = 1u64 << round;
        let projected = (active.len() as u64)
            .checked_mul(round_cost)
            .and_then(|c| c.checked_add(spent));
        match projected {
            Some(total) if total <= budget => {}
            _ => break,
        }
        let per_endpoint = round_cost / 2;
        let threshold = acceptance_threshold(round, candidates, delta);
        let mut still_active = Vec::with_capacity(active.len());
        for interval in active {
            let left = env.sample_mean(interval.left(), per_endpoint)?;
            let right = env.sample_mean(interval.right(), per_endpoint)?;
            let delta_hat = (right - left).abs();
            if delta_hat >= threshold {
                accepted.push(JumpEstimate {
                    interval,
                    delta_hat,
                    accepted_round: round,
                });
            } else {
                still_active.push(interval);
            }
            spent += round_cost;
        }
        active = still_active;
        round += 1;
    }

    accepted.sort_by(by_estimate);
    let queries_used = env.queries_used() - start;
    debug_assert_eq!(queries_used, spent);
    Ok(JumpEstimationResult {
        exhausted: accepted.len() < target,
        accepted,
        queries_used,
        rounds: round - 1,
    })
}

/// The `n` largest estimates (ties to the smaller left endpoint).
pub fn top_n(result: &JumpEstimationResult, n: usize) -> Result<(Vec<Interval>, Vec<f64>)> {
    if result.accepted.len() < n {
        return Err(CpError::Insufficient {
            accepted: result.accepted.len(),
            requested: n,
        });
    }
    let mut sorted = result.accepted.clone();
    sorted.sort_by(by_estimate);
    Ok(sorted
        .into_iter()
        .take(n)
        .map(|e| (e.interval, e.delta_hat))
        .unzip())
}
