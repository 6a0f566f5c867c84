// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-sample test certifying that `[x_minus, x_plus]` brackets a jump.

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{param, Result};

/// Threshold constant `c` in `sqrt((c / T) ln(2 / delta))` used by the routine
/// itself. [`WIDE_THRESHOLD_CONSTANT`] is the more conservative variant.
pub const DEFAULT_THRESHOLD_CONSTANT: f64 = 16.0;
pub const WIDE_THRESHOLD_CONSTANT: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub detection: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub queries: u64,
}

pub fn verify_threshold(budget: u64, delta: f64, constant: f64) -> f64 {
    ((constant / budget as f64) * (2.0 / delta).ln()).sqrt()
}

pub fn verify_cp(env: &mut Environment, x_minus: f64, x_plus: f64, delta: f64, budget: u64) -> Result<VerifyOutcome> {
    verify_cp_with(env, x_minus, x_plus, delta, budget, DEFAULT_THRESHOLD_CONSTANT)
}

pub fn verify_cp_with(
    env: &mut Environment,
    x_minus: f64,
    x_plus: f64,
    delta: f64,
    budget: u64,
    constant: f64,
) -> Result<VerifyOutcome> {
    if !(0.0 <= x_minus && x_minus <= x_plus && x_plus <= 1.0) {
        return Err(param(
            "x_minus/x_plus",
            format!("require 0 <= {x_minus} <= {x_plus} <= 1"),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param("delta", format!("{delta} not in (0, 1)")));
    }
    if budget < 2 {
        return Ok(VerifyOutcome {
            detection: false,
            statistic: 0.0,
            threshold: f64::INFINITY,
            queries: 0,
        });
    }
    let per_point = budget / 2;
    let start = env.queries_used();
    let y_minus = env.sample_mean(x_minus, per_point)?;
    let y_plus = env.sample_mean(x_plus, per_point)?;
    let statistic = (y_plus - y_minus).abs();
    let threshold = verify_threshold(budget, delta, constant);
    Ok(VerifyOutcome {
        detection: statistic > threshold,
        statistic,
        threshold,
        queries: env.queries_used() - start,
    })
}

/// Budget at which a jump of size `jump` is detected with probability `1 - delta`.
pub fn power_budget(jump: f64, delta: f64) -> f64 {
    64.0 * (2.0 / delta).ln() / (jump * jump)
}
