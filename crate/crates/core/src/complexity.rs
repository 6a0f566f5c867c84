// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instance difficulty functionals: local spacings, energies, `H_detect`,
//! `H_localize`, and the closed-form lower-bound expressions.
//!
//! All logarithms are natural.

use serde::Serialize;

use crate::environment::StepFunction;
use crate::error::{param, CpError, Result};

/// Statement attached to every lower-bound value.
pub const NEARBY_INSTANCE_NOTE: &str =
    "bound for some nearby instance: the guarantee holds for an environment whose complexities are within constant factors of this one";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityProfile {
    /// `theta_0 .. theta_m`, with both boundary spacings fixed to 1.
    pub spacings_theta: Vec<f64>,
    pub local_spacings: Vec<f64>,
    pub energies_sq: Vec<f64>,
    pub abs_jumps: Vec<f64>,
    pub h_detect: f64,
    /// Entry `n` is the sum of the `n` largest `1 / jump^2`; entry 0 is 0.
    pub h_localize_by_n: Vec<f64>,
}

impl ComplexityProfile {
    pub fn new(f: &StepFunction) -> Result<Self> {
        let m = f.num_change_points();
        if m == 0 {
            return Err(CpError::InvalidInstance(
                "complexity profile needs at least one change point".into(),
            ));
        }
        let cps = f.change_points();
        let mut spacings_theta = Vec::with_capacity(m + 1);
        spacings_theta.push(1.0);
        spacings_theta.extend(cps.windows(2).map(|w| w[1] - w[0]));
        spacings_theta.push(1.0);

        let local_spacings: Vec<f64> = spacings_theta.windows(2).map(|w| w[0].min(w[1])).collect();
        let abs_jumps: Vec<f64> = f.jumps().iter().map(|d| d.abs()).collect();
        let energies_sq: Vec<f64> = local_spacings
            .iter()
            .zip(&abs_jumps)
            .map(|(s, d)| s * d * d)
            .collect();
        let h_detect = energies_sq
            .iter()
            .map(|e| 1.0 / e)
            .fold(f64::NEG_INFINITY, f64::max);

        let mut sorted = abs_jumps.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut h_localize_by_n = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        h_localize_by_n.push(acc);
        for d in sorted {
            acc += 1.0 / (d * d);
            h_localize_by_n.push(acc);
        }

        Ok(Self {
            spacings_theta,
            local_spacings,
            energies_sq,
            abs_jumps,
            h_detect,
            h_localize_by_n,
        })
    }

    pub fn num_change_points(&self) -> usize {
        self.abs_jumps.len()
    }

    /// `H_localize^(n)`; `n` is clamped to `m`.
    pub fn h_localize(&self, n: usize) -> f64 {
        self.h_localize_by_n[n.min(self.num_change_points())]
    }

    /// `sum_i jump_i^-2 * log_+(s_i / (16 eta))`.
    fn precision_term(&self, eta: f64) -> f64 {
        self.local_spacings
            .iter()
            .zip(&self.abs_jumps)
            .map(|(s, d)| log_plus(s / (16.0 * eta)) / (d * d))
            .sum()
    }

    /// Quantile lower bound with `N = m`:
    /// `1/4 H_detect ln(1/(8 delta)) + 1/2 H_localize ln(1/(8 delta)) + 1/2 sum jump^-2 log_+(s/(16 eta))`.
    pub fn lower_bound_quantile(&self, delta: f64, eta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(param("delta", format!("{delta} not in (0, 1/4)")));
        }
        if !(eta > 0.0 && eta < 0.125) {
            return Err(param("eta", format!("{eta} not in (0, 1/8)")));
        }
        let m = self.num_change_points();
        let conf = (1.0 / (8.0 * delta)).ln();
        Ok(0.25 * self.h_detect * conf
            + 0.5 * self.h_localize(m) * conf
            + 0.5 * self.precision_term(eta))
    }

    /// Expectation lower bound with its unspecified numerical constant set to
    /// `constant`: `c (H_detect + H_localize ln(1/(4 delta)) + sum jump^-2 log_+(s/(16 eta)))`.
    pub fn expectation_lower_bound(&self, delta: f64, eta: f64, constant: f64) -> Result<ExpectationBound> {
        if !(delta > 0.0 && delta < 1.0 / 16.0) {
            return Err(param("delta", format!("{delta} not in (0, 1/16)")));
        }
        if !(eta > 0.0 && eta < 0.125) {
            return Err(param("eta", format!("{eta} not in (0, 1/8)")));
        }
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(param("constant", format!("{constant} must be positive")));
        }
        let m = self.num_change_points();
        // Interior spacings are theta_1 .. theta_{m-1}.
        for i in 1..m {
            let theta = self.spacings_theta[i];
            if theta <= 2.0 * eta {
                return Err(CpError::Precondition(format!(
                    "spacing theta_{i} = {theta} must exceed 2*eta = {}",
                    2.0 * eta
                )));
            }
        }
        let inner = self.h_detect
            + self.h_localize(m) * (1.0 / (4.0 * delta)).ln()
            + self.precision_term(eta);
        Ok(ExpectationBound {
            value: constant * inner,
            constant,
            note: "up to numerical constant c",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationBound {
    pub value: f64,
    pub constant: f64,
    pub note: &'static str,
}

/// `max(ln x, 0)`.
pub fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Free-function form of [`ComplexityProfile::new`].
pub fn profile(f: &StepFunction) -> Result<ComplexityProfile> {
    ComplexityProfile::new(f)
}
