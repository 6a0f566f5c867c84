// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixed-budget noisy binary search with backtracking.
//!
//! The search keeps five arms `(l(I), l_d, c_d, r_d, r(I))`. Each round samples
//! all five `tau` times. If the split between the outer pairs does not dominate
//! the two one-sided splits, the jump is judged to lie outside `[l_d, r_d]` and
//! the search retreats to the parent window. Otherwise it halves toward the
//! side with the larger inner difference.

use serde::Serialize;

use crate::environment::{Environment, Interval};
use crate::error::{param, Result};

/// Five arm positions `(outer_left, left, center, right, outer_right)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Arms(pub [f64; 5]);

impl Arms {
    fn root(interval: Interval) -> Self {
        let (l, r) = (interval.left(), interval.right());
        Arms([l, l, 0.5 * (l + r), r, r])
    }

    pub fn center(&self) -> f64 {
        self.0[2]
    }

    pub fn inner_width(&self) -> f64 {
        self.0[3] - self.0[1]
    }

    fn zoom_right(&self) -> Self {
        let [ol, _, c, r, or] = self.0;
        Arms([ol, c, 0.5 * (c + r), r, or])
    }

    fn zoom_left(&self) -> Self {
        let [ol, l, c, _, or] = self.0;
        Arms([ol, l, 0.5 * (l + c), c, or])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Backtrack,
    ZoomRight,
    ZoomLeft,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShbRound {
    pub depth: u32,
    pub arms: Arms,
    pub means: [f64; 5],
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShbOutcome {
    pub estimate: f64,
    pub queries: u64,
    /// `|I| <= 2 eta`: midpoint returned without sampling.
    pub early_exit: bool,
    /// Budget below one sample per arm per round: midpoint returned without sampling.
    pub underfunded: bool,
    pub max_depth: u32,
    pub samples_per_arm: u64,
    pub trace: Vec<ShbRound>,
}

/// `ceil(6 ln(len / eta))`.
pub fn shb_depth(len: f64, eta: f64) -> u32 {
    (6.0 * (len / eta).ln()).ceil() as u32
}

/// Three-way rule on the five arm means.
pub fn decide(means: &[f64; 5]) -> Decision {
    let [y_ol, y_l, y_c, y_r, y_or] = *means;
    let middle = (0.5 * (y_ol + y_l) - 0.5 * (y_r + y_or)).abs();
    let outer_right = ((y_ol + y_l + y_r) / 3.0 - y_or).abs();
    let outer_left = (y_ol - (y_l + y_r + y_or) / 3.0).abs();
    if middle < outer_right.max(outer_left) {
        Decision::Backtrack
    } else if (y_l - y_c).abs() <= (y_c - y_r).abs() {
        Decision::ZoomRight
    } else {
        Decision::ZoomLeft
    }
}

pub fn shb(env: &mut Environment, interval: Interval, budget: u64, eta: f64) -> Result<ShbOutcome> {
    if !(eta > 0.0) {
        return Err(param("eta", format!("{eta} must be positive")));
    }
    let midpoint = interval.midpoint();
    if interval.len() <= 2.0 * eta {
        return Ok(ShbOutcome {
            estimate: midpoint,
            queries: 0,
            early_exit: true,
            underfunded: false,
            max_depth: 0,
            samples_per_arm: 0,
            trace: Vec::new(),
        });
    }

    let max_depth = shb_depth(interval.len(), eta);
    let tau = budget / (5 * max_depth as u64);
    if tau == 0 {
        return Ok(ShbOutcome {
            estimate: midpoint,
            queries: 0,
            early_exit: false,
            underfunded: true,
            max_depth,
            samples_per_arm: 0,
            trace: Vec::new(),
        });
    }

    let start = env.queries_used();
    let mut arms = Arms::root(interval);
    let mut parents: Vec<Arms> = Vec::with_capacity(max_depth as usize);
    let mut trace = Vec::with_capacity(max_depth as usize);

    for depth in 1..=max_depth {
        let mut means = [0.0; 5];
        for (m, &x) in means.iter_mut().zip(arms.0.iter()) {
            *m = env.sample_mean(x, tau)?;
        }
        let decision = decide(&means);
        trace.push(ShbRound {
            depth,
            arms,
            means,
            decision,
        });
        arms = match decision {
            // the root is its own parent
            Decision::Backtrack => parents.pop().unwrap_or(arms),
            Decision::ZoomRight | Decision::ZoomLeft => {
                let next = if decision == Decision::ZoomRight {
                    arms.zoom_right()
                } else {
                    arms.zoom_left()
                };
                // stop refining once the window is below float resolution
                if next.0[1] < next.0[2] && next.0[2] < next.0[3] {
                    parents.push(arms);
                    next
                } else {
                    arms
                }
            }
        };
    }

    Ok(ShbOutcome {
        estimate: arms.center(),
        queries: env.queries_used() - start,
        early_exit: false,
        underfunded: false,
        max_depth,
        samples_per_arm: tau,
        trace,
    })
}

/// Budget from the single-change-point guarantee:
/// `600 / jump^2 * (ln(1/delta) + 13 ln(len / (4 eta)))`.
pub fn sufficient_budget(jump: f64, delta: f64, len: f64, eta: f64) -> f64 {
    600.0 / (jump * jump) * ((1.0 / delta).ln() + 13.0 * (len / (4.0 * eta)).ln())
}
