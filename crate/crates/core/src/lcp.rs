// SPDX-License-Identifier: MIT OR Apache-2.0

//! Doubling-schedule localization of `N` change points.
//!
//! Stage `k` spends budget `2^k` on each of detection, jump estimation,
//! refinement and verification. The run stops at the first stage whose `N`
//! candidates all pass verification at level `delta_k = 3 delta / (2 pi^2 N k^2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::detect::{detect_intervals, DetectionConfig, DetectionResult};
use crate::environment::{Environment, Interval};
use crate::error::{param, CpError, Result};
use crate::jumps::{estimate_jumps, top_n, JumpEstimationResult};
use crate::shb::{shb, ShbOutcome};
use crate::verify::{verify_cp_with, VerifyOutcome, DEFAULT_THRESHOLD_CONSTANT};

pub const DEFAULT_MAX_STAGE: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcpConfig {
    pub n_targets: usize,
    pub delta: f64,
    pub eta: f64,
    pub delta_explore: f64,
    #[serde(default = "default_max_stage")]
    pub max_stage: u32,
    #[serde(default = "default_verify_constant")]
    pub verify_constant: f64,
}

fn default_max_stage() -> u32 {
    DEFAULT_MAX_STAGE
}

fn default_verify_constant() -> f64 {
    DEFAULT_THRESHOLD_CONSTANT
}

impl LcpConfig {
    pub fn new(n_targets: usize, delta: f64, eta: f64, delta_explore: f64) -> Self {
        Self {
            n_targets,
            delta,
            eta,
            delta_explore,
            max_stage: DEFAULT_MAX_STAGE,
            verify_constant: DEFAULT_THRESHOLD_CONSTANT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_targets == 0 {
            return Err(param("n_targets", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(param("delta", format!("{} not in (0, 1)", self.delta)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(param("eta", format!("{} not in (0, 1)", self.eta)));
        }
        if !(self.delta_explore > 0.0 && self.delta_explore <= 1.0) {
            return Err(param(
                "delta_explore",
                format!("{} not in (0, 1]", self.delta_explore),
            ));
        }
        if !(self.verify_constant > 0.0) {
            return Err(param("verify_constant", "must be positive"));
        }
        if self.max_stage > 62 {
            return Err(param("max_stage", "stage budgets above 2^62 are not representable"));
        }
        Ok(())
    }

    /// Whether the parameters fall inside the regime covered by the
    /// correctness and budget guarantees.
    pub fn in_guarantee_regime(&self) -> bool {
        self.delta < 0.25 && self.eta < 0.25 && self.delta_explore <= 0.25
    }

    pub fn initial_stage(&self) -> u32 {
        initial_stage(self.n_targets)
    }
}

/// `ceil(log2(2N))`.
pub fn initial_stage(n_targets: usize) -> u32 {
    let two_n = 2 * n_targets as u64;
    64 - (two_n - 1).leading_zeros()
}

/// `3 delta / (2 pi^2 N k^2)`.
pub fn stage_delta(delta: f64, n_targets: usize, stage: u32) -> f64 {
    let k = stage as f64;
    3.0 * delta / (2.0 * PI * PI * n_targets as f64 * k * k)
}

/// Per-interval refinement budgets `max(floor(w_v B / sum w), 1)` with
/// weights `w_v = delta_hat_v^-2`.
pub fn allocation(delta_hats: &[f64], stage_budget: u64) -> Result<Vec<u64>> {
    let weights = allocation_weights(delta_hats)?;
    let total: f64 = weights.iter().sum();
    Ok(weights
        .iter()
        .map(|w| ((w * stage_budget as f64 / total).floor() as u64).max(1))
        .collect())
}

/// Normalized weights `alpha_v = delta_hat_v^-2 / sum delta_hat^-2`.
pub fn allocation_proportions(delta_hats: &[f64]) -> Result<Vec<f64>> {
    let weights = allocation_weights(delta_hats)?;
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

fn allocation_weights(delta_hats: &[f64]) -> Result<Vec<f64>> {
    if delta_hats.is_empty() {
        return Err(CpError::Invariant("allocation over zero estimates".into()));
    }
    delta_hats
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / (d * d))
            } else {
                Err(CpError::Invariant(format!(
                    "jump estimate {d} must be positive and finite"
                )))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageLedger {
    pub k: u32,
    pub delta_k: f64,
    pub detect_queries: u64,
    pub jump_queries: u64,
    pub shb_queries: Vec<u64>,
    pub verify_queries: Vec<u64>,
    pub intervals_found: usize,
    pub accepted: usize,
    pub all_verified: bool,
}

impl StageLedger {
    pub fn total(&self) -> u64 {
        self.detect_queries
            + self.jump_queries
            + self.shb_queries.iter().sum::<u64>()
            + self.verify_queries.iter().sum::<u64>()
    }
}

/// Subroutine outputs for one stage, kept only when tracing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTrace {
    pub k: u32,
    pub detection: DetectionResult,
    pub jumps: Option<JumpEstimationResult>,
    pub candidates: Vec<CandidateTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateTrace {
    pub interval: Interval,
    pub delta_hat: f64,
    pub budget: u64,
    pub shb: ShbOutcome,
    pub verify_points: (f64, f64),
    pub verify: VerifyOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Certified,
    StageCapReached,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    /// Sorted ascending. Empty unless `status == Certified`.
    pub estimates: Vec<f64>,
    pub total_budget: u64,
    pub stop_stage: u32,
    pub status: RunStatus,
    pub ledgers: Vec<StageLedger>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<StageTrace>,
}

impl RunReport {
    pub fn certified(&self) -> bool {
        self.status == RunStatus::Certified
    }
}

pub fn localize(env: &mut Environment, cfg: &LcpConfig) -> Result<RunReport> {
    run(env, cfg, false)
}

/// As [`localize`], also recording every subroutine output per stage.
pub fn localize_traced(env: &mut Environment, cfg: &LcpConfig) -> Result<RunReport> {
    run(env, cfg, true)
}

fn run(env: &mut Environment, cfg: &LcpConfig, tracing: bool) -> Result<RunReport> {
    cfg.validate()?;
    let n = cfg.n_targets;
    let explore = cfg.delta_explore / 4.0;
    let start = env.queries_used();
    let mut ledgers = Vec::new();
    let mut trace = Vec::new();
    let mut k = cfg.initial_stage();

    while k <= cfg.max_stage {
        let stage_start = env.queries_used();
        let stage_budget = 1u64 << k;
        let delta_k = stage_delta(cfg.delta, n, k);
        let mut ledger = StageLedger {
            k,
            delta_k,
            detect_queries: 0,
            jump_queries: 0,
            shb_queries: Vec::new(),
            verify_queries: Vec::new(),
            intervals_found: 0,
            accepted: 0,
            all_verified: false,
        };
        let mut stage_trace = tracing.then(|| StageTrace {
            k,
            detection: DetectionResult {
                intervals: Vec::new(),
                per_depth: Vec::new(),
                queries: 0,
            },
            jumps: None,
            candidates: Vec::new(),
        });

        let detection = detect_intervals(env, &DetectionConfig::new(explore, stage_budget)?)?;
        ledger.detect_queries = detection.queries;
        ledger.intervals_found = detection.intervals.len();

        let mut estimates = None;
        if detection.intervals.len() >= n {
            let jumps = estimate_jumps(env, &detection.intervals, explore, stage_budget, n)?;
            ledger.jump_queries = jumps.queries_used;
            ledger.accepted = jumps.accepted.len();
            if jumps.accepted.len() >= n {
                let (chosen, delta_hats) = top_n(&jumps, n)?;
                let budgets = allocation(&delta_hats, stage_budget)?;
                let mut found = Vec::with_capacity(n);
                let mut all_ok = true;
                for ((interval, &delta_hat), &budget) in chosen.iter().zip(&delta_hats).zip(&budgets) {
                    let refined = shb(env, *interval, budget, cfg.eta)?;
                    let c = refined.estimate;
                    let x_minus = interval.left().max(c - cfg.eta);
                    let x_plus = interval.right().min(c + cfg.eta);
                    let check = verify_cp_with(env, x_minus, x_plus, delta_k, budget, cfg.verify_constant)?;
                    ledger.shb_queries.push(refined.queries);
                    ledger.verify_queries.push(check.queries);
                    all_ok &= check.detection;
                    found.push(c);
                    if let Some(st) = stage_trace.as_mut() {
                        st.candidates.push(CandidateTrace {
                            interval: *interval,
                            delta_hat,
                            budget,
                            shb: refined,
                            verify_points: (x_minus, x_plus),
                            verify: check,
                        });
                    }
                }
                ledger.all_verified = all_ok;
                if all_ok {
                    estimates = Some(found);
                }
            }
            if let Some(st) = stage_trace.as_mut() {
                st.jumps = Some(jumps);
            }
        }
        if let Some(mut st) = stage_trace {
            st.detection = detection;
            trace.push(st);
        }

        let spent = env.queries_used() - stage_start;
        if ledger.total() != spent {
            return Err(CpError::Invariant(format!(
                "stage {k} ledger records {} queries but the environment counted {spent}",
                ledger.total()
            )));
        }
        ledgers.push(ledger);

        if let Some(mut found) = estimates {
            found.sort_by(f64::total_cmp);
            return Ok(RunReport {
                estimates: found,
                total_budget: env.queries_used() - start,
                stop_stage: k,
                status: RunStatus::Certified,
                ledgers,
                success: None,
                trace,
            });
        }
        k += 1;
    }

    Ok(RunReport {
        estimates: Vec::new(),
        total_budget: env.queries_used() - start,
        stop_stage: cfg.max_stage,
        status: RunStatus::StageCapReached,
        ledgers,
        success: None,
        trace,
    })
}
