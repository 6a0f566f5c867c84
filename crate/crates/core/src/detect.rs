// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiscale dyadic endpoint testing.
//!
//! At depth `d` the unit interval is cut into `2^d` dyadic cells, every cell
//! endpoint is sampled `T_d` times, and a cell is flagged when the difference
//! of its endpoint means exceeds `beta_d`. Flagged cells are merged across
//! depths, and a finer flag evicts any coarser cell that contains it.

use serde::Serialize;

use crate::environment::{Environment, Interval};
use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionConfig {
    pub delta: f64,
    pub budget: u64,
}

impl DetectionConfig {
    pub fn new(delta: f64, budget: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(param("delta", format!("{delta} not in (0, 1)")));
        }
        if budget < 1 {
            return Err(param("budget", "must be at least 1"));
        }
        Ok(Self { delta, budget })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthPlan {
    pub depth: u32,
    pub cells: u64,
    pub samples_per_endpoint: u64,
    /// `+inf` when `samples_per_endpoint == 0`.
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
}

fn serialize_threshold<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthSchedule {
    pub max_depth: u32,
    pub depths: Vec<DepthPlan>,
}

impl DepthSchedule {
    pub fn total_queries(&self) -> u64 {
        self.depths
            .iter()
            .map(|p| p.samples_per_endpoint * (p.cells + 1))
            .sum()
    }
}

/// Depth and per-depth sampling plan for a budget `budget` at level `delta`.
///
/// `max_depth = floor(log2(budget / ln(1/delta)))`; an empty schedule means no
/// depth is affordable.
pub fn depth_schedule(budget: u64, delta: f64) -> DepthSchedule {
    let ratio = budget as f64 / (1.0 / delta).ln();
    let raw = ratio.log2().floor();
    if !(raw >= 1.0) {
        return DepthSchedule {
            max_depth: 0,
            depths: Vec::new(),
        };
    }
    // depth beyond 62 would overflow the cell count; such budgets are not representable anyway
    let max_depth = raw.min(62.0) as u32;
    let depths = (1..=max_depth)
        .map(|depth| {
            let cells = 1u64 << depth;
            let samples = budget / (max_depth as u64 * (cells + 1));
            let threshold = if samples == 0 {
                f64::INFINITY
            } else {
                ((8.0 / samples as f64)
                    * (2.0 * max_depth as f64 * (cells + 1) as f64 / delta).ln())
                .sqrt()
            };
            DepthPlan {
                depth,
                cells,
                samples_per_endpoint: samples,
                threshold,
            }
        })
        .collect();
    DepthSchedule { max_depth, depths }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthStats {
    #[serde(flatten)]
    pub plan: DepthPlan,
    /// Indices `i` of flagged cells `[(i-1)/2^d, i/2^d]`.
    pub flagged: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionResult {
    /// Sorted by left endpoint; interiors pairwise disjoint.
    pub intervals: Vec<Interval>,
    pub per_depth: Vec<DepthStats>,
    pub queries: u64,
}

pub fn detect_intervals(env: &mut Environment, cfg: &DetectionConfig) -> Result<DetectionResult> {
    let start = env.queries_used();
    let schedule = depth_schedule(cfg.budget, cfg.delta);
    let mut intervals: Vec<Interval> = Vec::new();
    let mut per_depth = Vec::with_capacity(schedule.depths.len());

    for plan in schedule.depths {
        let mut flagged = Vec::new();
        if plan.samples_per_endpoint > 0 {
            let n = plan.cells as f64;
            let mut means = Vec::with_capacity(plan.cells as usize + 1);
            for i in 0..=plan.cells {
                means.push(env.sample_mean(i as f64 / n, plan.samples_per_endpoint)?);
            }
            for i in 1..=plan.cells {
                if (means[i as usize] - means[i as usize - 1]).abs() > plan.threshold {
                    let cell = Interval::dyadic(plan.depth, i - 1)?;
                    insert_pruned(&mut intervals, cell);
                    flagged.push(i);
                }
            }
        }
        per_depth.push(DepthStats { plan, flagged });
    }

    Ok(DetectionResult {
        intervals,
        per_depth,
        queries: env.queries_used() - start,
    })
}

/// Drop every stored interval that contains `cell`, then insert `cell`
/// keeping the list sorted by left endpoint.
fn insert_pruned(intervals: &mut Vec<Interval>, cell: Interval) {
    intervals.retain(|existing| !existing.contains(&cell));
    let at = intervals.partition_point(|i| i.left() < cell.left());
    intervals.insert(at, cell);
}
