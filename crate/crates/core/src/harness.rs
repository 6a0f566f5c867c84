// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte-Carlo sweeps over instance families.
//!
//! Replicate `r` draws its instance and its noise from streams derived from
//! `(master_seed, r)` only, so every sweep value sees the same instance draws
//! and results are identical for any worker count.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, NoiseModel, StepFunction};
use crate::error::{param, CpError, Result};
use crate::lcp::{localize, LcpConfig, StageLedger};

pub const DEFAULT_MC_RUNS: usize = 200;
pub const CSV_HEADER: [&str; 8] = [
    "sweep_param",
    "sweep_value",
    "mean_budget",
    "q05",
    "q95",
    "success_rate",
    "mc_runs",
    "seed",
];
pub const OUTSIDE_REGIME_TAG: &str = "outside-theorem-regime";

const MAX_REDRAWS: usize = 10_000;

/// Parameterized instance family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceGenerator {
    /// `x1 ~ U(0, 1/2)`, `x2 = x1 + spacing`, jumps `+jump, -jump`.
    TwoChangePoints { spacing: f64, jump: f64 },
    /// `x1 ~ U(0, 1)` with jump `jump`.
    SingleChangePoint { jump: f64 },
    /// `count` change points at `i / (count + 1)`, jumps alternating `+jump, -jump, ...`.
    Alternating { count: usize, jump: f64 },
}

impl InstanceGenerator {
    pub fn num_change_points(&self) -> usize {
        match self {
            InstanceGenerator::TwoChangePoints { .. } => 2,
            InstanceGenerator::SingleChangePoint { .. } => 1,
            InstanceGenerator::Alternating { count, .. } => *count,
        }
    }

    /// One candidate draw; may be invalid (e.g. a change point at exactly 0).
    fn propose<R: Rng>(&self, rng: &mut R) -> Result<StepFunction> {
        match *self {
            InstanceGenerator::TwoChangePoints { spacing, jump } => {
                let x1 = 0.5 * rng.random::<f64>();
                StepFunction::new(0.0, vec![x1, x1 + spacing], vec![jump, -jump])
            }
            InstanceGenerator::SingleChangePoint { jump } => {
                StepFunction::new(0.0, vec![rng.random::<f64>()], vec![jump])
            }
            InstanceGenerator::Alternating { count, jump } => {
                let cps = (1..=count).map(|i| i as f64 / (count + 1) as f64).collect();
                let jumps = (0..count).map(|i| if i % 2 == 0 { jump } else { -jump }).collect();
                StepFunction::new(0.0, cps, jumps)
            }
        }
    }

    /// Draw a valid instance, redrawing invalid proposals. Returns the number
    /// of rejected proposals alongside the instance.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Result<(StepFunction, usize)> {
        for rejected in 0..MAX_REDRAWS {
            if let Ok(f) = self.propose(rng) {
                return Ok((f, rejected));
            }
        }
        Err(CpError::InvalidInstance(format!(
            "generator {self:?} produced no valid instance in {MAX_REDRAWS} draws"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Spacing of the two-change-point family.
    Spacing,
    Eta,
    /// `ln(1 / delta)`.
    LogInvDelta,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Spacing => "spacing",
            SweepParam::Eta => "eta",
            SweepParam::LogInvDelta => "log_inv_delta",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub generator: InstanceGenerator,
    pub sweep: Sweep,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    pub algo: LcpConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Set `delta_explore = delta` for every sweep value.
    #[serde(default)]
    pub explore_tracks_delta: bool,
}

fn default_mc_runs() -> usize {
    DEFAULT_MC_RUNS
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 {
            return Err(param("mc_runs", "must be at least 1"));
        }
        if self.sweep.values.is_empty() {
            return Err(param("sweep.values", "must not be empty"));
        }
        self.noise.validate()?;
        if self.sweep.param == SweepParam::Spacing
            && !matches!(self.generator, InstanceGenerator::TwoChangePoints { .. })
        {
            return Err(param("sweep.param", "spacing sweeps need the two_change_points generator"));
        }
        if self.algo.n_targets > self.generator.num_change_points() {
            return Err(param(
                "algo.n_targets",
                format!(
                    "{} exceeds the {} change points of the generator",
                    self.algo.n_targets,
                    self.generator.num_change_points()
                ),
            ));
        }
        for &v in &self.sweep.values {
            let (generator, cfg) = self.instantiate(v)?;
            cfg.validate()?;
            if let InstanceGenerator::TwoChangePoints { spacing, .. } = generator {
                if !(spacing > 0.0 && spacing <= 0.5) {
                    return Err(param("spacing", format!("{spacing} not in (0, 1/2]")));
                }
            }
        }
        Ok(())
    }

    /// Generator and algorithm configuration for one sweep value.
    pub fn instantiate(&self, value: f64) -> Result<(InstanceGenerator, LcpConfig)> {
        let mut generator = self.generator.clone();
        let mut cfg = self.algo;
        match self.sweep.param {
            SweepParam::Spacing => match &mut generator {
                InstanceGenerator::TwoChangePoints { spacing, .. } => *spacing = value,
                _ => return Err(param("sweep.param", "spacing sweep on a non-spacing generator")),
            },
            SweepParam::Eta => cfg.eta = value,
            SweepParam::LogInvDelta => cfg.delta = (-value).exp(),
        }
        if self.explore_tracks_delta {
            cfg.delta_explore = cfg.delta;
        }
        Ok((generator, cfg))
    }
}

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub budget: u64,
    pub success: bool,
    pub certified: bool,
    pub stop_stage: u32,
    pub rejected_draws: usize,
    pub runtime_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub mean_budget: f64,
    pub q05_budget: u64,
    pub q95_budget: u64,
    pub success_rate: f64,
    pub mean_runtime: f64,
    pub mc_runs: usize,
    pub seed: u64,
    pub rejected_draws: usize,
    pub uncertified_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub name: String,
    pub rows: Vec<SweepRow>,
    pub tags: Vec<String>,
}

impl SweepResult {
    pub fn row(&self, value: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.sweep_value == value)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.sweep_param.name().to_string(),
                r.sweep_value.to_string(),
                r.mean_budget.to_string(),
                r.q05_budget.to_string(),
                r.q95_budget.to_string(),
                r.success_rate.to_string(),
                r.mc_runs.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| CpError::Invariant(e.to_string()))
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master_seed`.
pub fn replicate_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Nearest-rank quantile at `percent` of an ascending slice.
pub fn nearest_rank(sorted: &[u64], percent: usize) -> u64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

/// Whether the (sorted) estimates hit `N` distinct true change points within
/// `eta`, with the matched indices increasing. Greedy on sorted sequences.
pub fn score_success(estimates: &[f64], truth: &StepFunction, eta: f64) -> bool {
    let mut sorted = estimates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cps = truth.change_points();
    let mut next = 0;
    for &c in &sorted {
        while next < cps.len() && cps[next] < c - eta {
            next += 1;
        }
        if next < cps.len() && (cps[next] - c).abs() <= eta {
            next += 1;
        } else {
            return false;
        }
    }
    true
}

pub fn run_replicate(
    spec: &ExperimentSpec,
    generator: &InstanceGenerator,
    cfg: &LcpConfig,
    replicate: usize,
) -> Result<ReplicateRecord> {
    let seed = replicate_seed(spec.master_seed, replicate as u64);
    let mut instance_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x1));
    let (f, rejected_draws) = generator.draw(&mut instance_rng)?;
    let truth = Arc::new(f);
    let mut env = Environment::new(Arc::clone(&truth), spec.noise, splitmix64(seed ^ 0x2));
    let started = Instant::now();
    let mut report = localize(&mut env, cfg)?;
    let runtime_secs = started.elapsed().as_secs_f64();

    let ledger_total: u64 = report.ledgers.iter().map(StageLedger::total).sum();
    if env.queries_used() != report.total_budget || ledger_total != report.total_budget {
        return Err(CpError::Invariant(format!(
            "replicate {replicate}: environment counted {} queries, report {}, ledgers {ledger_total}",
            env.queries_used(),
            report.total_budget
        )));
    }
    let certified = report.certified();
    let success = certified && score_success(&report.estimates, &truth, cfg.eta);
    report.success = Some(success);
    Ok(ReplicateRecord {
        replicate,
        budget: report.total_budget,
        success,
        certified,
        stop_stage: report.stop_stage,
        rejected_draws,
        runtime_secs,
    })
}

/// Every replicate at one sweep value, in replicate order.
pub fn run_sweep_value(spec: &ExperimentSpec, value: f64) -> Result<Vec<ReplicateRecord>> {
    let (generator, cfg) = spec.instantiate(value)?;
    (0..spec.mc_runs)
        .into_par_iter()
        .map(|r| run_replicate(spec, &generator, &cfg, r))
        .collect()
}

pub fn aggregate(param: SweepParam, value: f64, seed: u64, records: &[ReplicateRecord]) -> SweepRow {
    let n = records.len();
    let mut budgets: Vec<u64> = records.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    let mean_budget = records.iter().map(|r| r.budget as f64).sum::<f64>() / n as f64;
    SweepRow {
        sweep_param: param,
        sweep_value: value,
        mean_budget,
        q05_budget: nearest_rank(&budgets, 5),
        q95_budget: nearest_rank(&budgets, 95),
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n as f64,
        mean_runtime: records.iter().map(|r| r.runtime_secs).sum::<f64>() / n as f64,
        mc_runs: n,
        seed,
        rejected_draws: records.iter().map(|r| r.rejected_draws).sum(),
        uncertified_runs: records.iter().filter(|r| !r.certified).count(),
    }
}

/// Run the whole sweep on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.sweep.values.len());
    let mut outside = false;
    for &value in &spec.sweep.values {
        let (_, cfg) = spec.instantiate(value)?;
        outside |= !cfg.in_guarantee_regime();
        let records = run_sweep_value(spec, value)?;
        rows.push(aggregate(spec.sweep.param, value, spec.master_seed, &records));
    }
    let mut tags = Vec::new();
    if outside {
        tags.push(OUTSIDE_REGIME_TAG.to_string());
    }
    if !spec.noise.is_unit_subgaussian() {
        tags.push("noise-not-unit-subgaussian".to_string());
    }
    Ok(SweepResult {
        name: spec.name.clone(),
        rows,
        tags,
    })
}

/// Run the sweep on a dedicated pool with `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CpError::Invariant(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

pub const PRESETS: [&str; 7] = ["exp1", "exp2", "exp3", "exp4", "exp5", "exp5-eta2", "exp5-eta3"];

/// Full-scale experiment settings.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let two = |spacing| InstanceGenerator::TwoChangePoints { spacing, jump: 1.0 };
    let ten = InstanceGenerator::Alternating { count: 10, jump: 1.0 };
    let spec = |name: &str, generator, param, values: Vec<f64>, mc_runs, algo| ExperimentSpec {
        name: name.to_string(),
        generator,
        sweep: Sweep { param, values },
        mc_runs,
        algo,
        master_seed: 0,
        noise: NoiseModel::Gaussian { sigma: 1.0 },
        explore_tracks_delta: false,
    };
    let exp5 = |i: i32| {
        spec(
            name,
            ten.clone(),
            SweepParam::LogInvDelta,
            vec![20.0, 40.0, 60.0, 80.0, 100.0],
            100,
            LcpConfig::new(10, 0.05, 0.0025 * 2f64.powi(-i), 1.0),
        )
    };
    Ok(match name {
        "exp1" => spec(
            name,
            two(0.25),
            SweepParam::Spacing,
            (2..=6).rev().map(|i| 2f64.powi(-i)).collect(),
            1000,
            LcpConfig::new(2, 0.05, 2f64.powi(-11), 1.0),
        ),
        "exp2" => spec(
            name,
            two(0.25),
            SweepParam::LogInvDelta,
            (2..=12).map(|i| 10.0 * i as f64).collect(),
            1000,
            LcpConfig::new(2, 0.05, 2f64.powi(-8), 1.0),
        ),
        "exp3" => spec(
            name,
            two(0.25),
            SweepParam::Eta,
            (5..=11).map(|i| 2f64.powi(-i)).collect(),
            1000,
            LcpConfig::new(2, 0.05, 2f64.powi(-8), 1.0),
        ),
        "exp4" => spec(
            name,
            InstanceGenerator::SingleChangePoint { jump: 1.0 },
            SweepParam::LogInvDelta,
            (2..=12).map(|i| 10.0 * i as f64).collect(),
            1000,
            LcpConfig::new(1, 0.05, 2f64.powi(-7), 1.0),
        ),
        "exp5" => exp5(1),
        "exp5-eta2" => exp5(2),
        "exp5-eta3" => exp5(3),
        other => return Err(CpError::UnknownPreset(other.to_string())),
    })
}
