// SPDX-License-Identifier: MIT OR Apache-2.0

//! `cpbandit`: command-line front end for change-point localization.
//!
//! Every subcommand reads an instance JSON file
//! (`{"baseline", "change_points", "jumps", "noise", "seed"}`) except
//! `experiment`, which takes a preset name or an experiment spec file.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cpbandit::baseline::{uniform_batch_baseline, uniform_threshold};
use cpbandit::complexity::NEARBY_INSTANCE_NOTE;
use cpbandit::harness::{preset, run_experiment, run_experiment_with_threads, PRESETS};
use cpbandit::lcp::localize_traced;
use cpbandit::verify::{verify_cp_with, DEFAULT_THRESHOLD_CONSTANT};
use cpbandit::{
    detect_intervals, estimate_jumps, localize, profile, score_success, shb, DetectionConfig, Environment,
    ExperimentSpec, InstanceFile, Interval, LcpConfig,
};

#[derive(Parser)]
#[command(name = "cpbandit", version, about = "Active localization of change points under bandit feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Instance {
    /// Instance JSON file.
    instance: PathBuf,
    /// Noise seed; overrides the seed in the instance file.
    #[arg(long)]
    seed: Option<u64>,
}

impl Instance {
    fn load(&self) -> Result<(InstanceFile, Environment)> {
        let file = InstanceFile::load(&self.instance)
            .with_context(|| format!("reading instance {}", self.instance.display()))?;
        let f = file.step_function()?;
        let env = Environment::new(f, file.noise, self.seed.unwrap_or(file.seed));
        Ok((file, env))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Complexity functionals and lower bounds.
    Complexity {
        instance: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eta: f64,
        /// Numerical constant for the expectation bound.
        #[arg(long, default_value_t = 1.0)]
        constant: f64,
    },
    /// Multiscale detection of intervals holding change points.
    Detect {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Adaptive jump estimation over candidate intervals.
    Jumps {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        delta: f64,
        /// Number of acceptances to stop at.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Candidate intervals as JSON, e.g. `[[0.25,0.5],[0.5,0.75]]`.
        /// Detection runs first when omitted.
        #[arg(long)]
        intervals: Option<String>,
        /// Detection budget when `--intervals` is omitted.
        #[arg(long)]
        detect_budget: Option<u64>,
    },
    /// Binary search with backtracking inside one interval; JSON lines.
    Shb {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        left: f64,
        #[arg(long)]
        right: f64,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        eta: f64,
    },
    /// Two-point change certificate.
    Verify {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        x_minus: f64,
        #[arg(long)]
        x_plus: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_CONSTANT)]
        constant: f64,
    },
    /// Full localization run.
    Run {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        delta_explore: f64,
        #[arg(long)]
        max_stage: Option<u32>,
        /// Include per-stage subroutine outputs.
        #[arg(long)]
        trace: bool,
    },
    /// Uniform grid baseline.
    BaselineUniform {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        grid_size: usize,
        #[arg(long)]
        reps: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Monte-Carlo sweep; writes the CSV and prints a JSON summary.
    Experiment {
        /// Preset name or experiment spec JSON file.
        spec: String,
        #[arg(long)]
        mc_runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn bound_or_error<T: serde::Serialize>(r: cpbandit::Result<T>) -> serde_json::Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn parse_intervals(text: &str) -> Result<Vec<Interval>> {
    let pairs: Vec<(f64, f64)> = serde_json::from_str(text).context("parsing --intervals")?;
    pairs
        .into_iter()
        .map(|(l, r)| Interval::new(l, r).map_err(Into::into))
        .collect()
}

fn load_spec(name: &str) -> Result<ExperimentSpec> {
    if PRESETS.contains(&name) {
        return Ok(preset(name)?);
    }
    let path = PathBuf::from(name);
    if !path.exists() {
        bail!("`{name}` is neither a preset ({}) nor a spec file", PRESETS.join(", "));
    }
    ExperimentSpec::load(&path).with_context(|| format!("reading spec {name}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Complexity { instance, delta, eta, constant } => {
            let file = InstanceFile::load(&instance)
                .with_context(|| format!("reading instance {}", instance.display()))?;
            let p = profile(&file.step_function()?)?;
            print_json(&json!({
                "profile": p,
                "lower_bound_quantile": bound_or_error(p.lower_bound_quantile(delta, eta)),
                "expectation_lower_bound": bound_or_error(p.expectation_lower_bound(delta, eta, constant)),
                "delta": delta,
                "eta": eta,
                "note": NEARBY_INSTANCE_NOTE,
            }))
        }
        Command::Detect { instance, budget, delta } => {
            let (_, mut env) = instance.load()?;
            print_json(&detect_intervals(&mut env, &DetectionConfig::new(delta, budget)?)?)
        }
        Command::Jumps { instance, budget, delta, n, intervals, detect_budget } => {
            let (_, mut env) = instance.load()?;
            let (candidates, detection) = match intervals {
                Some(text) => (parse_intervals(&text)?, None),
                None => {
                    let cfg = DetectionConfig::new(delta, detect_budget.unwrap_or(budget))?;
                    let det = detect_intervals(&mut env, &cfg)?;
                    (det.intervals.clone(), Some(det))
                }
            };
            if candidates.is_empty() {
                bail!("no candidate intervals: detection flagged nothing");
            }
            let result = estimate_jumps(&mut env, &candidates, delta, budget, n)?;
            print_json(&json!({ "detection": detection, "candidates": candidates, "estimation": result }))
        }
        Command::Shb { instance, left, right, budget, eta } => {
            let (_, mut env) = instance.load()?;
            let out = shb(&mut env, Interval::new(left, right)?, budget, eta)?;
            let mut stdout = io::stdout().lock();
            for round in &out.trace {
                serde_json::to_writer(&mut stdout, round)?;
                writeln!(stdout)?;
            }
            serde_json::to_writer(
                &mut stdout,
                &json!({
                    "estimate": out.estimate,
                    "queries": out.queries,
                    "early_exit": out.early_exit,
                    "underfunded": out.underfunded,
                    "max_depth": out.max_depth,
                    "samples_per_arm": out.samples_per_arm,
                }),
            )?;
            writeln!(stdout)?;
            Ok(())
        }
        Command::Verify { instance, x_minus, x_plus, delta, budget, constant } => {
            let (_, mut env) = instance.load()?;
            print_json(&verify_cp_with(&mut env, x_minus, x_plus, delta, budget, constant)?)
        }
        Command::Run { instance, n, delta, eta, delta_explore, max_stage, trace } => {
            let (_, mut env) = instance.load()?;
            let mut cfg = LcpConfig::new(n, delta, eta, delta_explore);
            if let Some(k) = max_stage {
                cfg.max_stage = k;
            }
            let mut report = if trace { localize_traced(&mut env, &cfg)? } else { localize(&mut env, &cfg)? };
            report.success = Some(report.certified() && score_success(&report.estimates, env.function(), eta));
            print_json(&report)
        }
        Command::BaselineUniform { instance, grid_size, reps, delta } => {
            let (_, mut env) = instance.load()?;
            let flagged = uniform_batch_baseline(&mut env, grid_size, reps, delta)?;
            print_json(&json!({
                "intervals": flagged,
                "threshold": uniform_threshold(grid_size, reps, delta),
                "queries": env.queries_used(),
            }))
        }
        Command::Experiment { spec, mc_runs, seed, out, threads } => {
            let mut spec = load_spec(&spec)?;
            if let Some(r) = mc_runs {
                spec.mc_runs = r;
            }
            if let Some(s) = seed {
                spec.master_seed = s;
            }
            let result = match threads {
                Some(t) => run_experiment_with_threads(&spec, t)?,
                None => run_experiment(&spec)?,
            };
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            result.write_csv(&mut w)?;
            w.flush()?;
            print_json(&json!({
                "name": result.name,
                "out": out,
                "tags": result.tags,
                "rejected_draws": result.rows.iter().map(|r| r.rejected_draws).sum::<usize>(),
                "rows": result.rows,
            }))
        }
    }
}
