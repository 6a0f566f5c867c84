// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion, followed by the
//! sub-checks behind it, and exits nonzero if any criterion fails.
//!
//! Statistical criteria use a three-sigma binomial slack,
//! `3 sqrt(p (1 - p) / n)`, around the nominal rate `p`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cpbandit::complexity::profile;
use cpbandit::detect::{depth_schedule, detect_intervals, DetectionConfig};
use cpbandit::environment::{Environment, Interval, NoiseModel, StepFunction};
use cpbandit::harness::{
    run_experiment, run_experiment_with_threads, score_success, ExperimentSpec, InstanceGenerator, Sweep,
    SweepParam, SweepResult,
};
use cpbandit::jumps::estimate_jumps;
use cpbandit::lcp::{allocation, allocation_proportions, localize, stage_delta, LcpConfig, StageLedger};
use cpbandit::shb::{shb, shb_depth, sufficient_budget};
use cpbandit::verify::{power_budget, verify_cp, verify_threshold, DEFAULT_THRESHOLD_CONSTANT};

const GAUSS: NoiseModel = NoiseModel::Gaussian { sigma: 1.0 };

struct Criterion {
    name: &'static str,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion { name, checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((ok, detail.into()));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(ok, _)| *ok)
    }
}

fn slack(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn canonical() -> StepFunction {
    StepFunction::new(0.0, vec![0.3, 0.55], vec![1.0, -1.0]).unwrap()
}

fn two_cp_spec(name: &str, param: SweepParam, values: Vec<f64>, algo: LcpConfig, mc_runs: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        name: name.to_string(),
        generator: InstanceGenerator::TwoChangePoints { spacing: 0.25, jump: 1.0 },
        sweep: Sweep { param, values },
        mc_runs,
        algo,
        master_seed: seed,
        noise: GAUSS,
        explore_tracks_delta: false,
    }
}

fn means(result: &SweepResult) -> Vec<f64> {
    result.rows.iter().map(|r| r.mean_budget).collect()
}

fn correctness_rate() -> Criterion {
    let mut c = Criterion::new("correctness rate");
    let eta = 2f64.powi(-8);
    let spec = two_cp_spec("correctness", SweepParam::Eta, vec![eta], LcpConfig::new(2, 0.05, eta, 0.25), 500, 0xC0FFEE);
    match run_experiment(&spec) {
        Ok(res) => {
            let row = &res.rows[0];
            let floor = 0.95 - slack(0.05, 500);
            c.check(
                row.success_rate >= floor,
                format!(
                    "success {:.3} >= {floor:.3} over {} seeds ({} uncertified)",
                    row.success_rate, row.mc_runs, row.uncertified_runs
                ),
            );
        }
        Err(e) => c.check(false, format!("sweep failed: {e}")),
    }
    c
}

fn spacing_trend() -> Criterion {
    let mut c = Criterion::new("spacing trend");
    let values = vec![2f64.powi(-6), 2f64.powi(-4), 2f64.powi(-2)];
    let spec = two_cp_spec(
        "spacing",
        SweepParam::Spacing,
        values,
        LcpConfig::new(2, 0.05, 2f64.powi(-9), 1.0),
        200,
        0x5EED_0001,
    );
    match run_experiment(&spec) {
        Ok(res) => {
            let m = means(&res);
            c.check(m.windows(2).all(|w| w[0] > w[1]), format!("means {m:.0?} strictly decreasing"));
            let ratio = m[0] / m[2];
            c.check(ratio >= 4.0, format!("mean(2^-6)/mean(2^-2) = {ratio:.2} >= 4"));
        }
        Err(e) => c.check(false, format!("sweep failed: {e}")),
    }
    c
}

fn precision_trend() -> Criterion {
    let mut c = Criterion::new("precision trend");
    let values = vec![2f64.powi(-5), 2f64.powi(-8), 2f64.powi(-11)];
    let spec = two_cp_spec(
        "precision",
        SweepParam::Eta,
        values,
        LcpConfig::new(2, 0.05, 2f64.powi(-5), 1.0),
        200,
        0x5EED_0003,
    );
    match run_experiment(&spec) {
        Ok(res) => {
            let m = means(&res);
            let ratio = m[2] / m[0];
            c.check(ratio <= 3.0, format!("means {m:.0?}; mean(2^-11)/mean(2^-5) = {ratio:.2} <= 3"));
        }
        Err(e) => c.check(false, format!("sweep failed: {e}")),
    }
    c
}

fn confidence_trend() -> Criterion {
    let mut c = Criterion::new("confidence trend");
    let mut spec = two_cp_spec(
        "confidence",
        SweepParam::LogInvDelta,
        vec![3.0, 6.0, 9.0],
        LcpConfig::new(2, 0.05, 2f64.powi(-8), 0.05),
        200,
        0x5EED_0002,
    );
    spec.explore_tracks_delta = true;
    match run_experiment(&spec) {
        Ok(res) => {
            let m = means(&res);
            c.check(m.windows(2).all(|w| w[0] <= w[1]), format!("means {m:.0?} nondecreasing in ln(1/delta)"));
        }
        Err(e) => c.check(false, format!("sweep failed: {e}")),
    }
    c
}

fn rate(trials: usize, hit: impl Fn(u64) -> bool + Sync) -> f64 {
    let hits = (0..trials as u64).into_par_iter().filter(|&s| hit(s)).count();
    hits as f64 / trials as f64
}

fn null_power_suites() -> Criterion {
    let mut c = Criterion::new("subroutine null/power suites");
    let delta = 0.05;
    let flat = StepFunction::constant(0.0).unwrap();
    let step = StepFunction::new(0.0, vec![0.4], vec![1.0]).unwrap();

    let n = 2000;
    let fp = rate(n, |s| {
        let mut env = Environment::new(flat.clone(), GAUSS, s);
        verify_cp(&mut env, 0.3, 0.55, delta, 128).unwrap().detection
    });
    let bound = delta + slack(delta, n);
    c.check(fp <= bound, format!("verify false positive {fp:.4} <= {bound:.4} (T=128, {n} trials)"));

    let t = power_budget(1.0, delta).ceil() as u64;
    let power = rate(n, |s| {
        let mut env = Environment::new(step.clone(), GAUSS, s);
        verify_cp(&mut env, 0.3, 0.55, delta, t).unwrap().detection
    });
    let floor = 1.0 - delta - slack(delta, n);
    c.check(power >= floor, format!("verify power {power:.4} >= {floor:.4} (T={t}, {n} trials)"));

    let n = 1000;
    let cfg = DetectionConfig::new(delta, 1 << 14).unwrap();
    let fp = rate(n, |s| {
        let mut env = Environment::new(flat.clone(), GAUSS, s);
        !detect_intervals(&mut env, &cfg).unwrap().intervals.is_empty()
    });
    let bound = delta + slack(delta, n);
    c.check(fp <= bound, format!("detect false positive {fp:.4} <= {bound:.4} (T=2^14, {n} seeds)"));

    let n = 500;
    let eta = 2f64.powi(-10);
    let iv = Interval::new(0.25, 0.5).unwrap();
    let t = sufficient_budget(1.0, delta, iv.len(), eta).ceil() as u64;
    let ok = rate(n, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let x = rng.random_range(0.25..0.5);
        let f = StepFunction::new(0.0, vec![x], vec![1.0]).unwrap();
        let mut env = Environment::new(f, GAUSS, s ^ 0xA5A5);
        (shb(&mut env, iv, t, eta).unwrap().estimate - x).abs() <= eta
    });
    let floor = 1.0 - delta - slack(delta, n);
    c.check(ok >= floor, format!("shb success {ok:.4} >= {floor:.4} (T={t}, {n} seeds)"));

    let (n, delta) = (500, 0.1);
    let f = StepFunction::new(0.0, vec![0.3, 0.6], vec![1.0, 0.5]).unwrap();
    let ivs = [Interval::new(0.25, 0.375).unwrap(), Interval::new(0.5, 0.75).unwrap()];
    let ok = rate(n, |s| {
        let mut env = Environment::new(f.clone(), GAUSS, s);
        let res = estimate_jumps(&mut env, &ivs, delta, 1_000_000, 2).unwrap();
        res.accepted.len() == 2
            && res.accepted.iter().all(|e| {
                let truth = f.interval_jump(e.interval).abs();
                e.delta_hat >= truth * 2.0 / 3.0 && e.delta_hat <= 2.0 * truth
            })
    });
    let floor = 1.0 - delta - slack(delta, n);
    c.check(ok >= floor, format!("jump estimates within [2/3, 2] x truth: {ok:.4} >= {floor:.4} ({n} seeds)"));
    c
}

fn zero_noise_oracle() -> Criterion {
    let mut c = Criterion::new("zero-noise oracle suite");
    let f = canonical();
    let truth = f.change_points().to_vec();
    let (delta, eta) = (0.05, 2f64.powi(-8));

    let mut env = Environment::new(f.clone(), NoiseModel::Zero, 0);
    let det = detect_intervals(&mut env, &DetectionConfig::new(delta, 1 << 20).unwrap()).unwrap();
    let holders: Vec<usize> = truth
        .iter()
        .map(|&x| det.intervals.iter().filter(|i| i.contains_point(x)).count())
        .collect();
    c.check(
        det.intervals.len() == 2 && holders == [1, 1] && det.intervals.iter().all(|i| f.change_points_in(*i) == 1),
        format!("detect: {:?} each holding exactly one change point", det.intervals),
    );
    c.check(
        det.intervals.iter().all(|i| i.len() <= 0.125),
        "detect: every returned interval no longer than s/2 = 1/8",
    );

    let jumps = estimate_jumps(&mut env, &det.intervals, delta, 100_000, 2).unwrap();
    let exact = jumps.accepted.len() == 2
        && jumps.accepted.iter().all(|e| e.delta_hat == f.interval_jump(e.interval).abs() && e.delta_hat == 1.0);
    c.check(exact, format!("jumps: delta_hats {:?} exactly 1", jumps.accepted.iter().map(|e| e.delta_hat).collect::<Vec<_>>()));

    let mut estimates = Vec::new();
    for iv in &det.intervals {
        let x = truth.iter().copied().find(|&x| iv.contains_point(x)).unwrap();
        let out = shb(&mut env, *iv, 10_000, eta).unwrap();
        c.check((out.estimate - x).abs() <= eta, format!("shb on {iv:?}: |{:.6} - {x}| <= eta", out.estimate));
        let (lo, hi) = ((out.estimate - eta).max(iv.left()), (out.estimate + eta).min(iv.right()));
        let v = verify_cp(&mut env, lo, hi, delta, 128).unwrap();
        c.check(v.detection && v.statistic == 1.0, format!("verify at ({lo:.6}, {hi:.6}): statistic {}", v.statistic));
        estimates.push(out.estimate);
    }

    let mut env = Environment::new(f.clone(), NoiseModel::Zero, 0);
    let report = localize(&mut env, &LcpConfig::new(2, delta, eta, 0.25)).unwrap();
    let within = report.estimates.len() == 2
        && report.estimates.iter().zip(&truth).all(|(c, x)| (c - x).abs() <= eta);
    c.check(
        report.certified() && within && report.stop_stage <= 14,
        format!("lcp: estimates {:?} at stage {}", report.estimates, report.stop_stage),
    );
    c
}

fn arithmetic_golden() -> Criterion {
    let mut c = Criterion::new("arithmetic golden values");
    let sched = depth_schedule(1024, 0.05);
    c.check(sched.max_depth == 8, format!("d_max(1024, 0.05) = {}", sched.max_depth));
    let beta1 = sched.depths.iter().find(|p| p.depth == 1).map_or(f64::NAN, |p| p.threshold);
    c.check((beta1 - 1.1437).abs() <= 1e-3, format!("beta_1(1024, 0.05) = {beta1:.6}"));
    let tv = verify_threshold(128, 0.05, DEFAULT_THRESHOLD_CONSTANT);
    c.check((tv - 0.6791).abs() <= 1e-3, format!("verify threshold(128, 0.05) = {tv:.6}"));
    let d4 = stage_delta(0.05, 2, 4);
    c.check((d4 - 2.3747e-4).abs() <= 1e-7, format!("stage delta(0.05, N=2, k=4) = {d4:.6e}"));
    let depth = shb_depth(0.5, 2f64.powi(-8));
    c.check(depth == 30, format!("shb d_max(0.5, 2^-8) = {depth}"));
    let lb = profile(&canonical()).unwrap().lower_bound_quantile(0.05, 2f64.powi(-8)).unwrap();
    c.check((lb - 3.2189).abs() <= 1e-3, format!("quantile lower bound = {lb:.6}"));
    c
}

fn random_instance(rng: &mut ChaCha8Rng, max_m: usize) -> StepFunction {
    loop {
        let m = rng.random_range(1..=max_m);
        let mut cps: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.99)).collect();
        cps.sort_by(f64::total_cmp);
        let jumps = (0..m)
            .map(|_| rng.random_range(0.2..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        if let Ok(f) = StepFunction::new(0.0, cps, jumps) {
            return f;
        }
    }
}

/// Every injective assignment of estimates to change points, by exhaustion.
fn brute_force_match(estimates: &[f64], truth: &[f64], eta: f64) -> bool {
    fn go(est: &[f64], truth: &[f64], used: &mut Vec<bool>, eta: f64) -> bool {
        let Some((&c, rest)) = est.split_first() else { return true };
        for j in 0..truth.len() {
            if !used[j] && (c - truth[j]).abs() <= eta {
                used[j] = true;
                if go(rest, truth, used, eta) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    go(estimates, truth, &mut vec![false; truth.len()], eta)
}

fn structural_properties() -> Criterion {
    let mut c = Criterion::new("structural properties");

    let violations: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let f = random_instance(&mut rng, 5);
            let budget = 1u64 << rng.random_range(10..=17);
            let mut env = Environment::new(f, GAUSS, s);
            let det = detect_intervals(&mut env, &DetectionConfig::new(0.05, budget).unwrap()).unwrap();
            let bad = det.intervals.windows(2).any(|w| w[0].right() > w[1].left())
                || det
                    .intervals
                    .iter()
                    .enumerate()
                    .any(|(i, a)| det.intervals.iter().enumerate().any(|(j, b)| i != j && a.contains(b)));
            bad.then(|| format!("seed {s}: {:?}", det.intervals))
        })
        .collect();
    c.check(
        violations.is_empty(),
        format!("detection disjoint and anti-nested on 1000 randomized runs ({} violations)", violations.len()),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut sum_err, mut scale_err, mut over_budget) = (0f64, 0f64, 0usize);
    for _ in 0..2000 {
        let n = rng.random_range(1..=8);
        let hats: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
        let alpha = allocation_proportions(&hats).unwrap();
        sum_err = sum_err.max((alpha.iter().sum::<f64>() - 1.0).abs());
        for lambda in [1e-3, 0.5, 7.0, 1e3] {
            let scaled: Vec<f64> = hats.iter().map(|h| h * lambda).collect();
            let beta = allocation_proportions(&scaled).unwrap();
            let e = alpha.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            scale_err = scale_err.max(e);
        }
        let budget = 1u64 << rng.random_range(4..=20);
        if allocation(&hats, budget).unwrap().iter().sum::<u64>() > budget + n as u64 {
            over_budget += 1;
        }
    }
    c.check(sum_err <= 1e-12, format!("allocation |sum alpha - 1| max {sum_err:.2e} <= 1e-12"));
    c.check(scale_err <= 1e-12, format!("allocation scale invariance max deviation {scale_err:.2e} <= 1e-12"));
    c.check(over_budget == 0, "allocation never exceeds stage budget plus one per interval");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut mismatches, mut positives, mut cases) = (0usize, 0usize, 0usize);
    for _ in 0..20_000 {
        let f = random_instance(&mut rng, 6);
        let truth = f.change_points();
        let n = rng.random_range(1..=truth.len());
        let eta = rng.random_range(0.005..0.1);
        let mut est: Vec<f64> = (0..n)
            .map(|_| {
                let x = truth[rng.random_range(0..truth.len())];
                (x + rng.random_range(-1.5 * eta..1.5 * eta)).clamp(0.0, 1.0)
            })
            .collect();
        est.sort_by(f64::total_cmp);
        let greedy = score_success(&est, &f, eta);
        let brute = brute_force_match(&est, truth, eta);
        mismatches += usize::from(greedy != brute);
        positives += usize::from(brute);
        cases += 1;
    }
    c.check(
        mismatches == 0 && positives > 0 && positives < cases,
        format!("greedy == brute force on {cases} cases with m <= 6 ({positives} matchable, {mismatches} mismatches)"),
    );

    let open: Vec<String> = (0..300u64)
        .into_par_iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xF00D);
            let f = random_instance(&mut rng, 3);
            let n = rng.random_range(1..=f.num_change_points());
            let mut env = Environment::new(f, GAUSS, s);
            let cfg = LcpConfig::new(n, 0.05, 2f64.powi(-7), 0.25);
            let report = localize(&mut env, &cfg).unwrap();
            let ledgers: u64 = report.ledgers.iter().map(StageLedger::total).sum();
            (env.queries_used() != report.total_budget || ledgers != report.total_budget)
                .then(|| format!("seed {s}: env {} report {} ledgers {ledgers}", env.queries_used(), report.total_budget))
        })
        .collect();
    c.check(open.is_empty(), format!("budget ledger closes on 300 randomized runs ({} open)", open.len()));

    let spec = two_cp_spec(
        "determinism",
        SweepParam::Spacing,
        vec![0.0625, 0.25],
        LcpConfig::new(2, 0.05, 2f64.powi(-8), 0.25),
        64,
        42,
    );
    let csvs: Vec<String> = [1, 2, 4, 8, 4]
        .iter()
        .map(|&t| run_experiment_with_threads(&spec, t).unwrap().csv_string().unwrap())
        .collect();
    c.check(
        csvs.windows(2).all(|w| w[0] == w[1]),
        "identical CSV bytes for 1, 2, 4, 8 threads and a repeated 4-thread run",
    );
    c
}

fn main() -> ExitCode {
    let suites: [fn() -> Criterion; 8] = [
        correctness_rate,
        spacing_trend,
        precision_trend,
        confidence_trend,
        null_power_suites,
        zero_noise_oracle,
        arithmetic_golden,
        structural_properties,
    ];
    let mut failed = 0;
    for run in suites {
        let started = Instant::now();
        let crit = run();
        let verdict = if crit.passed() { "PASS" } else { "FAIL" };
        failed += usize::from(!crit.passed());
        println!("{verdict} {} ({:.1}s)", crit.name, started.elapsed().as_secs_f64());
        for (ok, detail) in &crit.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "!!" });
        }
    }
    println!("{} of {} criteria passed", suites.len() - failed, suites.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
