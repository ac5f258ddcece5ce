//! Acceptance criteria A1 to A9 as runnable checks.

use serde::{Deserialize, Serialize};

use crate::adversary::{ConstantProductPool, MarketModel};
use crate::analysis::{binomial_pass_prob_exact, chernoff_pd_bound, singleton_plan, success_probability, two_thirds_threshold};
use crate::error::Result;
use crate::harness::complexity::{complexity_report, SweepSettings};
use crate::harness::config::{CensorshipConfig, ExperimentConfig, PathFilter};
use crate::harness::montecarlo::{monte_carlo_corruption, MonteCarloOptions};
use crate::harness::report::{run, RunReport};
use crate::routing::{Behavior, RevealPolicy};
use crate::types::{SystemParams, TimestampKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub passed: bool,
    pub summary: String,
}

impl CriterionResult {
    fn new(id: &str, passed: bool, summary: String) -> Self {
        CriterionResult { id: id.to_string(), passed, summary }
    }

    pub fn line(&self) -> String {
        format!("{} {} {}", self.id, if self.passed { "PASS" } else { "FAIL" }, self.summary)
    }
}

/// Scale knobs. [`Scale::full`] uses the pinned sizes; smaller scales are for smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub mc_trials: u64,
    pub fairness_txs: u32,
    pub fairness_seeds: u32,
    pub censor_txs: u32,
    pub censor_seeds: u32,
    pub victims: u32,
}

impl Scale {
    pub fn full() -> Self {
        Scale { mc_trials: 100_000, fairness_txs: 10_000, fairness_seeds: 50, censor_txs: 2_000, censor_seeds: 5, victims: 1_000 }
    }

    pub fn smoke() -> Self {
        Scale { mc_trials: 2_000, fairness_txs: 500, fairness_seeds: 2, censor_txs: 600, censor_seeds: 2, victims: 200 }
    }
}

const SEED: u64 = 0x5eed;

fn singleton_params(n: u32, k: u32) -> SystemParams {
    let mut p = SystemParams::new(n, 1, 1, k, 10, 1);
    p.paths_per_block = Some(n);
    p
}

/// Singleton plan numbers and client success by Monte Carlo.
pub fn a1(scale: &Scale) -> Result<CriterionResult> {
    let plan = singleton_plan(200, 1.2, 2.0 / 3.0, 1.0 / 3.0)?;
    let params = singleton_params(200, plan.k);
    let opts = MonteCarloOptions { client_paths: plan.retries, table_scan: false, allow_stress: false };
    let mc = monte_carlo_corruption(&params, opts, scale.mc_trials, SEED)?;
    let s = mc.client_success.expect("client estimate requested");
    let analytic = mc.analytic.success_hypergeometric;
    let plan_ok = plan.k == 11 && (0.566..=0.586).contains(&plan.success);
    let passed = plan_ok && s.contains(analytic);
    Ok(CriterionResult::new(
        "A1",
        passed,
        format!(
            "k={} L={} success={:.4}; f={} analytic at f/n={:.4}, MC={:.4} CI99=[{:.4},{:.4}] over {} trials",
            plan.k, plan.retries, plan.success, mc.f, analytic, s.estimate, s.lower, s.upper, s.trials
        ),
    ))
}

/// Eight-path success figure and its Monte Carlo check.
pub fn a2(scale: &Scale) -> Result<CriterionResult> {
    let closed = success_probability(0.25, 8);
    let mut params = SystemParams::new(180, 18, 12, 2, 10, 1);
    params.f = Some(60);
    params.paths_per_block = Some(180);
    let opts = MonteCarloOptions { client_paths: 8, table_scan: false, allow_stress: true };
    let mc = monte_carlo_corruption(&params, opts, scale.mc_trials, SEED)?;
    let s = mc.client_success.expect("client estimate requested");
    let a = &mc.analytic;
    let passed = (closed - 0.89989).abs() <= 1e-4 && (s.estimate - a.success_hypergeometric).abs() <= 0.02;
    Ok(CriterionResult::new(
        "A2",
        passed,
        format!(
            "closed form {:.5}; p_h exact {:.5} (binomial {:.5}), success exact {:.5} (binomial {:.5}), MC {:.5} over {} trials",
            closed, a.p_h_hypergeometric, a.p_h_binomial, a.success_hypergeometric, a.success_binomial, s.estimate, s.trials
        ),
    ))
}

/// Frequency of path tables holding a corrupted path stays under `n^-c`.
pub fn a3(scale: &Scale) -> Result<CriterionResult> {
    let (n, c) = (200u32, 1.2);
    let plan = singleton_plan(n, c, 2.0 / 3.0, 1.0 / 3.0)?;
    let params = singleton_params(n, plan.k);
    let opts = MonteCarloOptions { client_paths: 0, table_scan: true, allow_stress: false };
    let mc = monte_carlo_corruption(&params, opts, scale.mc_trials, SEED ^ 0xa3)?;
    let s = mc.some_corrupted.expect("table scan requested");
    let bound = (n as f64).powf(-c);
    Ok(CriterionResult::new(
        "A3",
        s.upper <= bound,
        format!(
            "k={} hits {}/{} freq {:.3e} upper99 {:.3e} <= bound {:.3e}; expectation {:.3e} at f/n, union bound {:.3e} at 1/3",
            plan.k, s.successes, s.trials, s.estimate, s.upper, bound, mc.analytic.corrupted_independent, plan.adversary_union_bound
        ),
    ))
}

fn fairness_config(scale: &Scale) -> ExperimentConfig {
    let mut p = SystemParams::new(64, 3, 2, 3, 10, 2);
    p.paths_per_block = Some(64);
    p.kappa = 0.0;
    let mut cfg = ExperimentConfig::new(p);
    cfg.block_interval = 50;
    cfg.workload.transactions = scale.fairness_txs;
    cfg.workload.paths_per_tx = 4;
    cfg.adversary.policy.delay_prob = 0.3;
    cfg.adversary.policy.advance_prob = 0.3;
    cfg.adversary.policy.victim_fraction = 0.05;
    cfg.adversary.policy.forge = false;
    cfg.trials = scale.fairness_seeds;
    cfg.seed = SEED;
    cfg
}

/// Runs shared by A4 and A5.
pub fn fairness_runs(scale: &Scale) -> Result<RunReport> {
    run(&fairness_config(scale))
}

pub fn a4_from(report: &RunReport) -> CriterionResult {
    let a = &report.aggregate;
    let applied = |name: &str| report.trials.iter().map(|t| t.tactics_applied.get(name).copied().unwrap_or(0)).sum::<u64>();
    let exercised = a.kinds.delayed > 0 && a.kinds.advanced > 0 && a.fairness_pairs_checked > 0;
    CriterionResult::new(
        "A4",
        a.fairness_violations == 0 && exercised,
        format!(
            "{} seeds x {} txs, threshold {}: violations {} over {} ordered pairs; tactics delay={} reuse={} chain={}; kinds advanced={} delayed={}",
            a.trials,
            report.config.workload.transactions,
            report.config.params.fairness_threshold(),
            a.fairness_violations,
            a.fairness_pairs_checked,
            applied("delay"),
            applied("advance_reuse"),
            applied("advance_chain"),
            a.kinds.advanced,
            a.kinds.delayed
        ),
    )
}

pub fn a5_from(report: &RunReport) -> CriterionResult {
    let a = &report.aggregate;
    CriterionResult::new(
        "A5",
        a.delayed_filter_counterexamples == 0 && a.kinds.delayed > 0,
        format!("counterexamples {} across {} runs with {} delayed certificates", a.delayed_filter_counterexamples, a.trials, a.kinds.delayed),
    )
}

pub fn a4(scale: &Scale) -> Result<CriterionResult> {
    Ok(a4_from(&fairness_runs(scale)?))
}

pub fn a5(scale: &Scale) -> Result<CriterionResult> {
    Ok(a5_from(&fairness_runs(scale)?))
}

/// Leader censorship of honest certificates breaks fairness; leaderless inclusion restores it.
pub fn a6(scale: &Scale) -> Result<CriterionResult> {
    let mut cfg = fairness_config(scale);
    cfg.workload.transactions = scale.censor_txs;
    cfg.trials = scale.censor_seeds;
    cfg.adversary.policy.delay_prob = 0.0;
    cfg.adversary.policy.advance_prob = 0.0;
    cfg.adversary.policy.victim_fraction = 0.2;
    cfg.adversary.policy.victim_delay = 1000;
    cfg.censorship = CensorshipConfig::LeaderCensor { kinds: [TimestampKind::True].into() };
    let censored = run(&cfg)?.aggregate;
    cfg.censorship = CensorshipConfig::LeaderlessCr;
    let open = run(&cfg)?.aggregate;
    Ok(CriterionResult::new(
        "A6",
        censored.fairness_violations > 0 && open.fairness_violations == 0,
        format!(
            "leader censor: {} violations, {} certificates dropped; leaderless: {} violations",
            censored.fairness_violations, censored.censored_certs, open.fairness_violations
        ),
    ))
}

/// Exact binomial tail against the Chernoff bound for `q` in 6..=60.
pub fn a7() -> Result<CriterionResult> {
    let third = num::rational::BigRational::new(1.into(), 3.into());
    let mut all_below = true;
    let mut worst_ratio: f64 = 0.0;
    for q in 6..=60u32 {
        let t = two_thirds_threshold(q);
        let exact = num::ToPrimitive::to_f64(&binomial_pass_prob_exact(q, t, &third)).unwrap_or(f64::NAN);
        let bound = chernoff_pd_bound(q, 2.0 / 3.0, 1.0 / 3.0)?;
        all_below &= exact <= bound;
        worst_ratio = worst_ratio.max(exact / bound);
    }
    let q100 = (3.0 * 100f64.log2()).ceil() as u32;
    let b20 = chernoff_pd_bound(q100, 2.0 / 3.0, 1.0 / 3.0)?;
    Ok(CriterionResult::new(
        "A7",
        all_below && q100 == 20 && b20 <= 0.01,
        format!("tail <= bound for all q in 6..=60 (max exact/bound {worst_ratio:.3}); q={q100} bound {b20:.6}"),
    ))
}

/// Byte counts match the closed form and grow with `log n`.
pub fn a8() -> Result<CriterionResult> {
    let r = complexity_report(&SweepSettings::default())?;
    let exact = r.all_exact();
    let rows: Vec<String> = r
        .rows
        .iter()
        .filter(|row| row.mode == crate::routing::TraversalMode::Iterative)
        .map(|row| format!("n={} q={} {:.0}B", row.n, row.q, row.measured_submission_per_tx))
        .collect();
    Ok(CriterionResult::new(
        "A8",
        exact && r.r2 >= 0.99,
        format!("exact={} fit slope {:.3} R2 {:.6}; {}", exact, r.slope, r.r2, rows.join(", ")),
    ))
}

fn sandwich_config(scale: &Scale) -> ExperimentConfig {
    let mut p = SystemParams::new(64, 3, 2, 3, 10, 2);
    p.paths_per_block = Some(64);
    let mut cfg = ExperimentConfig::new(p);
    cfg.block_interval = 50;
    cfg.workload.transactions = scale.victims;
    cfg.adversary.behavior = Behavior::PASSIVE;
    cfg.market = Some(MarketModel {
        pool: ConstantProductPool::new(1.0e6, 1.0e6, 0.003),
        victim_quote_in: 1.0e4,
        front_quote_in: 1.0e4,
        trap_lead: 2 * cfg.params.delta_net,
    });
    cfg.seed = SEED ^ 0xa9;
    cfg
}

/// Hidden payloads released at the last hub leave no room for a front-run; plaintext does.
pub fn a9(scale: &Scale) -> Result<CriterionResult> {
    let mut hidden = sandwich_config(scale);
    hidden.workload.hidden_fraction = 1.0;
    hidden.workload.path_filter = PathFilter::RegularPrefix;
    hidden.reveal = Some(RevealPolicy { decrypt_hub_indices: [hidden.params.k - 1].into(), layered: false });
    let h = run(&hidden)?.trials.remove(0).sandwich.expect("market configured");
    let mut plain = sandwich_config(scale);
    plain.workload.path_filter = PathFilter::FirstHubCorrupted;
    let p = run(&plain)?.trials.remove(0).sandwich.expect("market configured");
    Ok(CriterionResult::new(
        "A9",
        h.committed == h.victims && h.feasible == 0 && p.feasible > 0,
        format!(
            "hidden: {} feasible of {} committed victims; plaintext: {} feasible, {} successful of {}",
            h.feasible, h.committed, p.feasible, p.successful, p.committed
        ),
    ))
}

/// Every criterion in order. A4 and A5 share one set of runs.
pub fn run_all(scale: &Scale) -> Result<Vec<CriterionResult>> {
    let fairness = fairness_runs(scale)?;
    Ok(vec![a1(scale)?, a2(scale)?, a3(scale)?, a4_from(&fairness), a5_from(&fairness), a6(scale)?, a7()?, a8()?, a9(scale)?])
}
