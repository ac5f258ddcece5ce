//! Multi-trial runs and their aggregate report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{simulate, KindCounts, PathClassCounts, TrialMetrics};
use crate::harness::stats::{Proportion, Z_99};
use crate::simnet::split_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub transactions: u64,
    pub traversals: u64,
    /// Committed transactions over all submitted transactions.
    pub committed: Proportion,
    /// Trials whose path tables held a corrupted path.
    pub corrupted_table: Proportion,
    pub stalled: Proportion,
    pub paths: PathClassCounts,
    pub kinds: KindCounts,
    pub fairness_pairs_checked: u64,
    pub fairness_violations: u64,
    pub trials_with_violations: u64,
    pub delayed_filter_counterexamples: u64,
    pub censored_certs: u64,
    pub rejected_certs: u64,
    pub mean_submission_bytes_per_tx: f64,
    pub mean_delivery_bytes_per_tx: f64,
    pub mean_messages_per_tx: f64,
    pub feasible_traps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialMetrics>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn from_trials(config: ExperimentConfig, trials: Vec<TrialMetrics>) -> Self {
        let aggregate = aggregate(&trials);
        RunReport { config, trials, aggregate }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn aggregate(trials: &[TrialMetrics]) -> Aggregate {
    let sum = |f: &dyn Fn(&TrialMetrics) -> u64| trials.iter().map(f).sum::<u64>();
    let mean = |f: &dyn Fn(&TrialMetrics) -> f64| {
        if trials.is_empty() { 0.0 } else { trials.iter().map(f).sum::<f64>() / trials.len() as f64 }
    };
    let mut paths = PathClassCounts::default();
    let mut kinds = KindCounts::default();
    for t in trials {
        paths.regular += t.paths.regular;
        paths.mixed += t.paths.mixed;
        paths.corrupted += t.paths.corrupted;
        paths.contains_impasse += t.paths.contains_impasse;
        kinds.true_kind += t.kinds.true_kind;
        kinds.advanced += t.kinds.advanced;
        kinds.delayed += t.kinds.delayed;
        kinds.arbitrary += t.kinds.arbitrary;
    }
    let transactions = sum(&|t| t.transactions);
    let traversals = sum(&|t| t.traversals);
    Aggregate {
        trials: trials.len() as u64,
        transactions,
        traversals,
        committed: Proportion::new(sum(&|t| t.committed_txs), transactions, Z_99),
        corrupted_table: Proportion::new(sum(&|t| t.corrupted_path_in_table as u64), trials.len() as u64, Z_99),
        stalled: Proportion::new(sum(&|t| t.stalled), traversals, Z_99),
        paths,
        kinds,
        fairness_pairs_checked: sum(&|t| t.fairness.pairs_checked),
        fairness_violations: sum(&|t| t.fairness.violation_count),
        trials_with_violations: sum(&|t| (t.fairness.violation_count > 0) as u64),
        delayed_filter_counterexamples: sum(&|t| t.delayed_filter_counterexamples),
        censored_certs: sum(&|t| t.censored_certs),
        rejected_certs: sum(&|t| t.rejected_certs),
        mean_submission_bytes_per_tx: mean(&|t| t.submission_bytes_per_tx),
        mean_delivery_bytes_per_tx: mean(&|t| t.delivery_bytes_per_tx),
        mean_messages_per_tx: mean(&|t| t.messages_per_tx),
        feasible_traps: sum(&|t| t.sandwich.as_ref().map_or(0, |s| s.feasible)),
    }
}

/// Seed of trial `i` under `config.seed`.
pub fn trial_seed(config: &ExperimentConfig, trial: u32) -> u64 {
    split_seed(config.seed, trial as u64)
}

/// Runs every trial in parallel. Output equals [`run_serial`].
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| simulate(config, i, trial_seed(config, i), false).map(|o| o.metrics))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::from_trials(config.clone(), trials))
}

pub fn run_serial(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let trials = (0..config.trials)
        .map(|i| simulate(config, i, trial_seed(config, i), false).map(|o| o.metrics))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::from_trials(config.clone(), trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SystemParams;

    #[test]
    fn parallel_equals_serial() {
        let mut cfg = ExperimentConfig::new(SystemParams::new(32, 3, 2, 3, 10, 2));
        cfg.workload.transactions = 60;
        cfg.trials = 4;
        cfg.seed = 11;
        cfg.adversary.policy.delay_prob = 0.3;
        let a = run(&cfg).unwrap();
        let b = run_serial(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.aggregate.trials, 4);
        assert_eq!(a.aggregate.transactions, 240);
        assert!(a.to_json().unwrap().contains("\"aggregate\""));
    }
}
