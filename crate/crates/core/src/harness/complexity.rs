//! Measured communication cost over a sweep of network sizes.

use serde::{Deserialize, Serialize};

use crate::analysis::two_thirds_threshold;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::run::simulate;
use crate::harness::stats::fit_through_origin;
use crate::routing::{iterative_submission_bytes, recursive_submission_bytes, Behavior, TraversalMode};
use crate::types::SystemParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub ns: Vec<u32>,
    pub k: u32,
    pub paths_per_tx: u32,
    pub payload_len: u32,
    pub lambda_bytes: u32,
    pub transactions: u32,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings { ns: vec![64, 128, 256, 512], k: 2, paths_per_tx: 8, payload_len: 250, lambda_bytes: 32, transactions: 20, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: u32,
    pub q: u32,
    pub t: u32,
    pub k: u32,
    pub mode: TraversalMode,
    pub traversals: u64,
    pub measured_submission_per_tx: f64,
    pub predicted_submission_per_tx: u64,
    /// Every traversal matched the closed form byte for byte.
    pub exact: bool,
    pub non_payload_per_traversal: f64,
    pub delivery_per_tx: f64,
    pub messages_per_tx: f64,
    /// Mean messages into hub 1 per traversal.
    pub messages_into_second_hub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub settings: SweepSettings,
    pub rows: Vec<ComplexityRow>,
    /// Iterative non-payload bytes per traversal against `log2(n) * lambda`.
    pub slope: f64,
    pub r2: f64,
}

impl ComplexityReport {
    pub fn all_exact(&self) -> bool {
        self.rows.iter().all(|r| r.exact)
    }
}

/// `ceil(3 log2 n)`.
pub fn sweep_hub_size(n: u32) -> u32 {
    (3.0 * (n as f64).log2()).ceil() as u32
}

fn sweep_config(n: u32, s: &SweepSettings, mode: TraversalMode) -> ExperimentConfig {
    let q = sweep_hub_size(n);
    let mut params = SystemParams::new(n, q, two_thirds_threshold(q), s.k, 10, 1);
    params.lambda_bytes = s.lambda_bytes;
    let mut cfg = ExperimentConfig::new(params);
    cfg.mode = mode;
    cfg.seed = s.seed;
    cfg.workload.transactions = s.transactions;
    cfg.workload.paths_per_tx = s.paths_per_tx;
    cfg.workload.payload_len = s.payload_len;
    cfg.adversary.corrupt = false;
    cfg.adversary.behavior = Behavior::PASSIVE;
    cfg
}

fn measure(n: u32, s: &SweepSettings, mode: TraversalMode) -> Result<ComplexityRow> {
    let cfg = sweep_config(n, s, mode);
    let p = &cfg.params;
    let out = simulate(&cfg, 0, s.seed, false)?;
    let per_traversal = match mode {
        TraversalMode::Iterative => iterative_submission_bytes(p.k, p.q, p.lambda_bytes, s.payload_len),
        TraversalMode::Recursive => recursive_submission_bytes(p.k, p.q, p.lambda_bytes, s.payload_len),
    };
    let recs = &out.traversals;
    let count = recs.len().max(1) as f64;
    let exact = !recs.is_empty() && recs.iter().all(|r| r.submission_bytes == per_traversal);
    let non_payload = recs.iter().map(|r| r.submission_bytes - s.payload_len as u64).sum::<u64>() as f64 / count;
    let second = recs.iter().map(|r| r.hubs.get(1).map_or(0, |h| h.inbound)).sum::<u64>() as f64 / count;
    Ok(ComplexityRow {
        n,
        q: p.q,
        t: p.t,
        k: p.k,
        mode,
        traversals: recs.len() as u64,
        measured_submission_per_tx: out.metrics.submission_bytes_per_tx,
        predicted_submission_per_tx: per_traversal * s.paths_per_tx as u64,
        exact,
        non_payload_per_traversal: non_payload,
        delivery_per_tx: out.metrics.delivery_bytes_per_tx,
        messages_per_tx: out.metrics.messages_per_tx,
        messages_into_second_hub: second,
    })
}

/// Runs a passive, fully honest workload for each `n` in both traversal modes.
pub fn complexity_report(settings: &SweepSettings) -> Result<ComplexityReport> {
    let mut rows = Vec::new();
    for &n in &settings.ns {
        for mode in [TraversalMode::Iterative, TraversalMode::Recursive] {
            rows.push(measure(n, settings, mode)?);
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mode == TraversalMode::Iterative)
        .map(|r| ((r.n as f64).log2() * settings.lambda_bytes as f64, r.non_payload_per_traversal))
        .unzip();
    let (slope, r2) = fit_through_origin(&x, &y);
    Ok(ComplexityReport { settings: settings.clone(), rows, slope, r2 })
}
