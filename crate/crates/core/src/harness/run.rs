use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{CensorshipConfig, ExperimentConfig, PathFilter};
use super::stats::Percentiles;
use crate::adversary::{
    classify_types, corrupt, corrupt_unchecked, evaluate_sandwich, plan_sandwich, AdversaryState, PathClass, Tactic,
};
use crate::assignment::{Assigner, BlockRandomness};
use crate::consensus::{Block, CensorshipModel, CollectOutcome, CommittedCert, Sequencer};
use crate::error::Result;
use crate::ordering::{canonical_entries, check_fairness, delayed_filter_counterexamples, total_order, CanonicalEntry, FairnessVerdict, TruthRecord};
use crate::routing::{
    counterfactual_locked_ts, iterative_submission_bytes, recursive_submission_bytes, reveal, RouteEvent, RoutingEnv,
    Traversal, TraversalMode, TraversalRecord, TraversalSpec, TraversalStatus,
};
use crate::simnet::{stream_rng, stream_seed, ClockModel, EventQueue, NetModel, Stream, TraceRecord};
use crate::types::{HubType, PathSpec, Time, TimestampKind, Transaction, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PathClassCounts {
    pub regular: u64,
    pub mixed: u64,
    pub corrupted: u64,
    pub contains_impasse: u64,
}

impl PathClassCounts {
    fn add(&mut self, class: PathClass) {
        match class {
            PathClass::Regular => self.regular += 1,
            PathClass::Mixed => self.mixed += 1,
            PathClass::Corrupted => self.corrupted += 1,
            PathClass::ContainsImpasse => self.contains_impasse += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct KindCounts {
    pub true_kind: u64,
    pub advanced: u64,
    pub delayed: u64,
    pub arbitrary: u64,
}

impl KindCounts {
    fn add(&mut self, kind: TimestampKind) {
        match kind {
            TimestampKind::True => self.true_kind += 1,
            TimestampKind::Advanced => self.advanced += 1,
            TimestampKind::Delayed => self.delayed += 1,
            TimestampKind::Arbitrary => self.arbitrary += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SandwichSummary {
    pub victims: u64,
    pub committed: u64,
    pub with_knowledge: u64,
    pub feasible: u64,
    pub successful: u64,
    pub total_profit: f64,
}

/// Per-trial metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: u32,
    pub seed: u64,
    pub transactions: u64,
    pub traversals: u64,
    pub paths: PathClassCounts,
    /// Some block whose paths were used has a fully corrupted path in its table.
    pub corrupted_path_in_table: bool,
    pub delivered: u64,
    pub adversary_delivered: u64,
    pub stalled: u64,
    pub tactics_applied: BTreeMap<String, u64>,
    pub tactics_rejected: u64,
    pub kinds: KindCounts,
    pub committed_txs: u64,
    pub commit_rate: f64,
    pub censored_certs: u64,
    pub rejected_certs: u64,
    pub blocks: u64,
    pub fairness: FairnessVerdict,
    pub delayed_filter_counterexamples: u64,
    /// Delayed traversals that ended earlier than their honest counterfactual.
    pub delay_below_counterfactual: u64,
    pub submission_bytes_per_tx: f64,
    pub delivery_bytes_per_tx: f64,
    pub messages_per_tx: f64,
    /// Cooperative traversals checked against the closed-form byte formula.
    pub byte_rule_checked: u64,
    pub latency: Percentiles,
    pub sandwich: Option<SandwichSummary>,
}

/// Everything one trial produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub metrics: TrialMetrics,
    pub transactions: Vec<Transaction>,
    pub traversals: Vec<TraversalRecord>,
    pub chain: Vec<Block>,
    pub order: Vec<CanonicalEntry>,
    pub kinds: HashMap<(TxId, u32), TimestampKind>,
    pub adversary: AdversaryState,
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimEvent {
    Route(usize, RouteEvent),
    FormBlock,
}

fn generate_workload(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Transaction>> {
    let w = &cfg.workload;
    let mut rng = stream_rng(seed, Stream::Workload);
    let mut now = 0;
    let mut txs = Vec::with_capacity(w.transactions as usize);
    for i in 0..w.transactions as u64 {
        now += if w.mean_gap == 0 { 0 } else { rng.random_range(0..=2 * w.mean_gap) };
        let hidden = w.hidden_fraction > 0.0 && rng.random::<f64>() < w.hidden_fraction;
        txs.push(Transaction::new(i, seed ^ i, w.payload_len, now, hidden)?);
    }
    Ok(txs)
}

fn filter_accepts(filter: PathFilter, path: &PathSpec, types: &[HubType], adv: &AdversaryState) -> bool {
    match filter {
        PathFilter::Any => true,
        PathFilter::RegularPrefix => types[..types.len() - 1].iter().all(|t| *t == HubType::Regular),
        PathFilter::FirstHubCorrupted => path.hubs[0].members.iter().any(|m| adv.is_corrupted(*m)),
    }
}

struct BlockTable {
    paths: Vec<Arc<PathSpec>>,
    types: Vec<Vec<HubType>>,
    has_corrupted: bool,
}

fn block_table(assigner: &Assigner, beacon: u64, block: u64, adv: &AdversaryState, t: u32) -> BlockTable {
    let rand = BlockRandomness::from_beacon(beacon, block);
    let paths: Vec<Arc<PathSpec>> = assigner.enumerate_paths(&rand).into_iter().map(Arc::new).collect();
    let types: Vec<Vec<HubType>> = paths.iter().map(|p| adv.hub_types(p, t)).collect();
    let has_corrupted = types.iter().any(|ty| classify_types(ty) == PathClass::Corrupted);
    BlockTable { paths, types, has_corrupted }
}

/// Runs one trial of the experiment.
pub fn simulate(cfg: &ExperimentConfig, trial: u32, seed: u64, trace: bool) -> Result<TrialOutcome> {
    cfg.validate()?;
    let params = &cfg.params;
    let n = params.n;
    let clocks = ClockModel::sample(n, params.delta_clock, &mut stream_rng(seed, Stream::Offsets));
    let mut net = NetModel::new(cfg.network.min_delay, params.delta_net, stream_seed(seed, Stream::Delays))?;
    net.distribution = cfg.network.distribution;
    let adv = match (cfg.adversary.corrupt, cfg.adversary.allow_stress) {
        (false, _) => AdversaryState::honest(n),
        (true, false) => corrupt(seed, n, params.f())?,
        (true, true) => corrupt_unchecked(seed, n, params.f()),
    };
    let beacon = stream_seed(seed, Stream::Beacon);
    let assigner = Assigner::new(params).with_decryption(cfg.decryption_set.as_ref());
    let env = RoutingEnv {
        params,
        clocks: &clocks,
        net: &net,
        adversary: &adv,
        behavior: cfg.adversary.behavior,
        stamp_rule: cfg.stamp_rule,
        mode: cfg.mode,
    };
    let policy = &cfg.adversary.policy;
    let txs = generate_workload(cfg, seed)?;

    let mut tables: HashMap<u64, BlockTable> = HashMap::new();
    let mut traversals: Vec<Traversal> = Vec::new();
    let mut path_classes = PathClassCounts::default();
    let mut class_of: Vec<PathClass> = Vec::new();
    let mut tactics_applied: BTreeMap<String, u64> = BTreeMap::new();
    let mut pick_rng = stream_rng(seed, Stream::Workload);
    pick_rng.set_stream(1);
    for tx in &txs {
        let block = tx.submit_time.div_euclid(cfg.block_interval) as u64;
        let table = tables.entry(block).or_insert_with(|| block_table(&assigner, beacon, block, &adv, params.t));
        let candidates: Vec<usize> = (0..table.paths.len())
            .filter(|&i| filter_accepts(cfg.workload.path_filter, &table.paths[i], &table.types[i], &adv))
            .collect();
        let want = (cfg.workload.paths_per_tx as usize).min(candidates.len());
        let mut chosen: Vec<usize> = sample(&mut pick_rng, candidates.len(), want).into_iter().map(|i| candidates[i]).collect();
        chosen.sort_unstable();
        for i in chosen {
            let path = table.paths[i].clone();
            let types = &table.types[i];
            let class = classify_types(types);
            path_classes.add(class);
            class_of.push(class);
            let tactic = if cfg.adversary.behavior.active && cfg.mode == TraversalMode::Iterative {
                policy.choose(seed, tx, &path, types)
            } else {
                Tactic::None
            };
            let name = match tactic {
                Tactic::None => "none",
                Tactic::Delay(_) => "delay",
                Tactic::AdvanceReuse => "advance_reuse",
                Tactic::AdvanceChain => "advance_chain",
                Tactic::Forge(_) => "forge",
            };
            *tactics_applied.entry(name.to_string()).or_default() += 1;
            traversals.push(Traversal::new(TraversalSpec { tx: tx.clone(), path, tactic }, &env));
        }
    }

    let victims: Vec<TxId> = txs.iter().filter(|t| policy.is_victim(seed, t.id)).map(|t| t.id).collect();
    let model = match &cfg.censorship {
        CensorshipConfig::LeaderlessCr => CensorshipModel::LeaderlessCR,
        CensorshipConfig::Kappa { per_certificate } => {
            CensorshipModel::ProbabilisticKappa { kappa: params.kappa, per_certificate: *per_certificate }
        }
        CensorshipConfig::LeaderCensor { kinds } => {
            CensorshipModel::LeaderCensor { targets: victims.iter().copied().collect(), kinds: kinds.clone() }
        }
    };
    let start = txs.first().map_or(0, |t| t.submit_time.min(0));
    let mut sequencer = Sequencer::new(params.clone(), beacon, model, stream_seed(seed, Stream::Censorship), start)
        .with_decryption(cfg.decryption_set.clone());

    let mut queue: EventQueue<SimEvent> = EventQueue::new(start);
    let mut trace_out = trace.then(Vec::new);
    let mut out = Vec::new();
    let mut outstanding = 0usize;
    for (i, trav) in traversals.iter_mut().enumerate() {
        trav.start(&env, &mut out);
        for (due, ev) in out.drain(..) {
            queue.schedule(due, SimEvent::Route(i, ev))?;
            outstanding += 1;
        }
    }
    queue.schedule(start + cfg.block_interval, SimEvent::FormBlock)?;

    let mut kinds: HashMap<(TxId, u32), TimestampKind> = HashMap::new();
    let mut kind_counts = KindCounts::default();
    let mut delay_below_cf = 0u64;
    let mut rejected = 0u64;
    while let Some((token, ev)) = queue.pop() {
        if let Some(t) = trace_out.as_mut() {
            t.push(TraceRecord { due: token.due, seq: token.sequence, event: format!("{ev:?}") });
        }
        match ev {
            SimEvent::Route(i, rev) => {
                outstanding -= 1;
                let trav = &mut traversals[i];
                let was_finished = trav.is_finished();
                trav.handle(token.due, rev, &env, &mut out);
                for (due, e) in out.drain(..) {
                    queue.schedule(due, SimEvent::Route(i, e))?;
                    outstanding += 1;
                }
                if !was_finished && trav.is_finished() {
                    let cert = trav.record.certificate.clone().expect("finished traversal has a certificate");
                    let kind = match trav.record.tactic {
                        Tactic::Forge(_) => TimestampKind::Arbitrary,
                        Tactic::None => TimestampKind::True,
                        tactic => {
                            let cf = counterfactual_locked_ts(&trav.spec(), &env).expect("honest replay completes");
                            if matches!(tactic, Tactic::Delay(_)) && cert.locked_ts < cf {
                                delay_below_cf += 1;
                            }
                            match cert.locked_ts.cmp(&cf) {
                                std::cmp::Ordering::Equal => TimestampKind::True,
                                std::cmp::Ordering::Greater => TimestampKind::Delayed,
                                std::cmp::Ordering::Less => TimestampKind::Advanced,
                            }
                        }
                    };
                    kinds.insert((cert.tx, cert.path), kind);
                    kind_counts.add(kind);
                    match sequencer.collect(cert, kind) {
                        CollectOutcome::Accepted | CollectOutcome::Duplicate => {}
                        CollectOutcome::Rejected(e) => {
                            debug_assert!(false, "simulated certificate rejected: {e}");
                            rejected += 1;
                        }
                    }
                }
            }
            SimEvent::FormBlock => {
                sequencer.form_block(token.due);
                if outstanding > 0 || sequencer.queued() > 0 {
                    queue.schedule(token.due + cfg.block_interval, SimEvent::FormBlock)?;
                }
            }
        }
    }
    for trav in &mut traversals {
        trav.finish();
    }
    let records: Vec<TraversalRecord> = traversals.into_iter().map(|t| t.record).collect();

    let committed: Vec<CommittedCert> = sequencer.committed().cloned().collect();
    let order = total_order(canonical_entries(&committed));
    let committed_with_kind: Vec<(CommittedCert, TimestampKind)> =
        committed.iter().map(|c| (c.clone(), kinds[&(c.cert.tx, c.cert.path)])).collect();

    let mut truth: BTreeMap<TxId, TruthRecord> = BTreeMap::new();
    for (rec, class) in records.iter().zip(&class_of) {
        let entry = truth.entry(rec.tx).or_insert_with(|| TruthRecord { tx: rec.tx, regular_ts: Vec::new(), forged: false });
        if *class == PathClass::Regular {
            if let Some(c) = &rec.certificate {
                entry.regular_ts.push(c.locked_ts);
            }
        }
    }
    for (c, kind) in &committed_with_kind {
        if *kind == TimestampKind::Arbitrary {
            truth.get_mut(&c.cert.tx).expect("committed tx has truth").forged = true;
        }
    }
    let truth: Vec<TruthRecord> = truth.into_values().collect();
    let fairness = check_fairness(&order, &truth, params.fairness_threshold(), 20);
    let delayed_filter = delayed_filter_counterexamples(&order, &committed_with_kind).len() as u64;

    let mut byte_rule_checked = 0u64;
    let q = params.q;
    for rec in &records {
        let cooperative = rec.tactic == Tactic::None
            && rec.status == TraversalStatus::Delivered
            && rec.hubs.iter().all(|h| h.signatures == q);
        if cooperative {
            let payload = cfg.workload.payload_len;
            let expected = match rec.mode {
                TraversalMode::Iterative => iterative_submission_bytes(params.k, q, params.lambda_bytes, payload),
                TraversalMode::Recursive => recursive_submission_bytes(params.k, q, params.lambda_bytes, payload),
            };
            assert_eq!(rec.submission_bytes, expected, "byte counting rule violated on path {}", rec.path_id);
            byte_rule_checked += 1;
        }
    }

    let tx_count = txs.len() as u64;
    let per_tx = |x: u64| if tx_count == 0 { 0.0 } else { x as f64 / tx_count as f64 };
    let submit_at: HashMap<TxId, Time> = txs.iter().map(|t| (t.id, t.submit_time)).collect();
    let latencies: Vec<Time> = records
        .iter()
        .filter(|r| r.status == TraversalStatus::Delivered)
        .filter_map(|r| r.delivered_at.map(|d| d - submit_at[&r.tx]))
        .collect();

    let sandwich = cfg.market.as_ref().map(|market| {
        let mut s = SandwichSummary::default();
        let mut knowledge: HashMap<TxId, Option<Time>> = HashMap::new();
        let by_id: HashMap<TxId, &Transaction> = txs.iter().map(|t| (t.id, t)).collect();
        let default_policy = crate::routing::RevealPolicy { decrypt_hub_indices: [params.k - 1].into(), layered: false };
        let policy = cfg.reveal.as_ref().unwrap_or(&default_policy);
        for (rec, trav_path) in records.iter().zip(path_specs(&records, &tables)) {
            let tx = by_id[&rec.tx];
            let r = reveal(tx, &trav_path, rec, policy, &adv).expect("reveal policy validated");
            let e = knowledge.entry(rec.tx).or_insert(None);
            *e = match (*e, r.adversary_knowledge_time) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
        for tx in &txs {
            s.victims += 1;
            let k = knowledge.get(&tx.id).copied().flatten();
            let script = plan_sandwich(tx, k, &adv, market);
            if script.knowledge_time.is_some() {
                s.with_knowledge += 1;
            }
            if let Some(out) = evaluate_sandwich(&script, &order, market) {
                s.committed += 1;
                s.feasible += out.trap_placeable as u64;
                s.successful += out.success as u64;
                s.total_profit += out.profit;
            } else if order.iter().any(|e| e.tx == tx.id) {
                s.committed += 1;
            }
        }
        s
    });

    let metrics = TrialMetrics {
        trial,
        seed,
        transactions: tx_count,
        traversals: records.len() as u64,
        paths: path_classes,
        corrupted_path_in_table: tables.values().any(|t| t.has_corrupted),
        delivered: records.iter().filter(|r| r.status == TraversalStatus::Delivered).count() as u64,
        adversary_delivered: records.iter().filter(|r| r.status == TraversalStatus::AdversaryDelivered).count() as u64,
        stalled: records.iter().filter(|r| r.status == TraversalStatus::Stalled).count() as u64,
        tactics_applied,
        tactics_rejected: records.iter().filter(|r| r.tactic_rejected).count() as u64,
        kinds: kind_counts,
        committed_txs: order.len() as u64,
        commit_rate: if tx_count == 0 { 0.0 } else { order.len() as f64 / tx_count as f64 },
        censored_certs: sequencer.chain().iter().map(|b| b.censored as u64).sum(),
        rejected_certs: rejected,
        blocks: sequencer.chain().len() as u64,
        fairness,
        delayed_filter_counterexamples: delayed_filter,
        delay_below_counterfactual: delay_below_cf,
        submission_bytes_per_tx: per_tx(records.iter().map(|r| r.submission_bytes).sum()),
        delivery_bytes_per_tx: per_tx(records.iter().map(|r| r.delivery_bytes).sum()),
        messages_per_tx: per_tx(records.iter().map(|r| r.messages).sum()),
        byte_rule_checked,
        latency: Percentiles::of(&latencies),
        sandwich,
    };
    Ok(TrialOutcome {
        metrics,
        transactions: txs,
        traversals: records,
        chain: sequencer.into_chain(),
        order,
        kinds,
        adversary: adv,
        trace: trace_out,
    })
}

fn path_specs(records: &[TraversalRecord], tables: &HashMap<u64, BlockTable>) -> Vec<Arc<PathSpec>> {
    records.iter().map(|r| tables[&r.block].paths[r.path_id as usize].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SystemParams;

    fn small() -> ExperimentConfig {
        let mut p = SystemParams::new(32, 3, 2, 3, 10, 2);
        p.paths_per_block = Some(32);
        let mut cfg = ExperimentConfig::new(p);
        cfg.workload.transactions = 300;
        cfg.block_interval = 50;
        cfg
    }

    #[test]
    fn empty_workload() {
        let mut cfg = small();
        cfg.workload.transactions = 0;
        let out = simulate(&cfg, 0, 1, false).unwrap();
        assert!(out.order.is_empty());
        assert_eq!(out.metrics.fairness.violation_count, 0);
    }

    #[test]
    fn honest_run_commits_everything() {
        let mut cfg = small();
        cfg.adversary.corrupt = false;
        let out = simulate(&cfg, 0, 7, false).unwrap();
        assert_eq!(out.metrics.committed_txs, 300);
        assert_eq!(out.metrics.stalled, 0);
        assert_eq!(out.metrics.fairness.violation_count, 0);
        assert_eq!(out.metrics.byte_rule_checked, out.metrics.traversals);
    }

    #[test]
    fn deterministic_trials() {
        let mut cfg = small();
        cfg.adversary.policy.delay_prob = 0.3;
        cfg.adversary.policy.advance_prob = 0.3;
        let a = simulate(&cfg, 0, 42, true).unwrap();
        let b = simulate(&cfg, 0, 42, true).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.order, b.order);
        assert_eq!(a.trace, b.trace);
        let c = simulate(&cfg, 0, 43, false).unwrap();
        assert_ne!(a.order, c.order);
    }

    #[test]
    fn tactics_run_without_violations() {
        let mut cfg = small();
        cfg.adversary.policy.delay_prob = 0.3;
        cfg.adversary.policy.advance_prob = 0.3;
        cfg.adversary.policy.victim_fraction = 0.1;
        for seed in 0..4 {
            let out = simulate(&cfg, 0, seed, false).unwrap();
            let m = &out.metrics;
            assert_eq!(m.fairness.violation_count, 0, "seed {seed}: {:?}", m.fairness.violations);
            assert_eq!(m.delayed_filter_counterexamples, 0);
            assert_eq!(m.delay_below_counterfactual, 0);
            assert_eq!(m.rejected_certs, 0);
        }
    }

    #[test]
    fn kappa_drops_transactions() {
        let mut cfg = small();
        cfg.params.kappa = 1.0;
        cfg.censorship = CensorshipConfig::Kappa { per_certificate: false };
        let out = simulate(&cfg, 0, 3, false).unwrap();
        assert_eq!(out.metrics.committed_txs, 0);
    }

    #[test]
    fn recursive_mode_runs() {
        let mut cfg = small();
        cfg.mode = TraversalMode::Recursive;
        cfg.adversary.behavior = crate::routing::Behavior::PASSIVE;
        let out = simulate(&cfg, 0, 5, false).unwrap();
        assert_eq!(out.metrics.committed_txs, 300);
        assert_eq!(out.metrics.byte_rule_checked, out.metrics.traversals);
    }
}
