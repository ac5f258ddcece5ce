//! Canonical timestamps, the total order, and the fairness checker.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::consensus::CommittedCert;
use crate::types::{Time, TimestampKind, TxId};

/// One transaction in the final order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalEntry {
    pub tx: TxId,
    pub canonical_ts: Time,
    /// Path of the certificate that set the canonical timestamp.
    pub source_path: u32,
    /// Chain position of the block that committed that certificate.
    pub source_block: u64,
}

impl CanonicalEntry {
    /// Entry not backed by a committed certificate (used for what-if orders).
    pub fn synthetic(tx: TxId, canonical_ts: Time) -> Self {
        CanonicalEntry { tx, canonical_ts, source_path: u32::MAX, source_block: u64::MAX }
    }

    fn key(&self) -> (Time, [u8; 32]) {
        (self.canonical_ts, self.tx.0)
    }
}

/// Minimum effective timestamp over the committed certificates of `tx`.
pub fn canonical_timestamp<'a>(tx: TxId, committed: impl IntoIterator<Item = &'a CommittedCert>) -> Option<CanonicalEntry> {
    committed
        .into_iter()
        .filter(|c| c.cert.tx == tx)
        .min_by_key(|c| (c.effective_ts, c.block_number, c.cert.path))
        .map(|c| CanonicalEntry {
            tx,
            canonical_ts: c.effective_ts,
            source_path: c.cert.path,
            source_block: c.block_number,
        })
}

/// Canonical entries of every transaction that has at least one committed certificate.
pub fn canonical_entries<'a>(committed: impl IntoIterator<Item = &'a CommittedCert>) -> Vec<CanonicalEntry> {
    let mut best: HashMap<TxId, CanonicalEntry> = HashMap::new();
    for c in committed {
        let cand = CanonicalEntry {
            tx: c.cert.tx,
            canonical_ts: c.effective_ts,
            source_path: c.cert.path,
            source_block: c.block_number,
        };
        best.entry(c.cert.tx)
            .and_modify(|e| {
                if (cand.canonical_ts, cand.source_block, cand.source_path) < (e.canonical_ts, e.source_block, e.source_path) {
                    *e = cand.clone();
                }
            })
            .or_insert(cand);
    }
    best.into_values().collect()
}

/// Sorts by `(canonical_ts, tx digest)`. A transaction appearing twice keeps its earliest entry.
pub fn total_order(mut entries: Vec<CanonicalEntry>) -> Vec<CanonicalEntry> {
    entries.sort_by(|a, b| a.key().cmp(&b.key()).then(a.source_block.cmp(&b.source_block)));
    let mut seen = BTreeSet::new();
    entries.retain(|e| seen.insert(e.tx));
    entries
}

/// Ground truth used by the fairness checker for one transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub tx: TxId,
    /// Locked timestamps of certificates from regular paths that reached consensus.
    pub regular_ts: Vec<Time>,
    /// A fabricated certificate was committed for this transaction.
    pub forged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Transaction that was honestly earlier.
    pub earlier: TxId,
    /// Transaction ordered ahead of it.
    pub later: TxId,
    pub earlier_true_ts: Time,
    pub later_true_ts: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessVerdict {
    pub threshold_used: Time,
    /// Pairs `(a, b)` with `true_ts(a) + threshold < true_ts(b)` that were examined.
    pub pairs_checked: u64,
    pub violation_count: u64,
    /// First violations found, capped.
    pub violations: Vec<Violation>,
    pub eligible: usize,
    /// Committed transactions skipped because a fabricated certificate was committed for them.
    pub excluded_forged: usize,
}

impl FairnessVerdict {
    pub fn holds(&self) -> bool {
        self.violation_count == 0
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Checks the ordering rule against ground truth: whenever the latest regular
/// timestamp of `a` plus `threshold` is below the earliest regular timestamp of
/// `b`, and both committed, `a` must precede `b`.
pub fn check_fairness(order: &[CanonicalEntry], truth: &[TruthRecord], threshold: Time, cap: usize) -> FairnessVerdict {
    let position: HashMap<TxId, usize> = order.iter().enumerate().map(|(i, e)| (e.tx, i)).collect();
    let mut excluded_forged = 0;
    // (hi, lo, pos, tx)
    let mut eligible: Vec<(Time, Time, usize, TxId)> = Vec::new();
    for rec in truth {
        let Some(&pos) = position.get(&rec.tx) else { continue };
        if rec.forged {
            excluded_forged += 1;
            continue;
        }
        let (Some(&hi), Some(&lo)) = (rec.regular_ts.iter().max(), rec.regular_ts.iter().min()) else { continue };
        eligible.push((hi, lo, pos, rec.tx));
    }

    let mut by_hi = eligible.clone();
    by_hi.sort_by_key(|e| (e.0, e.2));
    let mut by_lo = eligible.clone();
    by_lo.sort_by_key(|e| (e.1, e.2));

    let mut tree = Fenwick::new(order.len());
    let mut inserted: BTreeMap<usize, (TxId, Time)> = BTreeMap::new();
    let mut next = 0;
    let mut pairs_checked = 0u64;
    let mut violation_count = 0u64;
    let mut violations = Vec::new();
    for &(_, lo_b, pos_b, tx_b) in &by_lo {
        while next < by_hi.len() && by_hi[next].0 + threshold < lo_b {
            let (hi_a, _, pos_a, tx_a) = by_hi[next];
            tree.add(pos_a);
            inserted.insert(pos_a, (tx_a, hi_a));
            next += 1;
        }
        pairs_checked += next as u64;
        let ahead = next as u64 - tree.prefix(pos_b + 1);
        violation_count += ahead;
        if ahead > 0 && violations.len() < cap {
            for (_, &(tx_a, hi_a)) in inserted.range(pos_b + 1..).take(cap - violations.len()) {
                violations.push(Violation { earlier: tx_a, later: tx_b, earlier_true_ts: hi_a, later_true_ts: lo_b });
            }
        }
    }

    FairnessVerdict {
        threshold_used: threshold,
        pairs_checked,
        violation_count,
        violations,
        eligible: eligible.len(),
        excluded_forged,
    }
}

/// Transactions whose canonical timestamp exceeds one of their committed
/// delayed-kind timestamps while also having a committed true-kind certificate.
pub fn delayed_filter_counterexamples(order: &[CanonicalEntry], committed: &[(CommittedCert, TimestampKind)]) -> Vec<TxId> {
    let canon: HashMap<TxId, Time> = order.iter().map(|e| (e.tx, e.canonical_ts)).collect();
    let mut has_true: BTreeSet<TxId> = BTreeSet::new();
    let mut delayed_min: HashMap<TxId, Time> = HashMap::new();
    for (c, kind) in committed {
        match kind {
            TimestampKind::True => {
                has_true.insert(c.cert.tx);
            }
            TimestampKind::Delayed => {
                let e = delayed_min.entry(c.cert.tx).or_insert(c.effective_ts);
                *e = (*e).min(c.effective_ts);
            }
            _ => {}
        }
    }
    has_true
        .into_iter()
        .filter(|tx| match (canon.get(tx), delayed_min.get(tx)) {
            (Some(&ts), Some(&d)) => ts > d,
            _ => false,
        })
        .collect()
}
