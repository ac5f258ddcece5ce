//! Single logical sequencer standing in for a censorship-resistant consensus.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{Assigner, BlockRandomness, DecryptionSet};
use crate::routing::{check_certificate, CertificateError};
use crate::simnet::keyed_unit;
use crate::types::{Certificate, PathSpec, SystemParams, Time, TimestampKind, TxId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorshipModel {
    LeaderlessCR,
    /// Drops each transaction (or each certificate) independently with probability `kappa`.
    ProbabilisticKappa { kappa: f64, per_certificate: bool },
    /// Adversarial leader drops certificates of `targets` whose ground-truth kind is in `kinds`.
    LeaderCensor { targets: BTreeSet<TxId>, kinds: BTreeSet<TimestampKind> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedCert {
    pub cert: Certificate,
    /// Locked timestamp after the late-placement clamp. The raw value stays in `cert.locked_ts`.
    pub effective_ts: Time,
    pub block_number: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub number: u64,
    pub boundary: (Time, Time),
    pub certs: Vec<CommittedCert>,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectOutcome {
    Accepted,
    Duplicate,
    Rejected(CertificateError),
}

/// Effective timestamp of a certificate placed in a block whose window starts at `min_ts`.
pub fn place_late_timestamp(cert: &Certificate, min_ts: Time) -> Time {
    cert.locked_ts.max(min_ts)
}

/// Collects verified certificates and forms blocks at the caller's cadence.
#[derive(Debug)]
pub struct Sequencer {
    params: SystemParams,
    beacon_seed: u64,
    decryption: Option<DecryptionSet>,
    model: CensorshipModel,
    censor_seed: u64,
    paths: HashMap<(u64, u32), PathSpec>,
    seen: HashSet<(TxId, u32)>,
    queue: Vec<(Certificate, TimestampKind)>,
    chain: Vec<Block>,
    last_boundary: Time,
}

impl Sequencer {
    pub fn new(params: SystemParams, beacon_seed: u64, model: CensorshipModel, censor_seed: u64, start: Time) -> Self {
        Sequencer {
            params,
            beacon_seed,
            decryption: None,
            model,
            censor_seed,
            paths: HashMap::new(),
            seen: HashSet::new(),
            queue: Vec::new(),
            chain: Vec::new(),
            last_boundary: start,
        }
    }

    pub fn with_decryption(mut self, set: Option<DecryptionSet>) -> Self {
        self.decryption = set;
        self
    }

    pub fn model(&self) -> &CensorshipModel {
        &self.model
    }

    /// Verifies by recomputing the path from the block's public randomness.
    /// `kind` is simulator ground truth, visible only to an adversarial leader.
    pub fn collect(&mut self, cert: Certificate, kind: TimestampKind) -> CollectOutcome {
        let key = (cert.block, cert.path);
        if cert.path >= self.params.paths_per_block() {
            return CollectOutcome::Rejected(CertificateError::UnknownPath(cert.path));
        }
        let path = self.paths.entry(key).or_insert_with(|| {
            let rand = BlockRandomness::from_beacon(self.beacon_seed, cert.block);
            Assigner::new(&self.params).with_decryption(self.decryption.as_ref()).derive_path(cert.path, &rand)
        });
        if let Err(e) = check_certificate(&cert, path, self.params.t) {
            return CollectOutcome::Rejected(e);
        }
        if !self.seen.insert((cert.tx, cert.path)) {
            return CollectOutcome::Duplicate;
        }
        self.queue.push((cert, kind));
        CollectOutcome::Accepted
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    fn censored(&self, cert: &Certificate, kind: TimestampKind) -> bool {
        match &self.model {
            CensorshipModel::LeaderlessCR => false,
            CensorshipModel::ProbabilisticKappa { kappa, per_certificate } => {
                let key = if *per_certificate { [cert.tx.short(), cert.path as u64] } else { [cert.tx.short(), u64::MAX] };
                keyed_unit(self.censor_seed, &key) < *kappa
            }
            CensorshipModel::LeaderCensor { targets, kinds } => targets.contains(&cert.tx) && kinds.contains(&kind),
        }
    }

    /// Commits the queue minus censored certificates into a block closing at `now`.
    pub fn form_block(&mut self, now: Time) -> &Block {
        let min_ts = self.last_boundary;
        let number = self.chain.len() as u64;
        let queue = std::mem::take(&mut self.queue);
        let mut certs = Vec::with_capacity(queue.len());
        let mut censored = 0;
        for (cert, kind) in queue {
            if self.censored(&cert, kind) {
                censored += 1;
                continue;
            }
            let effective_ts = place_late_timestamp(&cert, min_ts);
            certs.push(CommittedCert { cert, effective_ts, block_number: number });
        }
        self.last_boundary = now.max(min_ts);
        self.chain.push(Block { number, boundary: (min_ts, self.last_boundary), certs, censored });
        self.chain.last().expect("just pushed")
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn committed(&self) -> impl Iterator<Item = &CommittedCert> {
        self.chain.iter().flat_map(|b| b.certs.iter())
    }

    pub fn into_chain(self) -> Vec<Block> {
        self.chain
    }
}
