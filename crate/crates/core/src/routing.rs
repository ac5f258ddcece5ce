//! Path traversal: hub approval, iterative and recursive routing, certificate
//! verification and the payload-reveal model.
//!
//! A [`Traversal`] is an event-driven state machine for one `(transaction, path)`
//! pair. It is driven either by [`run_traversal`] on a private queue or by the
//! run-level simulator, which interleaves many traversals on one queue. A
//! traversal's own events keep the same relative order in both settings, so an
//! isolated replay reproduces its timing exactly.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adversary::{first_blocking_hub, first_corrupted_chain, tactic_feasible, trailing_corrupted, AdversaryState, Tactic};
use crate::assignment::{Assigner, BlockRandomness};
use crate::error::{Error, Result};
use crate::simnet::{ClockModel, EventQueue, NetModel};
use crate::types::{Certificate, HubApproval, HubSpec, HubType, NodeId, PathSpec, SystemParams, Time, Transaction, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraversalMode {
    #[default]
    Iterative,
    Recursive,
}

/// Whose clock stamps a hub approval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StampRule {
    /// Reading of the signer whose signature crossed the threshold.
    #[default]
    ThresholdSigner,
    MaxSigner,
    MedianSigner,
}

impl StampRule {
    /// `readings` are the first `t` signer readings in arrival order.
    pub fn stamp(self, readings: &[Time]) -> Time {
        assert!(!readings.is_empty(), "stamp needs at least one reading");
        match self {
            StampRule::ThresholdSigner => *readings.last().expect("nonempty"),
            StampRule::MaxSigner => *readings.iter().max().expect("nonempty"),
            StampRule::MedianSigner => {
                let mut v = readings.to_vec();
                v.sort_unstable();
                v[(v.len() - 1) / 2]
            }
        }
    }
}

/// How corrupted nodes behave when no tactic applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Behavior {
    /// Corrupted nodes deviate at all. When false they follow the protocol and tactics are ignored.
    pub active: bool,
    /// Corrupted members of impasse hubs withhold signatures, stalling the path.
    pub stall_impasse: bool,
}

impl Default for Behavior {
    fn default() -> Self {
        Behavior { active: true, stall_impasse: true }
    }
}

impl Behavior {
    pub const PASSIVE: Behavior = Behavior { active: false, stall_impasse: false };
}

/// Everything a traversal reads but never mutates.
#[derive(Debug, Clone, Copy)]
pub struct RoutingEnv<'a> {
    pub params: &'a SystemParams,
    pub clocks: &'a ClockModel,
    pub net: &'a NetModel,
    pub adversary: &'a AdversaryState,
    pub behavior: Behavior,
    pub stamp_rule: StampRule,
    pub mode: TraversalMode,
}

impl<'a> RoutingEnv<'a> {
    /// Same environment with every node following the protocol.
    pub fn honest_replay(&self) -> RoutingEnv<'a> {
        RoutingEnv { behavior: Behavior::PASSIVE, ..*self }
    }

    fn link(&self, from: NodeId, to: NodeId, key: &[u64]) -> Time {
        if from == to {
            0
        } else {
            self.net.delay(self.adversary.is_corrupted(from), self.adversary.is_corrupted(to), key)
        }
    }

    fn consensus_delay(&self, from: NodeId, key: &[u64]) -> Time {
        self.net.delay(self.adversary.is_corrupted(from), false, key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealPolicy {
    pub decrypt_hub_indices: BTreeSet<u32>,
    pub layered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealRecord {
    pub tx: TxId,
    pub path: u32,
    pub adversary_knowledge_time: Option<Time>,
    pub reveal_time: Option<Time>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraversalStatus {
    Pending,
    Delivered,
    /// The adversary built and delivered the certificate itself.
    AdversaryDelivered,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubTiming {
    pub hub_index: u32,
    pub started: Option<Time>,
    /// First receipt of the request or payload by each member, in true time.
    pub arrivals: Vec<(NodeId, Time)>,
    pub approved_at: Option<Time>,
    /// Messages sent to members of this hub.
    pub inbound: u64,
    /// Signatures members of this hub produced.
    pub signatures: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalRecord {
    pub tx: TxId,
    pub path_id: u32,
    pub block: u64,
    pub mode: TraversalMode,
    pub tactic: Tactic,
    /// A requested tactic was infeasible and dropped.
    pub tactic_rejected: bool,
    pub status: TraversalStatus,
    pub certificate: Option<Certificate>,
    pub initiator_received: Option<Time>,
    pub completed_at: Option<Time>,
    pub delivered_at: Option<Time>,
    pub hubs: Vec<HubTiming>,
    /// Client leg plus all routing traffic up to the last approval.
    pub submission_bytes: u64,
    /// Final delivery of the certificate and payload to consensus.
    pub delivery_bytes: u64,
    pub messages: u64,
}

/// Closed-form submission bytes of a fully cooperative iterative traversal.
pub fn iterative_submission_bytes(k: u32, q: u32, lambda: u32, payload: u32) -> u64 {
    2 * k as u64 * q as u64 * lambda as u64 + payload as u64
}

/// Closed-form submission bytes of a fully cooperative recursive traversal.
pub fn recursive_submission_bytes(k: u32, q: u32, lambda: u32, payload: u32) -> u64 {
    let (q, l, lam) = (q as u64, payload as u64, lambda as u64);
    let hops: u64 = (0..k as u64 - 1).map(|j| q * q * (l + (j + 1) * lam)).sum();
    l + q * l + hops
}

/// Input of one traversal.
#[derive(Debug, Clone)]
pub struct TraversalSpec {
    pub tx: Transaction,
    pub path: Arc<PathSpec>,
    pub tactic: Tactic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteEvent {
    ClientArrive,
    Request { hub: u32, slot: u32 },
    Reply { hub: u32, slot: u32, reading: Time },
    Release { hub: u32 },
    Hop { hub: u32, slot: u32, from: u32 },
    FinalArrive { slot: u32 },
    Deliver,
    AdversaryDeliver,
}

const LEG_CLIENT: u64 = 1;
const LEG_REQUEST: u64 = 2;
const LEG_REPLY: u64 = 3;
const LEG_DELIVER: u64 = 4;
const LEG_HOP: u64 = 5;
const LEG_FINAL: u64 = 6;
const LEG_ADVERSARY: u64 = 7;
const FROM_INITIATOR: u32 = u32::MAX;

/// Why a hub refused to approve.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Refusal {
    #[error("prior approvals do not cover the hubs before {0}")]
    PriorMismatch(u32),
    #[error("only {have} of {need} signatures")]
    InsufficientSignatures { have: usize, need: usize },
    #[error("{0} is not a member of the hub")]
    NotAMember(NodeId),
    #[error("{0} signed twice")]
    DuplicateSigner(NodeId),
}

fn check_approval(a: &HubApproval, hub: &HubSpec, t: u32) -> bool {
    a.hub_index == hub.hub_index && a.signers.len() >= t as usize && a.signers.iter().all(|s| hub.contains(*s))
}

/// Forms a hub approval from member signatures in arrival order.
/// `prior` must hold one valid approval for each hub in `prior_hubs`.
pub fn hub_approve(
    hub: &HubSpec,
    prior: &[HubApproval],
    prior_hubs: &[HubSpec],
    t: u32,
    signatures: &[(NodeId, Time)],
    rule: StampRule,
) -> Result<HubApproval, Refusal> {
    if prior.len() != hub.hub_index as usize
        || prior_hubs.len() != prior.len()
        || !prior.iter().zip(prior_hubs).all(|(a, h)| check_approval(a, h, t))
    {
        return Err(Refusal::PriorMismatch(hub.hub_index));
    }
    let mut signers = BTreeSet::new();
    for &(node, _) in signatures {
        if !hub.contains(node) {
            return Err(Refusal::NotAMember(node));
        }
        if !signers.insert(node) {
            return Err(Refusal::DuplicateSigner(node));
        }
    }
    if signatures.len() < t as usize {
        return Err(Refusal::InsufficientSignatures { have: signatures.len(), need: t as usize });
    }
    let first = &signatures[..t as usize];
    let readings: Vec<Time> = first.iter().map(|s| s.1).collect();
    Ok(HubApproval {
        hub_index: hub.hub_index,
        timestamp: rule.stamp(&readings),
        signers: first.iter().map(|s| s.0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertificateError {
    #[error("certificate names path {cert} but was checked against path {path}")]
    WrongPath { cert: u32, path: u32 },
    #[error("expected {expected} approvals, found {found}")]
    ApprovalCount { expected: usize, found: usize },
    #[error("approval {0} is out of order")]
    Order(usize),
    #[error("approval {hub} has {have} signers, needs {need}")]
    TooFewSigners { hub: usize, have: usize, need: usize },
    #[error("signer {node} is not a member of hub {hub}")]
    NonMember { hub: usize, node: NodeId },
    #[error("locked timestamp {found} differs from approval maximum {expected}")]
    LockedTimestamp { expected: Time, found: Time },
    #[error("unknown path {0}")]
    UnknownPath(u32),
}

/// Checks a certificate against an already derived path.
pub fn check_certificate(cert: &Certificate, path: &PathSpec, t: u32) -> Result<(), CertificateError> {
    if cert.path != path.path_id || cert.block != path.block {
        return Err(CertificateError::WrongPath { cert: cert.path, path: path.path_id });
    }
    if cert.approvals.len() != path.hubs.len() {
        return Err(CertificateError::ApprovalCount { expected: path.hubs.len(), found: cert.approvals.len() });
    }
    for (j, (a, hub)) in cert.approvals.iter().zip(&path.hubs).enumerate() {
        if a.hub_index as usize != j {
            return Err(CertificateError::Order(j));
        }
        if a.signers.len() < t as usize {
            return Err(CertificateError::TooFewSigners { hub: j, have: a.signers.len(), need: t as usize });
        }
        if let Some(&node) = a.signers.iter().find(|s| !hub.contains(**s)) {
            return Err(CertificateError::NonMember { hub: j, node });
        }
    }
    let expected = cert.approvals.iter().map(|a| a.timestamp).max().expect("k >= 1");
    if expected != cert.locked_ts {
        return Err(CertificateError::LockedTimestamp { expected, found: cert.locked_ts });
    }
    Ok(())
}

/// Recomputes the path from the block randomness and checks the certificate against it.
pub fn verify_certificate_detailed(cert: &Certificate, rand: &BlockRandomness, assigner: &Assigner) -> Result<(), CertificateError> {
    if rand.block != cert.block {
        return Err(CertificateError::WrongPath { cert: cert.path, path: cert.path });
    }
    let path = assigner.checked_path(cert.path, rand).map_err(|_| CertificateError::UnknownPath(cert.path))?;
    check_certificate(cert, &path, assigner.params().t)
}

pub fn verify_certificate(cert: &Certificate, rand: &BlockRandomness, params: &SystemParams) -> bool {
    verify_certificate_detailed(cert, rand, &Assigner::new(params)).is_ok()
}

/// Derives the paths a transaction is submitted on. Duplicate ids collapse.
pub fn submit(path_ids: &[u32], rand: &BlockRandomness, assigner: &Assigner) -> Result<Vec<PathSpec>> {
    let ids: BTreeSet<u32> = path_ids.iter().copied().collect();
    ids.into_iter().map(|id| assigner.checked_path(id, rand)).collect()
}

/// One traversal's state machine.
#[derive(Debug, Clone)]
pub struct Traversal {
    tx: Transaction,
    path: Arc<PathSpec>,
    tactic: Tactic,
    types: Vec<HubType>,
    t: usize,
    approvals: Vec<HubApproval>,
    collected: Vec<(NodeId, Time)>,
    held: Option<HubApproval>,
    adversary_acted: bool,
    pending_cert: Option<Certificate>,
    /// Recursive mode: per hub, per slot, signatures received and own signature `(time, reading)`.
    received: Vec<Vec<u32>>,
    signed: Vec<Vec<Option<Time>>>,
    sign_order: Vec<Vec<u32>>,
    final_arrivals: usize,
    pub record: TraversalRecord,
}

impl Traversal {
    pub fn new(spec: TraversalSpec, env: &RoutingEnv) -> Self {
        let path = spec.path;
        let k = path.hubs.len();
        let t = env.params.t as usize;
        let types = env.adversary.hub_types(&path, env.params.t);
        let usable = env.behavior.active && env.mode == TraversalMode::Iterative;
        let tactic_rejected = spec.tactic != Tactic::None && (!usable || !tactic_feasible(spec.tactic, &types));
        let tactic = if tactic_rejected { Tactic::None } else { spec.tactic };
        let hubs = path
            .hubs
            .iter()
            .map(|h| HubTiming {
                hub_index: h.hub_index,
                started: None,
                arrivals: Vec::new(),
                approved_at: None,
                inbound: 0,
                signatures: 0,
            })
            .collect();
        let q = env.params.q as usize;
        let record = TraversalRecord {
            tx: spec.tx.id,
            path_id: path.path_id,
            block: path.block,
            mode: env.mode,
            tactic,
            tactic_rejected,
            status: TraversalStatus::Pending,
            certificate: None,
            initiator_received: None,
            completed_at: None,
            delivered_at: None,
            hubs,
            submission_bytes: 0,
            delivery_bytes: 0,
            messages: 0,
        };
        Traversal {
            tx: spec.tx,
            path,
            tactic,
            types,
            t,
            approvals: Vec::with_capacity(k),
            collected: Vec::new(),
            held: None,
            adversary_acted: false,
            pending_cert: None,
            received: if env.mode == TraversalMode::Recursive { vec![vec![0; q]; k] } else { Vec::new() },
            signed: if env.mode == TraversalMode::Recursive { vec![vec![None; q]; k] } else { Vec::new() },
            sign_order: if env.mode == TraversalMode::Recursive { vec![Vec::new(); k] } else { Vec::new() },
            final_arrivals: 0,
            record,
        }
    }

    pub fn spec(&self) -> TraversalSpec {
        TraversalSpec { tx: self.tx.clone(), path: self.path.clone(), tactic: self.tactic }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.record.status, TraversalStatus::Delivered | TraversalStatus::AdversaryDelivered)
    }

    fn key(&self, leg: u64, hub: u32, slot: u32, from: u32) -> [u64; 7] {
        [self.tx.id.short(), self.path.path_id as u64, self.path.block, leg, hub as u64, slot as u64, from as u64]
    }

    fn k(&self) -> usize {
        self.path.hubs.len()
    }

    fn member(&self, hub: u32, slot: u32) -> NodeId {
        self.path.hubs[hub as usize].members[slot as usize]
    }

    /// Schedules the client's submission to the initiator.
    pub fn start(&mut self, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let d = env.net.honest_delay(&self.key(LEG_CLIENT, 0, 0, 0));
        self.record.submission_bytes += self.tx.payload_len as u64;
        self.record.messages += 1;
        out.push((self.tx.submit_time + d, RouteEvent::ClientArrive));
    }

    pub fn handle(&mut self, now: Time, ev: RouteEvent, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        match ev {
            RouteEvent::ClientArrive => {
                self.record.initiator_received = Some(now);
                if matches!(self.tactic, Tactic::Forge(_)) && env.adversary.is_corrupted(self.path.initiator()) {
                    self.forge(now, self.path.initiator(), env, out);
                }
                match env.mode {
                    TraversalMode::Iterative => self.start_hub(0, now, env, out),
                    TraversalMode::Recursive => self.recursive_launch(now, env, out),
                }
            }
            RouteEvent::Request { hub, slot } => self.on_request(now, hub, slot, env, out),
            RouteEvent::Reply { hub, slot, reading } => {
                let j = hub as usize;
                if self.approvals.len() != j || self.collected.len() >= self.t {
                    return;
                }
                self.collected.push((self.member(hub, slot), reading));
                if self.collected.len() == self.t {
                    let approval = hub_approve(
                        &self.path.hubs[j],
                        &self.approvals,
                        &self.path.hubs[..j],
                        self.t as u32,
                        &self.collected,
                        env.stamp_rule,
                    )
                    .expect("initiator-collected signatures are valid");
                    self.approve(now, approval, env, out);
                }
            }
            RouteEvent::Release { hub } => {
                if self.approvals.len() == hub as usize {
                    if let Some(a) = self.held.take() {
                        self.approve(now, a, env, out);
                    }
                }
            }
            RouteEvent::Hop { hub, slot, from } => self.on_hop(now, hub, slot, from, env, out),
            RouteEvent::FinalArrive { .. } => {
                self.final_arrivals += 1;
                if self.final_arrivals == self.t {
                    let approvals = self.recursive_approvals(env);
                    let cert = Certificate::assemble(self.tx.id, self.path.path_id, self.path.block, approvals)
                        .expect("k >= 1");
                    self.record.certificate = Some(cert);
                    self.record.status = TraversalStatus::Delivered;
                    self.record.delivered_at = Some(now);
                }
            }
            RouteEvent::Deliver => {
                self.record.certificate = self.pending_cert.take();
                self.record.status = TraversalStatus::Delivered;
                self.record.delivered_at = Some(now);
            }
            RouteEvent::AdversaryDeliver => {
                self.record.certificate = self.pending_cert.take();
                self.record.status = TraversalStatus::AdversaryDelivered;
                self.record.delivered_at = Some(now);
            }
        }
    }

    /// Marks an unfinished traversal as stalled.
    pub fn finish(&mut self) {
        if self.record.status == TraversalStatus::Pending {
            self.record.status = TraversalStatus::Stalled;
        }
    }

    fn start_hub(&mut self, j: usize, now: Time, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let init = self.path.initiator();
        let q = self.path.hubs[j].members.len() as u32;
        self.collected.clear();
        self.record.hubs[j].started = Some(now);
        for slot in 0..q {
            let m = self.member(j as u32, slot);
            let d = env.link(init, m, &self.key(LEG_REQUEST, j as u32, slot, 0));
            out.push((now + d, RouteEvent::Request { hub: j as u32, slot }));
        }
        self.record.hubs[j].inbound += q as u64;
        self.record.messages += q as u64;
        self.record.submission_bytes += q as u64 * env.params.lambda_bytes as u64;

        if let Tactic::Delay(d) = self.tactic {
            if first_blocking_hub(&self.types) == Some(j) {
                let replay = Traversal::new(TraversalSpec { tactic: Tactic::None, ..self.spec() }, &env.honest_replay());
                let cf = drive(replay, &env.honest_replay());
                if let (Some(at), Some(cert)) = (cf.hubs[j].approved_at, cf.certificate.as_ref()) {
                    let mut a = cert.approvals[j].clone();
                    a.timestamp += d;
                    self.held = Some(a);
                    out.push(((at + d).max(now), RouteEvent::Release { hub: j as u32 }));
                }
            }
        }
    }

    fn corrupted_silent(&self, j: usize, env: &RoutingEnv) -> bool {
        if !env.behavior.active {
            return false;
        }
        if env.behavior.stall_impasse && self.types[j] == HubType::Impasse {
            return true;
        }
        match self.tactic {
            Tactic::None | Tactic::AdvanceChain => false,
            Tactic::Delay(_) => first_blocking_hub(&self.types) == Some(j),
            Tactic::AdvanceReuse => j >= self.k() - trailing_corrupted(&self.types),
            Tactic::Forge(_) => true,
        }
    }

    fn on_request(&mut self, now: Time, hub: u32, slot: u32, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let j = hub as usize;
        let m = self.member(hub, slot);
        self.record.hubs[j].arrivals.push((m, now));
        if env.adversary.is_corrupted(m) && env.behavior.active {
            match self.tactic {
                Tactic::Forge(_) if !self.adversary_acted => self.forge(now, m, env, out),
                Tactic::AdvanceReuse if !self.adversary_acted && j == self.k() - trailing_corrupted(&self.types) => {
                    self.advance_reuse(now, m, env, out)
                }
                _ => {}
            }
            if self.corrupted_silent(j, env) {
                return;
            }
        }
        let reading = env.clocks.read(m, now);
        let d = env.link(m, self.path.initiator(), &self.key(LEG_REPLY, hub, slot, 0));
        self.record.hubs[j].signatures += 1;
        self.record.messages += 1;
        self.record.submission_bytes += env.params.lambda_bytes as u64;
        out.push((now + d, RouteEvent::Reply { hub, slot, reading }));
    }

    fn approve(&mut self, now: Time, approval: HubApproval, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let j = self.approvals.len();
        let ts = approval.timestamp;
        self.record.hubs[j].approved_at = Some(now);
        self.approvals.push(approval);
        let mut next = j + 1;
        if self.tactic == Tactic::AdvanceChain {
            if let Some((start, end)) = first_corrupted_chain(&self.types) {
                if start == j {
                    for h in start + 1..=end {
                        let a = self.adversary_approval(h, ts, env);
                        self.record.hubs[h].approved_at = Some(now);
                        self.approvals.push(a);
                    }
                    next = end + 1;
                }
            }
        }
        if next < self.k() {
            self.start_hub(next, now, env, out);
        } else {
            let cert = Certificate::assemble(self.tx.id, self.path.path_id, self.path.block, self.approvals.clone())
                .expect("k >= 1");
            self.pending_cert = Some(cert);
            self.record.completed_at = Some(now);
            let d = env.consensus_delay(self.path.initiator(), &self.key(LEG_DELIVER, 0, 0, 0));
            self.record.delivery_bytes += self.tx.payload_len as u64 + self.k() as u64 * env.params.lambda_bytes as u64;
            self.record.messages += 1;
            out.push((now + d, RouteEvent::Deliver));
        }
    }

    fn adversary_approval(&self, h: usize, ts: Time, env: &RoutingEnv) -> HubApproval {
        let signers: BTreeSet<NodeId> = self.path.hubs[h]
            .members
            .iter()
            .copied()
            .filter(|m| env.adversary.is_corrupted(*m))
            .take(self.t)
            .collect();
        debug_assert_eq!(signers.len(), self.t, "adversary lacks power at hub {h}");
        HubApproval { hub_index: h as u32, timestamp: ts, signers }
    }

    fn deliver_adversarial(&mut self, now: Time, from: NodeId, approvals: Vec<HubApproval>, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        self.adversary_acted = true;
        let cert = Certificate::assemble(self.tx.id, self.path.path_id, self.path.block, approvals).expect("k >= 1");
        self.pending_cert = Some(cert);
        self.record.completed_at = Some(now);
        let d = env.consensus_delay(from, &self.key(LEG_ADVERSARY, 0, 0, 0));
        self.record.delivery_bytes += self.tx.payload_len as u64 + self.k() as u64 * env.params.lambda_bytes as u64;
        self.record.messages += 1;
        out.push((now + d, RouteEvent::AdversaryDeliver));
    }

    fn forge(&mut self, now: Time, from: NodeId, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let Tactic::Forge(ts) = self.tactic else { unreachable!("forge without Forge tactic") };
        let approvals: Vec<HubApproval> = (0..self.k()).map(|h| self.adversary_approval(h, ts, env)).collect();
        for h in &mut self.record.hubs {
            h.approved_at.get_or_insert(now);
        }
        self.deliver_adversarial(now, from, approvals, env, out);
    }

    fn advance_reuse(&mut self, now: Time, from: NodeId, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let first = self.k() - trailing_corrupted(&self.types);
        debug_assert_eq!(self.approvals.len(), first);
        let ts = self.approvals[first - 1].timestamp;
        let mut approvals = self.approvals.clone();
        for h in first..self.k() {
            approvals.push(self.adversary_approval(h, ts, env));
            self.record.hubs[h].approved_at = Some(now);
        }
        self.deliver_adversarial(now, from, approvals, env, out);
    }

    fn recursive_launch(&mut self, now: Time, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let init = self.path.initiator();
        let q = self.path.hubs[0].members.len() as u32;
        self.record.hubs[0].started = Some(now);
        for slot in 0..q {
            let m = self.member(0, slot);
            let d = env.link(init, m, &self.key(LEG_HOP, 0, slot, FROM_INITIATOR));
            out.push((now + d, RouteEvent::Hop { hub: 0, slot, from: FROM_INITIATOR }));
        }
        self.record.hubs[0].inbound += q as u64;
        self.record.messages += q as u64;
        self.record.submission_bytes += q as u64 * self.tx.payload_len as u64;
    }

    fn on_hop(&mut self, now: Time, hub: u32, slot: u32, from: u32, env: &RoutingEnv, out: &mut Vec<(Time, RouteEvent)>) {
        let (j, s) = (hub as usize, slot as usize);
        let m = self.member(hub, slot);
        if self.received[j][s] == 0 {
            self.record.hubs[j].arrivals.push((m, now));
        }
        self.received[j][s] += 1;
        let ready = if j == 0 { from == FROM_INITIATOR } else { self.received[j][s] as usize >= self.t };
        if !ready || self.signed[j][s].is_some() {
            return;
        }
        if env.adversary.is_corrupted(m) && self.corrupted_silent(j, env) {
            return;
        }
        self.signed[j][s] = Some(env.clocks.read(m, now));
        self.sign_order[j].push(slot);
        self.record.hubs[j].signatures += 1;
        if self.sign_order[j].len() == self.t {
            self.record.hubs[j].approved_at = Some(now);
            if j + 1 == self.k() {
                self.record.completed_at = Some(now);
            }
        }
        let lambda = env.params.lambda_bytes as u64;
        let payload = self.tx.payload_len as u64;
        if j + 1 < self.k() {
            let next = &self.path.hubs[j + 1];
            let q = next.members.len() as u32;
            self.record.hubs[j + 1].started.get_or_insert(now);
            for s2 in 0..q {
                let to = next.members[s2 as usize];
                let d = env.link(m, to, &self.key(LEG_HOP, hub + 1, s2, slot));
                out.push((now + d, RouteEvent::Hop { hub: hub + 1, slot: s2, from: slot }));
            }
            self.record.hubs[j + 1].inbound += q as u64;
            self.record.messages += q as u64;
            self.record.submission_bytes += q as u64 * (payload + (j as u64 + 1) * lambda);
        } else {
            let d = env.consensus_delay(m, &self.key(LEG_FINAL, hub, slot, 0));
            self.record.messages += 1;
            self.record.delivery_bytes += payload + self.k() as u64 * lambda;
            out.push((now + d, RouteEvent::FinalArrive { slot }));
        }
    }

    fn recursive_approvals(&self, env: &RoutingEnv) -> Vec<HubApproval> {
        let mut approvals: Vec<HubApproval> = Vec::with_capacity(self.k());
        for (j, hub) in self.path.hubs.iter().enumerate() {
            let sigs: Vec<(NodeId, Time)> = self.sign_order[j]
                .iter()
                .take(self.t)
                .map(|&s| (hub.members[s as usize], self.signed[j][s as usize].expect("signed")))
                .collect();
            let a = hub_approve(hub, &approvals, &self.path.hubs[..j], self.t as u32, &sigs, env.stamp_rule)
                .expect("recursive hubs approve in order");
            approvals.push(a);
        }
        approvals
    }
}

fn drive(mut trav: Traversal, env: &RoutingEnv) -> TraversalRecord {
    let mut queue = EventQueue::new(trav.tx.submit_time.min(0));
    let mut out = Vec::new();
    trav.start(env, &mut out);
    loop {
        for (due, ev) in out.drain(..) {
            queue.schedule(due, ev).expect("traversal events are never in the past");
        }
        let Some((token, ev)) = queue.pop() else { break };
        trav.handle(token.due, ev, env, &mut out);
    }
    trav.finish();
    trav.record
}

/// Runs one traversal to completion on a private event queue.
pub fn run_traversal(spec: TraversalSpec, env: &RoutingEnv) -> TraversalRecord {
    let trav = Traversal::new(spec, env);
    drive(trav, env)
}

pub fn traverse_iterative(spec: TraversalSpec, env: &RoutingEnv) -> TraversalRecord {
    run_traversal(spec, &RoutingEnv { mode: TraversalMode::Iterative, ..*env })
}

pub fn traverse_recursive(spec: TraversalSpec, env: &RoutingEnv) -> TraversalRecord {
    run_traversal(spec, &RoutingEnv { mode: TraversalMode::Recursive, ..*env })
}

/// Locked timestamp of the same traversal with every node following the protocol.
pub fn counterfactual_locked_ts(spec: &TraversalSpec, env: &RoutingEnv) -> Option<Time> {
    let replay = TraversalSpec { tactic: Tactic::None, ..spec.clone() };
    run_traversal(replay, &env.honest_replay()).certificate.map(|c| c.locked_ts)
}

/// When the adversary could first read the payload carried by one traversal.
pub fn reveal(tx: &Transaction, path: &PathSpec, record: &TraversalRecord, policy: &RevealPolicy, adv: &AdversaryState) -> Result<RevealRecord> {
    let corrupt_in = |hub: &HubSpec| hub.members.iter().any(|m| adv.is_corrupted(*m));
    let init_bad = adv.is_corrupted(path.initiator());
    let public = if adv.corrupted.is_empty() { None } else { record.delivered_at };
    let contacts_after = |from: usize| {
        record.hubs[from..]
            .iter()
            .flat_map(|h| h.arrivals.iter())
            .filter(|(m, _)| adv.is_corrupted(*m))
            .map(|&(_, at)| at)
            .min()
    };

    if !tx.hidden {
        let candidates = [record.initiator_received.filter(|_| init_bad), contacts_after(0), public];
        return Ok(RevealRecord {
            tx: tx.id,
            path: path.path_id,
            adversary_knowledge_time: candidates.into_iter().flatten().min(),
            reveal_time: record.initiator_received,
        });
    }

    let k = path.hubs.len() as u32;
    let gate = if policy.layered {
        policy.decrypt_hub_indices.iter().next_back()
    } else {
        policy.decrypt_hub_indices.iter().next()
    };
    let Some(&r) = gate else {
        return Err(Error::Domain("hidden transaction needs at least one decryption hub".into()));
    };
    if r >= k {
        return Err(Error::Domain(format!("decryption hub {r} outside path of {k} hubs")));
    }
    let r = r as usize;
    let reveal_time = record.hubs[r].approved_at;
    let knowledge = reveal_time.and_then(|rt| {
        let at_gate = (init_bad || corrupt_in(&path.hubs[r])).then_some(rt);
        [at_gate, contacts_after(r + 1), public].into_iter().flatten().min()
    });
    Ok(RevealRecord { tx: tx.id, path: path.path_id, adversary_knowledge_time: knowledge, reveal_time })
}
