//! Domain types shared by the routing, adversary, consensus and ordering layers.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// A point in time, in integer ticks. Both true time and local clock readings use it.
pub type Time = i64;

/// Identifier of a protocol node, an index in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node#{}", self.0)
    }
}

/// 32-byte content digest identifying a transaction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub [u8; 32]);

impl TxId {
    /// Digest of a synthetic payload. Payload content never influences the
    /// protocol, so it is described by the submitting client, a nonce and a length.
    pub fn synthetic(client: u64, nonce: u64, payload_len: u32) -> Self {
        let mut h = Sha256::new();
        h.update(b"travelers/tx/v1");
        h.update(client.to_le_bytes());
        h.update(nonce.to_le_bytes());
        h.update(payload_len.to_le_bytes());
        TxId(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight bytes, little-endian. Used to key per-transaction random streams.
    pub fn short(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("32-byte digest"))
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex()[..16])
    }
}

impl Serialize for TxId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("transaction id must be 32 bytes"))?;
        Ok(TxId(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub payload_len: u32,
    /// True-time instant at which the client hands the transaction to the network.
    pub submit_time: Time,
    pub client: u64,
    /// Payload is encrypted until a decryption hub reveals it.
    pub hidden: bool,
}

impl Transaction {
    pub fn new(client: u64, nonce: u64, payload_len: u32, submit_time: Time, hidden: bool) -> Result<Self> {
        if payload_len == 0 {
            return Err(Error::InvalidParams("payload_len must be positive".into()));
        }
        Ok(Transaction {
            id: TxId::synthetic(client, nonce, payload_len),
            payload_len,
            submit_time,
            client,
            hidden,
        })
    }
}

/// Global protocol parameters, shared by analysis and simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n: u32,
    /// Corrupted node count; defaults to `n / 3`.
    #[serde(default)]
    pub f: Option<u32>,
    /// Hub size.
    pub q: u32,
    /// Signatures needed for a hub to approve.
    pub t: u32,
    /// Path length in hubs.
    pub k: u32,
    /// Error exponent: a corrupted path exists with probability at most `n^-c`.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Boosting exponent; `c + 1` when unset.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Network latency bound, in ticks.
    pub delta_net: Time,
    /// Clock skew bound, in ticks.
    pub delta_clock: Time,
    /// Per-transaction censorship probability.
    #[serde(default)]
    pub kappa: f64,
    /// Signature / hash size in bytes.
    #[serde(default = "default_lambda")]
    pub lambda_bytes: u32,
    /// Admissible paths per block; defaults to `n`.
    #[serde(default)]
    pub paths_per_block: Option<u32>,
}

fn default_c() -> f64 {
    1.0
}

fn default_lambda() -> u32 {
    32
}

impl SystemParams {
    /// Parameters with every optional field at its default.
    pub fn new(n: u32, q: u32, t: u32, k: u32, delta_net: Time, delta_clock: Time) -> Self {
        SystemParams {
            n,
            f: None,
            q,
            t,
            k,
            c: default_c(),
            tau: None,
            delta_net,
            delta_clock,
            kappa: 0.0,
            lambda_bytes: default_lambda(),
            paths_per_block: None,
        }
    }

    pub fn f(&self) -> u32 {
        self.f.unwrap_or(self.n / 3)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.c + 1.0)
    }

    pub fn paths_per_block(&self) -> u32 {
        self.paths_per_block.unwrap_or(self.n)
    }

    /// Fairness separation for iterative traversal: `4kΔ + 2δ`.
    pub fn fairness_threshold(&self) -> Time {
        4 * self.k as Time * self.delta_net + 2 * self.delta_clock
    }

    /// Structural checks. Rejects parameters that admit hubs of type [`HubType::Both`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.q == 0 || self.q > self.n {
            return bad(format!("hub size q={} must be in [1, n={}]", self.q, self.n));
        }
        if self.t == 0 || self.t > self.q {
            return bad(format!("threshold t={} must be in [1, q={}]", self.t, self.q));
        }
        if 2 * self.t <= self.q {
            return bad(format!("threshold t={} must exceed q/2 (q={})", self.t, self.q));
        }
        if self.k == 0 {
            return bad("path length k must be at least 1".into());
        }
        if self.f() > self.n {
            return bad(format!("f={} exceeds n={}", self.f(), self.n));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad(format!("kappa={} outside [0, 1]", self.kappa));
        }
        if self.delta_net < 1 || self.delta_clock < 0 {
            return bad("delta_net must be >= 1 and delta_clock >= 0".into());
        }
        if self.lambda_bytes == 0 {
            return bad("lambda_bytes must be positive".into());
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the standard `n >= 3f + 1` assumption.
    pub fn validate_bft(&self) -> Result<()> {
        self.validate()?;
        if self.n < 3 * self.f() + 1 {
            return Err(Error::InvalidParams(format!(
                "n={} violates n >= 3f+1 with f={}",
                self.n,
                self.f()
            )));
        }
        Ok(())
    }
}

/// A hub: `q` distinct nodes at position `hub_index` of a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HubSpec {
    pub hub_index: u32,
    /// Members in slot order; slot 0 of hub 0 is the path's initiator.
    pub members: Vec<NodeId>,
}

impl HubSpec {
    pub fn contains(&self, node: NodeId) -> bool {
        self.members.contains(&node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSpec {
    pub path_id: u32,
    pub block: u64,
    pub hubs: Vec<HubSpec>,
}

impl PathSpec {
    pub fn initiator(&self) -> NodeId {
        self.hubs[0].members[0]
    }

    pub fn k(&self) -> usize {
        self.hubs.len()
    }
}

/// One hub's approval inside a certificate. Signatures are modelled as signer sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HubApproval {
    pub hub_index: u32,
    pub timestamp: Time,
    pub signers: BTreeSet<NodeId>,
}

impl HubApproval {
    /// Aggregation is set union of the signer sets.
    pub fn aggregate(&mut self, other: &HubApproval) {
        self.signers.extend(other.signers.iter().copied());
    }
}

/// Proof that a transaction traversed one path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub tx: TxId,
    pub path: u32,
    pub block: u64,
    pub approvals: Vec<HubApproval>,
    pub locked_ts: Time,
}

impl Certificate {
    /// Builds a certificate, deriving `locked_ts` from the approvals.
    pub fn assemble(tx: TxId, path: u32, block: u64, approvals: Vec<HubApproval>) -> Result<Self> {
        let mut cert = Certificate { tx, path, block, approvals, locked_ts: 0 };
        cert.locked_ts = locked_timestamp_of(&cert.approvals)?;
        Ok(cert)
    }
}

/// Ground-truth relation of a locked timestamp to its honest counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimestampKind {
    True,
    Advanced,
    Delayed,
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HubType {
    /// Honest members alone can approve; malicious members cannot.
    Regular,
    /// Neither side alone reaches the threshold.
    Impasse,
    /// Both sides could approve alone. Excluded by `t > q/2`.
    Both,
    /// Malicious members alone can approve; honest members cannot.
    Corrupted,
}

pub fn classify_hub(honest_count: u32, malicious_count: u32, t: u32) -> HubType {
    match (honest_count >= t, malicious_count >= t) {
        (true, false) => HubType::Regular,
        (false, true) => HubType::Corrupted,
        (true, true) => HubType::Both,
        (false, false) => HubType::Impasse,
    }
}

/// The maximum approval timestamp along the path. Errors on an incomplete certificate.
pub fn locked_timestamp(cert: &Certificate) -> Result<Time> {
    locked_timestamp_of(&cert.approvals)
}

fn locked_timestamp_of(approvals: &[HubApproval]) -> Result<Time> {
    approvals
        .iter()
        .map(|a| a.timestamp)
        .max()
        .ok_or(Error::IncompleteCertificate { expected: 1, found: 0 })
}

/// Same as [`locked_timestamp`] but also checks that all `k` approvals are present.
pub fn locked_timestamp_checked(cert: &Certificate, k: u32) -> Result<Time> {
    if cert.approvals.len() != k as usize {
        return Err(Error::IncompleteCertificate { expected: k as usize, found: cert.approvals.len() });
    }
    locked_timestamp(cert)
}
