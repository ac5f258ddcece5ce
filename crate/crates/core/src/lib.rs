//! Simulation and analysis toolkit for probabilistic fair-ordering BFT with
//! hub/path timestamping.
//!
//! Transactions travel along paths of `k` hubs of `q` nodes. Each hub approves
//! with `t` signatures and stamps a local-clock timestamp; the path's locked
//! timestamp is the maximum of those stamps, and the ledger orders transactions
//! by the minimum locked timestamp over their committed certificates.

pub mod adversary;
pub mod analysis;
pub mod assignment;
pub mod consensus;
pub mod error;
pub mod harness;
pub mod ordering;
pub mod routing;
pub mod simnet;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    classify_hub, locked_timestamp, locked_timestamp_checked, Certificate, HubApproval, HubSpec, HubType, NodeId,
    PathSpec, SystemParams, Time, TimestampKind, Transaction, TxId,
};
