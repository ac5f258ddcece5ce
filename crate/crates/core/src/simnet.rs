//! Deterministic discrete-event engine with bounded latency and clock skew.
//!
//! Randomness comes from one run seed split into named streams. Sequential
//! consumers (clock offsets, corruption, workload) get a ChaCha stream each.
//! Message delays use a keyed stream: the delay of a message is a pure function
//! of the stream seed and a message key, so replaying one traversal in
//! isolation reproduces its timing exactly.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::types::{NodeId, Time};

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Delays,
    Offsets,
    Corruption,
    Workload,
    Tactics,
    Censorship,
    Beacon,
}

impl Stream {
    fn name(self) -> &'static str {
        match self {
            Stream::Delays => "delays",
            Stream::Offsets => "offsets",
            Stream::Corruption => "corruption",
            Stream::Workload => "workload",
            Stream::Tactics => "tactics",
            Stream::Censorship => "censorship",
            Stream::Beacon => "beacon",
        }
    }
}

/// Seed of a named stream: the first 8 bytes of `SHA-256(run_seed_le || name)`.
pub fn stream_seed(run_seed: u64, stream: Stream) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(stream.name().as_bytes());
    let d: [u8; 32] = h.finalize().into();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream_rng(run_seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(run_seed, stream))
}

/// Seed of trial `index` under `root`. Serial and parallel drivers use the same split.
pub fn split_seed(root: u64, index: u64) -> u64 {
    keyed_u64(root, &[0x7472_6961_6c73, index])
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed pseudo-random word (SplitMix64 finaliser folded over the key).
pub fn keyed_u64(seed: u64, key: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &part in key {
        h = mix64(h ^ part.wrapping_add(0x9e37_79b9_7f4a_7c15));
    }
    h
}

/// Keyed integer in `[lo, hi]`.
pub fn keyed_range(seed: u64, key: &[u64], lo: i64, hi: i64) -> i64 {
    debug_assert!(lo <= hi);
    let span = (hi - lo) as u128 + 1;
    lo + ((keyed_u64(seed, key) as u128 * span) >> 64) as i64
}

/// Keyed uniform in `[0, 1)`.
pub fn keyed_unit(seed: u64, key: &[u64]) -> f64 {
    (keyed_u64(seed, key) >> 11) as f64 / (1u64 << 53) as f64
}

/// Per-node clock offsets in `[-delta, delta]`, fixed for the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockModel {
    pub delta: Time,
    pub offsets: Vec<Time>,
}

impl ClockModel {
    pub fn sample(n: u32, delta: Time, rng: &mut impl Rng) -> Self {
        let offsets = (0..n).map(|_| if delta == 0 { 0 } else { rng.random_range(-delta..=delta) }).collect();
        ClockModel { delta, offsets }
    }

    pub fn zero(n: u32) -> Self {
        ClockModel { delta: 0, offsets: vec![0; n as usize] }
    }

    pub fn offset(&self, node: NodeId) -> Time {
        self.offsets[node.index()]
    }

    /// Local reading of `node` at true time `now`.
    pub fn read(&self, node: NodeId, now: Time) -> Time {
        let off = self.offset(node);
        assert!(off.abs() <= self.delta, "clock offset {off} of {node} exceeds skew bound {}", self.delta);
        now + off
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    /// Uniform integer in `[min_delay, max_delay]`.
    #[default]
    Uniform,
    AlwaysMax,
    AlwaysMin,
}

/// Link latency model. Honest links deliver within `max_delay` (the bound Δ);
/// links between two colluding nodes are instantaneous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetModel {
    pub min_delay: Time,
    pub max_delay: Time,
    pub distribution: DelayDistribution,
    pub delay_seed: u64,
}

impl NetModel {
    pub fn new(min_delay: Time, max_delay: Time, delay_seed: u64) -> Result<Self> {
        if min_delay < 0 || max_delay < min_delay {
            return Err(Error::InvalidParams(format!("delay range [{min_delay}, {max_delay}] is empty")));
        }
        Ok(NetModel { min_delay, max_delay, distribution: DelayDistribution::Uniform, delay_seed })
    }

    /// Delay of an honest-link message identified by `key`.
    pub fn honest_delay(&self, key: &[u64]) -> Time {
        let d = match self.distribution {
            DelayDistribution::Uniform => keyed_range(self.delay_seed, key, self.min_delay, self.max_delay),
            DelayDistribution::AlwaysMax => self.max_delay,
            DelayDistribution::AlwaysMin => self.min_delay,
        };
        assert!(d <= self.max_delay, "honest delay {d} exceeds bound {}", self.max_delay);
        d
    }

    /// Delay between `from` and `to`; zero when both endpoints collude.
    pub fn delay(&self, from_colluding: bool, to_colluding: bool, key: &[u64]) -> Time {
        if from_colluding && to_colluding {
            0
        } else {
            self.honest_delay(key)
        }
    }
}

/// Handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventToken {
    pub due: Time,
    pub sequence: u64,
}

#[derive(Debug)]
struct Pending<A> {
    token: EventToken,
    action: A,
}

impl<A> PartialEq for Pending<A> {
    fn eq(&self, other: &Self) -> bool {
        self.token == other.token
    }
}
impl<A> Eq for Pending<A> {}
impl<A> PartialOrd for Pending<A> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Pending<A> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.token.cmp(&other.token)
    }
}

/// Min-queue of actions ordered by `(due, sequence)`; equal due times fire FIFO.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Reverse<Pending<A>>>,
    now: Time,
    next_seq: u64,
    fired: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new(0)
    }
}

impl<A> EventQueue<A> {
    pub fn new(start: Time) -> Self {
        EventQueue { heap: BinaryHeap::new(), now: start, next_seq: 0, fired: 0 }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn schedule(&mut self, due: Time, action: A) -> Result<EventToken> {
        if due < self.now {
            return Err(Error::ScheduleInPast { due, now: self.now });
        }
        let token = EventToken { due, sequence: self.next_seq };
        self.next_seq += 1;
        self.heap.push(Reverse(Pending { token, action }));
        Ok(token)
    }

    pub fn peek_due(&self) -> Option<Time> {
        self.heap.peek().map(|Reverse(p)| p.token.due)
    }

    /// Removes the earliest event and advances the clock to its due time.
    pub fn pop(&mut self) -> Option<(EventToken, A)> {
        let Reverse(p) = self.heap.pop()?;
        debug_assert!(p.token.due >= self.now);
        self.now = p.token.due;
        self.fired += 1;
        Some((p.token, p.action))
    }
}

/// One line of the optional event trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub due: Time,
    pub seq: u64,
    pub event: String,
}
