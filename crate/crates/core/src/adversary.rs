//! Static adversary: corrupted node set, path classification, timestamp tactics
//! and the sandwich-attack planner.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordering::{total_order, CanonicalEntry};
use crate::simnet::{keyed_unit, stream_rng, stream_seed, Stream};
use crate::types::{classify_hub, HubSpec, HubType, NodeId, PathSpec, Time, Transaction, TxId};

/// What the adversary does with one `(transaction, path)` traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tactic {
    None,
    /// Hold the first hub honest members cannot approve alone for this many ticks.
    Delay(Time),
    /// Approve the trailing corrupted hubs centrally, reusing the last honest timestamp.
    AdvanceReuse,
    /// Approve a run of consecutive corrupted hubs at once with the first one's timestamp.
    AdvanceChain,
    /// Fabricate the whole certificate with this timestamp.
    Forge(Time),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathClass {
    Regular,
    Mixed,
    Corrupted,
    ContainsImpasse,
}

#[derive(Debug, Clone, Default)]
pub struct AdversaryState {
    pub corrupted: BTreeSet<NodeId>,
    mask: Vec<bool>,
    pub tactics: BTreeMap<(TxId, u32), Tactic>,
}

impl AdversaryState {
    pub fn new(n: u32, corrupted: impl IntoIterator<Item = NodeId>) -> Self {
        let corrupted: BTreeSet<NodeId> = corrupted.into_iter().collect();
        let mut mask = vec![false; n as usize];
        for node in &corrupted {
            mask[node.index()] = true;
        }
        AdversaryState { corrupted, mask, tactics: BTreeMap::new() }
    }

    pub fn honest(n: u32) -> Self {
        Self::new(n, [])
    }

    pub fn n(&self) -> u32 {
        self.mask.len() as u32
    }

    pub fn is_corrupted(&self, node: NodeId) -> bool {
        self.mask.get(node.index()).copied().unwrap_or(false)
    }

    pub fn tactic(&self, tx: TxId, path: u32) -> Tactic {
        self.tactics.get(&(tx, path)).copied().unwrap_or(Tactic::None)
    }

    pub fn composition(&self, hub: &HubSpec) -> (u32, u32) {
        let bad = hub.members.iter().filter(|m| self.is_corrupted(**m)).count() as u32;
        (hub.members.len() as u32 - bad, bad)
    }

    pub fn hub_type(&self, hub: &HubSpec, t: u32) -> HubType {
        let (h, m) = self.composition(hub);
        classify_hub(h, m, t)
    }

    pub fn hub_types(&self, path: &PathSpec, t: u32) -> Vec<HubType> {
        path.hubs.iter().map(|h| self.hub_type(h, t)).collect()
    }
}

/// Uniformly random `f`-subset from the run's corruption stream. Enforces `f <= (n-1)/3`.
pub fn corrupt(seed: u64, n: u32, f: u32) -> Result<AdversaryState> {
    if n == 0 || f > (n - 1) / 3 {
        return Err(Error::InvalidParams(format!("f={f} exceeds (n-1)/3 for n={n}")));
    }
    Ok(corrupt_unchecked(seed, n, f))
}

/// As [`corrupt`] without the BFT bound, for stress configurations.
pub fn corrupt_unchecked(seed: u64, n: u32, f: u32) -> AdversaryState {
    assert!(f <= n, "cannot corrupt {f} of {n} nodes");
    let mut rng = stream_rng(seed, Stream::Corruption);
    let picked = sample(&mut rng, n as usize, f as usize);
    AdversaryState::new(n, picked.into_iter().map(|i| NodeId(i as u32)))
}

pub fn classify_types(types: &[HubType]) -> PathClass {
    if types.iter().any(|t| matches!(t, HubType::Impasse)) {
        PathClass::ContainsImpasse
    } else if types.iter().all(|t| matches!(t, HubType::Regular)) {
        PathClass::Regular
    } else if types.iter().all(|t| matches!(t, HubType::Corrupted)) {
        PathClass::Corrupted
    } else {
        PathClass::Mixed
    }
}

pub fn classify_path(path: &PathSpec, adv: &AdversaryState, t: u32) -> PathClass {
    classify_types(&adv.hub_types(path, t))
}

fn honest_can_approve(ty: HubType) -> bool {
    matches!(ty, HubType::Regular | HubType::Both)
}

fn adversary_can_approve(ty: HubType) -> bool {
    matches!(ty, HubType::Corrupted | HubType::Both)
}

/// First hub honest members cannot approve alone.
pub fn first_blocking_hub(types: &[HubType]) -> Option<usize> {
    types.iter().position(|&t| !honest_can_approve(t))
}

/// Length of the run of adversary-approvable hubs ending at the last hub.
pub fn trailing_corrupted(types: &[HubType]) -> usize {
    types.iter().rev().take_while(|&&t| adversary_can_approve(t)).count()
}

/// First run of at least two consecutive adversary-approvable hubs, as `(start, end_inclusive)`.
pub fn first_corrupted_chain(types: &[HubType]) -> Option<(usize, usize)> {
    let mut j = 0;
    while j < types.len() {
        if adversary_can_approve(types[j]) {
            let start = j;
            while j + 1 < types.len() && adversary_can_approve(types[j + 1]) {
                j += 1;
            }
            if j > start {
                return Some((start, j));
            }
        }
        j += 1;
    }
    None
}

/// Whether the adversary holds enough power on the path to run `tactic`.
pub fn tactic_feasible(tactic: Tactic, types: &[HubType]) -> bool {
    match tactic {
        Tactic::None => true,
        Tactic::Delay(d) => d > 0 && first_blocking_hub(types).is_some(),
        Tactic::AdvanceReuse => {
            let x = trailing_corrupted(types);
            x >= 1 && x < types.len()
        }
        Tactic::AdvanceChain => first_corrupted_chain(types).is_some(),
        Tactic::Forge(_) => !types.is_empty() && types.iter().all(|&t| adversary_can_approve(t)),
    }
}

/// How the tactic planner assigns tactics to traversals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TacticPolicy {
    /// Chance a non-victim traversal is delayed (when feasible).
    pub delay_prob: f64,
    pub delay_amount: Time,
    /// Chance a non-victim traversal is advanced (when feasible).
    pub advance_prob: f64,
    /// Forge certificates on fully corrupted paths.
    pub forge: bool,
    /// Forged timestamp is the submit time minus this offset.
    pub forge_offset: Time,
    /// Fraction of transactions singled out as victims: every feasible path is delayed.
    pub victim_fraction: f64,
    pub victim_delay: Time,
}

impl Default for TacticPolicy {
    fn default() -> Self {
        TacticPolicy {
            delay_prob: 0.0,
            delay_amount: 100,
            advance_prob: 0.0,
            forge: false,
            forge_offset: 1000,
            victim_fraction: 0.0,
            victim_delay: 1000,
        }
    }
}

impl TacticPolicy {
    pub fn is_victim(&self, seed: u64, tx: TxId) -> bool {
        self.victim_fraction > 0.0 && keyed_unit(stream_seed(seed, Stream::Tactics), &[tx.short(), 0x7669_6374]) < self.victim_fraction
    }

    /// Picks the tactic for one traversal. Infeasible choices fall back to [`Tactic::None`].
    pub fn choose(&self, seed: u64, tx: &Transaction, path: &PathSpec, types: &[HubType]) -> Tactic {
        let feasible = |t: Tactic| if tactic_feasible(t, types) { t } else { Tactic::None };
        if self.is_victim(seed, tx.id) {
            return feasible(Tactic::Delay(self.victim_delay));
        }
        if self.forge && tactic_feasible(Tactic::Forge(0), types) {
            return Tactic::Forge(tx.submit_time - self.forge_offset);
        }
        let u = keyed_unit(stream_seed(seed, Stream::Tactics), &[tx.id.short(), path.path_id as u64]);
        if u < self.advance_prob {
            if tactic_feasible(Tactic::AdvanceReuse, types) {
                return Tactic::AdvanceReuse;
            }
            return feasible(Tactic::AdvanceChain);
        }
        if u < self.advance_prob + self.delay_prob {
            return feasible(Tactic::Delay(self.delay_amount));
        }
        Tactic::None
    }
}

/// Constant-product pool `x * y = k` with a proportional fee on input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantProductPool {
    pub reserve_base: f64,
    pub reserve_quote: f64,
    pub fee: f64,
}

impl ConstantProductPool {
    pub fn new(reserve_base: f64, reserve_quote: f64, fee: f64) -> Self {
        ConstantProductPool { reserve_base, reserve_quote, fee }
    }

    pub fn buy_base(&mut self, quote_in: f64) -> f64 {
        let eff = quote_in * (1.0 - self.fee);
        let out = self.reserve_base * eff / (self.reserve_quote + eff);
        self.reserve_quote += quote_in;
        self.reserve_base -= out;
        out
    }

    pub fn sell_base(&mut self, base_in: f64) -> f64 {
        let eff = base_in * (1.0 - self.fee);
        let out = self.reserve_quote * eff / (self.reserve_base + eff);
        self.reserve_base += base_in;
        self.reserve_quote -= out;
        out
    }
}

/// Market and adversary capabilities used to score sandwich attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub pool: ConstantProductPool,
    pub victim_quote_in: f64,
    pub front_quote_in: f64,
    /// Ticks between learning the victim payload and holding a locked front-run timestamp.
    pub trap_lead: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScript {
    pub victim: TxId,
    pub knowledge_time: Option<Time>,
    /// Submission instant of the front-run, if the adversary ever learns the payload.
    pub front_submit: Option<Time>,
    /// Earliest timestamp the front-run can lock.
    pub front_ts: Option<Time>,
    pub front_id: TxId,
    pub back_id: TxId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichOutcome {
    /// Front-run lands before the victim in the final order.
    pub trap_placeable: bool,
    /// Front-run and back-run bracket the victim in the final order.
    pub success: bool,
    /// Quote-token profit of the front/back pair, executed in ledger order.
    pub profit: f64,
}

/// Plans a sandwich around `victim` given when the adversary first saw its payload.
pub fn plan_sandwich(victim: &Transaction, knowledge_time: Option<Time>, adv: &AdversaryState, market: &MarketModel) -> AttackScript {
    let knowledge = if adv.corrupted.is_empty() { None } else { knowledge_time };
    AttackScript {
        victim: victim.id,
        knowledge_time: knowledge,
        front_submit: knowledge,
        front_ts: knowledge.map(|k| k + market.trap_lead),
        front_id: TxId::synthetic(u64::MAX, victim.id.short(), 1),
        back_id: TxId::synthetic(u64::MAX - 1, victim.id.short(), 1),
    }
}

/// Inserts the attack into the ledger and scores it. The back-run is always
/// placeable right after the victim, so success hinges on the front-run.
pub fn evaluate_sandwich(script: &AttackScript, ledger: &[CanonicalEntry], market: &MarketModel) -> Option<SandwichOutcome> {
    let victim = ledger.iter().find(|e| e.tx == script.victim)?;
    let front_ts = script.front_ts?;
    let mut entries: Vec<CanonicalEntry> = ledger.to_vec();
    entries.push(CanonicalEntry::synthetic(script.front_id, front_ts));
    entries.push(CanonicalEntry::synthetic(script.back_id, victim.canonical_ts + 1));
    let order = total_order(entries);
    let pos = |id: TxId| order.iter().position(|e| e.tx == id).expect("entry present");
    let (f, v, b) = (pos(script.front_id), pos(script.victim), pos(script.back_id));

    let mut pool = market.pool;
    let mut bought = 0.0;
    let mut proceeds = 0.0;
    let mut steps = [(f, 0u8), (v, 1), (b, 2)];
    steps.sort();
    for (_, who) in steps {
        match who {
            0 => bought = pool.buy_base(market.front_quote_in),
            1 => {
                pool.buy_base(market.victim_quote_in);
            }
            _ => proceeds = pool.sell_base(bought),
        }
    }
    Some(SandwichOutcome {
        trap_placeable: f < v,
        success: f < v && v < b,
        profit: proceeds - market.front_quote_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::binomial_pass_prob;
    use crate::assignment::{derive_path, BlockRandomness};
    use crate::types::SystemParams;
    use proptest::prelude::*;

    fn hub(ids: &[u32]) -> HubSpec {
        HubSpec { hub_index: 0, members: ids.iter().map(|&i| NodeId(i)).collect() }
    }

    #[test]
    fn corrupt_examples() {
        assert!(corrupt(1, 10, 0).unwrap().corrupted.is_empty());
        assert_eq!(corrupt(1, 4, 1).unwrap().corrupted.len(), 1);
        assert!(corrupt(1, 4, 2).is_err());
        assert_eq!(corrupt_unchecked(1, 180, 60).corrupted.len(), 60);
        assert_eq!(corrupt(9, 100, 33).unwrap().corrupted, corrupt(9, 100, 33).unwrap().corrupted);
    }

    #[test]
    fn corruption_is_uniform() {
        let (n, f, seeds) = (12u32, 3u32, 100_000u64);
        let mut counts = vec![0u64; n as usize];
        for s in 0..seeds {
            for node in corrupt(s, n, f).unwrap().corrupted {
                counts[node.index()] += 1;
            }
        }
        let p = f as f64 / n as f64;
        let sigma = (seeds as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - seeds as f64 * p).abs() <= 4.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn path_classes() {
        let adv = AdversaryState::new(10, [NodeId(0), NodeId(1), NodeId(2)]);
        let path = |hubs: Vec<HubSpec>| PathSpec { path_id: 0, block: 0, hubs };
        assert_eq!(classify_path(&path(vec![hub(&[5, 6, 7]), hub(&[3, 4, 0])]), &adv, 2), PathClass::Regular);
        assert_eq!(classify_path(&path(vec![hub(&[0, 1, 7]), hub(&[3, 4, 0])]), &adv, 2), PathClass::Mixed);
        assert_eq!(classify_path(&path(vec![hub(&[0, 1, 7]), hub(&[2, 1, 0])]), &adv, 2), PathClass::Corrupted);
        assert_eq!(classify_path(&path(vec![hub(&[0, 1, 7, 8]), hub(&[5, 6, 7, 8])]), &adv, 3), PathClass::ContainsImpasse);
        let honest = AdversaryState::honest(10);
        assert_ne!(classify_path(&path(vec![hub(&[0, 1, 2])]), &honest, 2), PathClass::Corrupted);
    }

    #[test]
    fn feasibility_examples() {
        use HubType::*;
        assert!(tactic_feasible(Tactic::Delay(5), &[Regular, Corrupted]));
        assert!(!tactic_feasible(Tactic::Delay(5), &[Regular, Regular]));
        assert!(!tactic_feasible(Tactic::Delay(0), &[Corrupted]));
        assert!(tactic_feasible(Tactic::AdvanceReuse, &[Regular, Corrupted]));
        assert!(!tactic_feasible(Tactic::AdvanceReuse, &[Corrupted, Corrupted]));
        assert!(!tactic_feasible(Tactic::AdvanceReuse, &[Corrupted, Regular]));
        assert!(tactic_feasible(Tactic::AdvanceChain, &[Regular, Corrupted, Corrupted, Regular]));
        assert!(!tactic_feasible(Tactic::AdvanceChain, &[Corrupted, Regular, Corrupted]));
        assert!(tactic_feasible(Tactic::Forge(0), &[Corrupted, Corrupted]));
        assert!(!tactic_feasible(Tactic::Forge(0), &[Regular, Regular]));
        assert_eq!(first_corrupted_chain(&[Corrupted, Regular, Corrupted, Corrupted, Corrupted]), Some((2, 4)));
        assert_eq!(trailing_corrupted(&[Regular, Corrupted, Corrupted]), 2);
    }

    fn brute_power(members: &[(bool, ())], t: u32) -> (bool, bool) {
        let honest = members.iter().filter(|(bad, _)| !bad).count() as u32;
        let bad = members.len() as u32 - honest;
        (honest >= t, bad >= t)
    }

    proptest! {
        #[test]
        fn feasibility_matches_brute_force(
            hubs in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 5), 1..6),
            t in 3u32..=5,
        ) {
            let types: Vec<HubType> = hubs.iter().map(|h| {
                let bad = h.iter().filter(|b| **b).count() as u32;
                classify_hub(5 - bad, bad, t)
            }).collect();
            let power: Vec<(bool, bool)> = hubs.iter().map(|h| {
                let m: Vec<(bool, ())> = h.iter().map(|b| (*b, ())).collect();
                brute_power(&m, t)
            }).collect();
            let k = power.len();
            let delay = power.iter().any(|(honest, _)| !honest);
            let mut trailing = 0;
            while trailing < k && power[k - 1 - trailing].1 { trailing += 1; }
            let reuse = trailing >= 1 && trailing < k;
            let chain = (0..k.saturating_sub(1)).any(|j| power[j].1 && power[j + 1].1);
            let forge = power.iter().all(|(_, adv)| *adv);
            prop_assert_eq!(tactic_feasible(Tactic::Delay(1), &types), delay);
            prop_assert_eq!(tactic_feasible(Tactic::AdvanceReuse, &types), reuse);
            prop_assert_eq!(tactic_feasible(Tactic::AdvanceChain, &types), chain);
            prop_assert_eq!(tactic_feasible(Tactic::Forge(0), &types), forge);
        }
    }

    #[test]
    fn corrupted_path_rate_matches_analysis() {
        let mut p = SystemParams::new(900, 3, 2, 2, 10, 1);
        p.paths_per_block = Some(900);
        let adv = corrupt(5, 900, 299).unwrap();
        let samples = 60_000u32;
        let mut hits = 0u32;
        for i in 0..samples {
            let r = BlockRandomness::from_beacon(i as u64 / 900, i as u64 / 900);
            let path = derive_path(i % 900, &r, &p);
            if classify_path(&path, &adv, 2) == PathClass::Corrupted {
                hits += 1;
            }
        }
        let g = binomial_pass_prob(3, 2, 299.0 / 900.0).unwrap().powi(2);
        let emp = hits as f64 / samples as f64;
        let sigma = (g * (1.0 - g) / samples as f64).sqrt();
        // hypergeometric vs binomial gap at q=3, n=900 is far below sigma
        assert!((emp - g).abs() <= 3.0 * sigma + 2e-4, "emp {emp} vs {g}");
    }

    #[test]
    fn pool_round_trip_with_fee_loses() {
        let mut pool = ConstantProductPool::new(1000.0, 1000.0, 0.003);
        let base = pool.buy_base(10.0);
        let back = pool.sell_base(base);
        assert!(back < 10.0);
    }

    fn entry(id: TxId, ts: Time) -> CanonicalEntry {
        CanonicalEntry::synthetic(id, ts)
    }

    fn market(lead: Time) -> MarketModel {
        MarketModel {
            pool: ConstantProductPool::new(10_000.0, 10_000.0, 0.003),
            victim_quote_in: 500.0,
            front_quote_in: 300.0,
            trap_lead: lead,
        }
    }

    #[test]
    fn sandwich_success_and_loss() {
        let victim = Transaction::new(1, 1, 100, 0, false).unwrap();
        let other = Transaction::new(2, 1, 100, 0, false).unwrap();
        let adv = AdversaryState::new(4, [NodeId(3)]);
        let ledger = total_order(vec![entry(victim.id, 50), entry(other.id, 10)]);

        let early = plan_sandwich(&victim, Some(20), &adv, &market(20));
        let out = evaluate_sandwich(&early, &ledger, &market(20)).unwrap();
        assert!(out.trap_placeable && out.success);
        assert!(out.profit > 0.0, "profit {}", out.profit);

        let late = plan_sandwich(&victim, Some(45), &adv, &market(20));
        let out = evaluate_sandwich(&late, &ledger, &market(20)).unwrap();
        assert!(!out.trap_placeable && !out.success);
        assert!(out.profit < 0.0, "profit {}", out.profit);
    }

    #[test]
    fn no_corruption_no_attack() {
        let victim = Transaction::new(1, 1, 100, 0, false).unwrap();
        let script = plan_sandwich(&victim, Some(0), &AdversaryState::honest(4), &market(1));
        assert!(script.knowledge_time.is_none());
        let ledger = vec![entry(victim.id, 50)];
        assert!(evaluate_sandwich(&script, &ledger, &market(1)).is_none());
    }

    #[test]
    fn policy_respects_feasibility() {
        use HubType::*;
        let tx = Transaction::new(1, 1, 10, 500, false).unwrap();
        let path = PathSpec { path_id: 3, block: 0, hubs: vec![] };
        let all = TacticPolicy { delay_prob: 0.5, advance_prob: 0.5, ..Default::default() };
        for seed in 0..50 {
            let t = all.choose(seed, &tx, &path, &[Regular, Regular]);
            assert_eq!(t, Tactic::None);
            let t = all.choose(seed, &tx, &path, &[Regular, Corrupted]);
            assert!(matches!(t, Tactic::AdvanceReuse | Tactic::Delay(100)), "{t:?}");
        }
        let forge = TacticPolicy { forge: true, ..Default::default() };
        assert_eq!(forge.choose(0, &tx, &path, &[Corrupted, Corrupted]), Tactic::Forge(-500));
        let victims = TacticPolicy { victim_fraction: 1.0, victim_delay: 77, ..Default::default() };
        assert_eq!(victims.choose(0, &tx, &path, &[Corrupted, Regular]), Tactic::Delay(77));
        assert_eq!(victims.choose(0, &tx, &path, &[Regular]), Tactic::None);
    }
}
