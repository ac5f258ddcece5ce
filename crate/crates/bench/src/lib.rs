//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use travelers_core::adversary::{corrupt, AdversaryState, Tactic};
use travelers_core::assignment::{derive_path, BlockRandomness};
use travelers_core::harness::ExperimentConfig;
use travelers_core::routing::{Behavior, RoutingEnv, StampRule, TraversalMode, TraversalSpec};
use travelers_core::simnet::{ClockModel, NetModel};
use travelers_core::{SystemParams, Transaction};

pub struct RoutingFixture {
    pub params: SystemParams,
    pub clocks: ClockModel,
    pub net: NetModel,
    pub adversary: AdversaryState,
    pub specs: Vec<TraversalSpec>,
}

impl RoutingFixture {
    pub fn new(n: u32, q: u32, t: u32, k: u32, paths: u32) -> Self {
        let params = SystemParams::new(n, q, t, k, 10, 2);
        let rand = BlockRandomness::from_beacon(7, 0);
        let specs = (0..paths)
            .map(|p| TraversalSpec {
                tx: Transaction::new(1, p as u64, 250, 0, false).expect("valid transaction"),
                path: Arc::new(derive_path(p % params.paths_per_block(), &rand, &params)),
                tactic: Tactic::None,
            })
            .collect();
        RoutingFixture {
            clocks: ClockModel::zero(n),
            net: NetModel::new(1, 10, 3).expect("valid delays"),
            adversary: corrupt(5, n, params.f()).expect("bft bound"),
            params,
            specs,
        }
    }

    pub fn env(&self, mode: TraversalMode) -> RoutingEnv<'_> {
        RoutingEnv {
            params: &self.params,
            clocks: &self.clocks,
            net: &self.net,
            adversary: &self.adversary,
            behavior: Behavior::default(),
            stamp_rule: StampRule::ThresholdSigner,
            mode,
        }
    }
}

/// Small adversarial experiment used for end-to-end timing.
pub fn small_experiment(transactions: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(SystemParams::new(64, 3, 2, 3, 10, 2));
    cfg.block_interval = 50;
    cfg.workload.transactions = transactions;
    cfg.adversary.policy.delay_prob = 0.3;
    cfg.adversary.policy.advance_prob = 0.3;
    cfg
}
