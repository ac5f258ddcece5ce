//! Monte Carlo estimates of path-table corruption and client success, with the
//! matching closed-form values for comparison.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{corrupt, corrupt_unchecked, AdversaryState};
use crate::analysis::{binomial_pass_prob, hypergeometric_pass_prob, success_probability};
use crate::assignment::{derive_hub, BlockRandomness};
use crate::error::{Error, Result};
use crate::harness::stats::{Proportion, Z_99};
use crate::simnet::{split_seed, stream_rng, Stream};
use crate::types::SystemParams;

/// Smallest trial count accepted.
pub const MIN_TRIALS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    /// Distinct paths a client tries. Zero skips the client estimate.
    pub client_paths: u32,
    /// Scan the full path table for a corrupted path.
    pub table_scan: bool,
    /// Permit `f > (n-1)/3`.
    pub allow_stress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticValues {
    pub p_h_binomial: f64,
    pub p_d_binomial: f64,
    pub p_h_hypergeometric: f64,
    pub p_d_hypergeometric: f64,
    pub success_binomial: f64,
    pub success_hypergeometric: f64,
    /// `paths * g_d` with hypergeometric `p_d`.
    pub corrupted_union_bound: f64,
    /// `1 - (1 - g_d)^paths`, treating paths as independent.
    pub corrupted_independent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionEstimate {
    pub trials: u64,
    pub n: u32,
    pub f: u32,
    pub q: u32,
    pub t: u32,
    pub k: u32,
    pub paths_per_block: u32,
    pub options: MonteCarloOptions,
    /// Trials whose table holds at least one corrupted path. Absent without a table scan.
    pub some_corrupted: Option<Proportion>,
    /// Trials in which some tried path was regular. Absent when `client_paths == 0`.
    pub client_success: Option<Proportion>,
    pub analytic: AnalyticValues,
}

pub fn analytic_values(params: &SystemParams, client_paths: u32) -> Result<AnalyticValues> {
    let (n, f, q, t, k) = (params.n, params.f(), params.q, params.t, params.k);
    let frac = f as f64 / n as f64;
    let p_h_binomial = binomial_pass_prob(q, t, 1.0 - frac)?;
    let p_d_binomial = binomial_pass_prob(q, t, frac)?;
    let p_h_hypergeometric = hypergeometric_pass_prob(n, n - f, q, t)?;
    let p_d_hypergeometric = hypergeometric_pass_prob(n, f, q, t)?;
    let g_d = p_d_hypergeometric.powi(k as i32);
    let paths = params.paths_per_block() as f64;
    Ok(AnalyticValues {
        p_h_binomial,
        p_d_binomial,
        p_h_hypergeometric,
        p_d_hypergeometric,
        success_binomial: success_probability(p_h_binomial.powi(k as i32), client_paths),
        success_hypergeometric: success_probability(p_h_hypergeometric.powi(k as i32), client_paths),
        corrupted_union_bound: paths * g_d,
        corrupted_independent: -(paths * (-g_d).ln_1p()).exp_m1(),
    })
}

fn hub_count(path: u32, hub: u32, params: &SystemParams, rand: &BlockRandomness, adv: &AdversaryState) -> u32 {
    let spec = derive_hub(path, hub, params.q, rand, params.n);
    adv.composition(&spec).1
}

fn path_corrupted(path: u32, params: &SystemParams, rand: &BlockRandomness, adv: &AdversaryState) -> bool {
    (0..params.k).all(|j| hub_count(path, j, params, rand, adv) >= params.t)
}

fn path_regular(path: u32, params: &SystemParams, rand: &BlockRandomness, adv: &AdversaryState) -> bool {
    (0..params.k).all(|j| params.q - hub_count(path, j, params, rand, adv) >= params.t)
}

fn one_trial(params: &SystemParams, opts: &MonteCarloOptions, seed: u64) -> Result<(bool, bool)> {
    let adv = if opts.allow_stress { corrupt_unchecked(seed, params.n, params.f()) } else { corrupt(seed, params.n, params.f())? };
    let rand = BlockRandomness::from_beacon(seed, 0);
    let corrupted = opts.table_scan && (0..params.paths_per_block()).any(|p| path_corrupted(p, params, &rand, &adv));
    let success = opts.client_paths > 0 && {
        let mut rng = stream_rng(seed, Stream::Workload);
        let chosen = sample(&mut rng, params.paths_per_block() as usize, opts.client_paths as usize);
        chosen.iter().any(|p| path_regular(p as u32, params, &rand, &adv))
    };
    Ok((corrupted, success))
}

/// Runs `trials` independent corruption draws. Each trial reseeds corruption,
/// block randomness and the client's path choice from `split_seed(seed, i)`.
/// The result does not depend on the thread count.
pub fn monte_carlo_corruption(params: &SystemParams, opts: MonteCarloOptions, trials: u64, seed: u64) -> Result<CorruptionEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParams(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if opts.allow_stress {
        params.validate()?;
    } else {
        params.validate_bft()?;
    }
    if opts.client_paths > params.paths_per_block() {
        return Err(Error::Infeasible(format!(
            "client_paths {} exceeds paths_per_block {}",
            opts.client_paths,
            params.paths_per_block()
        )));
    }
    let (corrupted, success) = (0..trials)
        .into_par_iter()
        .map(|i| one_trial(params, &opts, split_seed(seed, i)).map(|(c, s)| (c as u64, s as u64)))
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(CorruptionEstimate {
        trials,
        n: params.n,
        f: params.f(),
        q: params.q,
        t: params.t,
        k: params.k,
        paths_per_block: params.paths_per_block(),
        options: opts,
        some_corrupted: opts.table_scan.then(|| Proportion::new(corrupted, trials, Z_99)),
        client_success: (opts.client_paths > 0).then(|| Proportion::new(success, trials, Z_99)),
        analytic: analytic_values(params, opts.client_paths)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_few_trials_and_oversized_client() {
        let p = SystemParams::new(31, 1, 1, 3, 10, 1);
        let opts = MonteCarloOptions { client_paths: 2, table_scan: true, allow_stress: false };
        assert!(matches!(monte_carlo_corruption(&p, opts, 10, 1), Err(Error::InvalidParams(_))));
        let big = MonteCarloOptions { client_paths: 32, ..opts };
        assert!(matches!(monte_carlo_corruption(&p, big, 1000, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn deterministic_and_matches_closed_form() {
        let p = SystemParams::new(61, 1, 1, 2, 10, 1);
        let opts = MonteCarloOptions { client_paths: 3, table_scan: false, allow_stress: false };
        let a = monte_carlo_corruption(&p, opts, 4000, 9).unwrap();
        let b = monte_carlo_corruption(&p, opts, 4000, 9).unwrap();
        assert_eq!(a, b);
        let s = a.client_success.unwrap();
        assert!(s.contains(a.analytic.success_hypergeometric), "{s:?} vs {}", a.analytic.success_hypergeometric);
        assert!(a.some_corrupted.is_none());
    }

    #[test]
    fn singleton_analytic_is_binomial() {
        let p = SystemParams::new(90, 1, 1, 4, 10, 1);
        let a = analytic_values(&p, 5).unwrap();
        assert!((a.p_h_binomial - 60.0 / 90.0).abs() < 1e-12);
        assert!((a.p_h_hypergeometric - a.p_h_binomial).abs() < 1e-12);
        assert!(a.corrupted_independent <= a.corrupted_union_bound);
    }
}
