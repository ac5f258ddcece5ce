//! Closed-form and exact evaluation of the routing probabilities and of the
//! per-protocol communication-complexity estimators.
//!
//! Two probabilities drive everything: `p_h`, the chance that a freshly drawn hub
//! is regular, and `p_d`, the chance that it is corrupted. A path of `k` hubs is
//! regular with `g_h = p_h^k` and corrupted with `g_d = p_d^k`. Because
//! `g_d^rho = g_h` with `rho = ln(1/p_h) / ln(1/p_d) < 1`, `k` can be chosen so
//! that `g_d` is negligible while a client retrying `L ~ 1/g_h` paths still finds
//! a regular one with constant probability.
//!
//! Binomial and hypergeometric tails are computed exactly over big rationals and
//! converted to `f64` only at the end.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logarithm convention for formulas whose published constants depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingletonPlan {
    pub n: u32,
    pub c: f64,
    pub tau: f64,
    pub rho: f64,
    pub k: u32,
    pub g_h: f64,
    pub g_d: f64,
    /// Client retry count (distinct paths tried).
    #[serde(rename = "L")]
    pub retries: u32,
    pub success: f64,
    /// `n * g_d`: chance an adversary probing `n` paths hits a corrupted one.
    pub adversary_union_bound: f64,
    /// `n^-c`.
    pub epsilon_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubPlan {
    pub q: u32,
    pub t: u32,
    pub k: u32,
    pub p_h_exact: f64,
    pub p_d_exact: f64,
    pub p_d_chernoff: f64,
    pub g_h: f64,
    pub g_d: f64,
    #[serde(rename = "L")]
    pub retries: u32,
    pub success: f64,
    /// Union bound over all paths of a block: `paths * g_d`.
    pub epsilon_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub protocol: String,
    pub submission_per_tx: f64,
    pub total: f64,
}

fn check_prob_pair(p_h: f64, p_d: f64) -> Result<()> {
    let open = |p: f64| p > 0.0 && p < 1.0;
    if !open(p_h) || !open(p_d) {
        return Err(Error::Domain(format!("probabilities must lie in (0,1): p_h={p_h}, p_d={p_d}")));
    }
    if p_h <= p_d {
        return Err(Error::Domain(format!("need p_h > p_d, got p_h={p_h}, p_d={p_d}")));
    }
    Ok(())
}

/// Boosting ratio `ln(1/p_h) / ln(1/p_d)`.
pub fn rho(p_h: f64, p_d: f64) -> Result<f64> {
    check_prob_pair(p_h, p_d)?;
    Ok((1.0 / p_h).ln() / (1.0 / p_d).ln())
}

/// Singleton-hub plan with the default path budget of `n` paths per block.
pub fn singleton_plan(n: u32, c: f64, p_h: f64, p_d: f64) -> Result<SingletonPlan> {
    singleton_plan_with_paths(n, c, p_h, p_d, n)
}

/// `tau = c + 1`, `k = ceil(tau ln n / ln(1/p_d))`, `L = floor(n^(rho tau))`.
///
/// Ceiling on `k` keeps `g_d <= n^-tau`; floor on `L` keeps the client inside
/// the path budget.
pub fn singleton_plan_with_paths(n: u32, c: f64, p_h: f64, p_d: f64, paths_per_block: u32) -> Result<SingletonPlan> {
    if n < 2 {
        return Err(Error::Domain(format!("singleton plan needs n >= 2, got {n}")));
    }
    if c.is_nan() || c < 1.0 {
        return Err(Error::Domain(format!("error exponent c must be >= 1, got {c}")));
    }
    let rho = rho(p_h, p_d)?;
    let tau = c + 1.0;
    let nf = n as f64;
    let k = (tau * nf.ln() / (1.0 / p_d).ln()).ceil() as u32;
    let g_h = p_h.powi(k as i32);
    let g_d = p_d.powi(k as i32);
    let retries = nf.powf(rho * tau).floor() as u32;
    if retries > paths_per_block {
        return Err(Error::Infeasible(format!(
            "client needs L={retries} distinct paths but only {paths_per_block} exist per block"
        )));
    }
    Ok(SingletonPlan {
        n,
        c,
        tau,
        rho,
        k,
        g_h,
        g_d,
        retries,
        success: success_probability(g_h, retries),
        adversary_union_bound: nf * g_d,
        epsilon_target: nf.powf(-c),
    })
}

fn binom_coeff(n: u32, k: u32) -> BigInt {
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn ratio_from_f64(p: f64) -> Result<BigRational> {
    BigRational::from_float(p).ok_or_else(|| Error::Domain(format!("probability {p} is not finite")))
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact `P(Bin(q, p) >= t)` for rational `p`.
pub fn binomial_pass_prob_exact(q: u32, t: u32, p: &BigRational) -> BigRational {
    let one = BigRational::one();
    let fail = &one - p;
    let mut total = BigRational::zero();
    for i in t..=q {
        let term = BigRational::from_integer(binom_coeff(q, i)) * num::pow(p.clone(), i as usize)
            * num::pow(fail.clone(), (q - i) as usize);
        total += term;
    }
    total
}

/// Exact `P(Bin(q, p) <= t - 1)`.
pub fn binomial_lower_tail_exact(q: u32, t: u32, p: &BigRational) -> BigRational {
    let one = BigRational::one();
    let fail = &one - p;
    let mut total = BigRational::zero();
    for i in 0..t.min(q + 1) {
        total += BigRational::from_integer(binom_coeff(q, i)) * num::pow(p.clone(), i as usize)
            * num::pow(fail.clone(), (q - i) as usize);
    }
    total
}

/// `P(Bin(q, p) >= t)`, summed exactly over the binary value of `p`.
pub fn binomial_pass_prob(q: u32, t: u32, p: f64) -> Result<f64> {
    if t == 0 || t > q {
        return Err(Error::Domain(format!("need 1 <= t <= q, got t={t}, q={q}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p={p} outside [0,1]")));
    }
    Ok(ratio_to_f64(&binomial_pass_prob_exact(q, t, &ratio_from_f64(p)?)))
}

/// Exact probability that a uniformly random `q`-subset of `n` nodes, `marked`
/// of which are marked, contains at least `t` marked nodes.
///
/// This is the distribution the assignment function actually realises (distinct
/// members within a hub); the binomial tail is its `n >> q` approximation.
pub fn hypergeometric_pass_prob(n: u32, marked: u32, q: u32, t: u32) -> Result<f64> {
    if q > n || marked > n {
        return Err(Error::Domain(format!("need q <= n and marked <= n (n={n}, q={q}, marked={marked})")));
    }
    if t == 0 || t > q {
        return Err(Error::Domain(format!("need 1 <= t <= q, got t={t}, q={q}")));
    }
    let total = binom_coeff(n, q);
    let mut hits = BigInt::zero();
    for i in t..=q.min(marked) {
        if q - i > n - marked {
            continue;
        }
        hits += binom_coeff(marked, i) * binom_coeff(n - marked, q - i);
    }
    Ok(ratio_to_f64(&BigRational::new(hits, total)))
}

/// Kullback-Leibler divergence between Bernoulli(`a`) and Bernoulli(`p`), natural log.
/// `a` may sit on the boundary (`0 ln 0 = 0`); `p` must be in `(0,1)`.
pub fn kl_divergence(a: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) || !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("KL divergence needs a in [0,1], p in (0,1): a={a}, p={p}")));
    }
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    Ok(term(a, p) + term(1.0 - a, 1.0 - p))
}

/// Chernoff bound `exp(-q D(t_fraction || p))` on `P(Bin(q, p) >= t_fraction q)`.
pub fn chernoff_pd_bound(q: u32, t_fraction: f64, p: f64) -> Result<f64> {
    if t_fraction.is_nan() || t_fraction <= p {
        return Err(Error::Domain(format!("Chernoff tail needs t_fraction > p ({t_fraction} <= {p})")));
    }
    Ok((-(q as f64) * kl_divergence(t_fraction, p)?).exp())
}

/// Smallest `q` with `exp(-q D(t_fraction || p)) <= target`.
pub fn hub_size_for_bound(target: f64, t_fraction: f64, p: f64) -> Result<u32> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target {target} outside (0,1)")));
    }
    let d = kl_divergence(t_fraction, p)?;
    Ok(((1.0 / target).ln() / d).ceil() as u32)
}

/// The published shortcut `q = 3 log n`, rounded up, in the chosen base.
pub fn shortcut_hub_size(n: u32, base: LogBase) -> u32 {
    (3.0 * base.log(n as f64)).ceil() as u32
}

/// Threshold `t = ceil(2q/3)`.
pub fn two_thirds_threshold(q: u32) -> u32 {
    (2 * q).div_ceil(3)
}

/// `1 - (1 - g_h)^L`: chance that at least one of `L` independent paths is regular.
pub fn success_probability(g_h: f64, retries: u32) -> f64 {
    if retries == 0 {
        return 0.0;
    }
    1.0 - (1.0 - g_h).powi(retries as i32)
}

/// Smallest retry count reaching `target` success, if any within `max_retries`.
pub fn retries_for_success(g_h: f64, target: f64, max_retries: u32) -> Option<u32> {
    (0..=max_retries).find(|&l| success_probability(g_h, l) >= target)
}

/// Evaluates a hub configuration at corruption fraction `p_corrupt`.
pub fn hub_plan(q: u32, t: u32, k: u32, p_corrupt: f64, retries: u32, paths_per_block: u32) -> Result<HubPlan> {
    if 2 * t <= q {
        return Err(Error::Domain(format!("threshold t={t} must exceed q/2 for q={q}")));
    }
    let p_h_exact = binomial_pass_prob(q, t, 1.0 - p_corrupt)?;
    let p_d_exact = binomial_pass_prob(q, t, p_corrupt)?;
    let t_fraction = t as f64 / q as f64;
    let p_d_chernoff = chernoff_pd_bound(q, t_fraction, p_corrupt)?;
    let g_h = p_h_exact.powi(k as i32);
    let g_d = p_d_exact.powi(k as i32);
    Ok(HubPlan {
        q,
        t,
        k,
        p_h_exact,
        p_d_exact,
        p_d_chernoff,
        g_h,
        g_d,
        retries,
        success: success_probability(g_h, retries),
        epsilon_bound: paths_per_block as f64 * g_d,
    })
}

/// Picks `(q, t = ceil(2q/3), L)` for path length `k`: the smallest `q` whose
/// per-block corrupted-path union bound is at most `n^-c`, then the smallest
/// `L` reaching `target_success`.
pub fn plan_hubs(n: u32, c: f64, k: u32, p_corrupt: f64, target_success: f64, paths_per_block: u32) -> Result<HubPlan> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let epsilon = (n as f64).powf(-c);
    for q in 1..=n {
        let t = two_thirds_threshold(q).max(q / 2 + 1);
        if t > q || t as f64 / q as f64 <= p_corrupt {
            continue;
        }
        let plan = hub_plan(q, t, k, p_corrupt, 0, paths_per_block)?;
        if plan.epsilon_bound > epsilon {
            continue;
        }
        let retries = retries_for_success(plan.g_h, target_success, paths_per_block).ok_or_else(|| {
            Error::Infeasible(format!("no L <= {paths_per_block} reaches success {target_success} at q={q}"))
        })?;
        return hub_plan(q, t, k, p_corrupt, retries, paths_per_block);
    }
    Err(Error::Infeasible(format!("no hub size up to n={n} reaches epsilon={epsilon:e}")))
}

/// Per-transaction and total communication estimates for each compared protocol,
/// with unit constants and base-2 logarithms. Meaningful only relative to each other.
pub fn complexity_estimates(n: f64, txs: f64, payload: f64, lambda: f64, c: f64) -> Vec<ComplexityEstimate> {
    let log_n = if n > 1.0 { n.log2() } else { 0.0 };
    let row = |name: &str, per: f64, total: f64| ComplexityEstimate {
        protocol: name.to_string(),
        submission_per_tx: per,
        total,
    };
    vec![
        row("Themis", n * payload, n * txs * payload + n * n * txs * lambda),
        row(
            "Quick-order-fairness",
            n * n * payload + n * n * n * lambda,
            n * n * txs * payload + n * n * n * txs * lambda,
        ),
        row("Pompe", n * payload + n * n * lambda, n * txs * payload + n * n * txs * lambda + n * lambda),
        row("Travelers-Speed", c * log_n * log_n * payload, c * log_n * log_n * txs * payload + n * n * lambda),
        row(
            "Travelers-Light",
            c * log_n * lambda + payload,
            (c * log_n * lambda + payload) * txs + log_n * n * lambda,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    // Independent oracle: float summation of the binomial pmf.
    fn pmf_tail(q: u32, t: u32, p: f64) -> f64 {
        (t..=q)
            .map(|i| {
                let mut c = 1.0f64;
                for j in 0..i {
                    c *= (q - j) as f64 / (j + 1) as f64;
                }
                c * p.powi(i as i32) * (1.0 - p).powi((q - i) as i32)
            })
            .sum()
    }

    #[test]
    fn rho_examples() {
        assert!((rho(2.0 / 3.0, 1.0 / 3.0).unwrap() - 0.3690).abs() < 5e-4);
        assert!(rho(0.5, 0.5).is_err());
        assert!(rho(0.3, 0.6).is_err());
        assert!(rho(1.0, 0.5).is_err());
        assert!((rho(0.9, 0.1).unwrap() - 0.04576).abs() < 1e-5);
    }

    #[test]
    fn singleton_n200() {
        let p = singleton_plan(200, 1.2, 2.0 / 3.0, 1.0 / 3.0).unwrap();
        assert_eq!(p.k, 11);
        assert_eq!(p.retries, 73);
        assert!((p.success - 0.576).abs() < 0.01, "success {}", p.success);
        // 200 * 3^-11 and 200^-1.2, evaluated by hand.
        assert!((p.adversary_union_bound - 200.0 / 177147.0).abs() < 1e-12);
        assert!((p.epsilon_target - 1.7328621e-3).abs() < 1e-9);
        assert!(p.adversary_union_bound <= p.epsilon_target);
    }

    #[test]
    fn singleton_n2_by_hand() {
        let p = singleton_plan(2, 1.0, 2.0 / 3.0, 1.0 / 3.0).unwrap();
        assert_eq!(p.k, 2);
        assert!((p.g_h - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_infeasible_when_budget_too_small() {
        let err = singleton_plan_with_paths(200, 1.2, 2.0 / 3.0, 1.0 / 3.0, 50).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn singleton_identity_gd_rho_equals_gh() {
        for &(n, c) in &[(50u32, 1.0), (200, 1.2), (1000, 1.5), (4096, 2.0)] {
            let p = singleton_plan_with_paths(n, c, 2.0 / 3.0, 1.0 / 3.0, u32::MAX).unwrap();
            let lhs = p.g_d.powf(p.rho);
            assert!(((lhs - p.g_h) / p.g_h).abs() < 1e-9, "n={n}: {lhs} vs {}", p.g_h);
            let mut prod = 1.0;
            for _ in 0..p.k {
                prod *= 2.0 / 3.0;
            }
            assert!(((prod - p.g_h) / p.g_h).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_examples() {
        let exact = binomial_pass_prob_exact(6, 4, &frac(2, 3));
        assert_eq!(exact, frac(496, 729));
        assert!((binomial_pass_prob(6, 4, 2.0 / 3.0).unwrap() - 496.0 / 729.0).abs() < 1e-15);
        let low = binomial_pass_prob(6, 4, 1.0 / 3.0).unwrap();
        assert!((low - 0.1001).abs() < 1e-4);
        // complement: P(Bin(6,1/3) >= 4) = 1 - P(Bin(6,2/3) >= 3)
        let comp = BigRational::one() - binomial_pass_prob_exact(6, 3, &frac(2, 3));
        assert_eq!(binomial_pass_prob_exact(6, 4, &frac(1, 3)), comp);
        assert_eq!(binomial_pass_prob(1, 1, 0.37).unwrap(), 0.37);
        assert!(binomial_pass_prob(3, 0, 0.5).is_err());
        assert!(binomial_pass_prob(3, 4, 0.5).is_err());
    }

    #[test]
    fn binomial_matches_float_oracle() {
        for q in 1..=40 {
            for t in 1..=q {
                for &p in &[0.1, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.93] {
                    let a = binomial_pass_prob(q, t, p).unwrap();
                    let b = pmf_tail(q, t, p);
                    assert!((a - b).abs() < 1e-12, "q={q} t={t} p={p}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tails_sum_to_one_exactly() {
        for q in 1..=30 {
            for t in 1..=q {
                let p = frac(1, 3);
                let s = binomial_pass_prob_exact(q, t, &p) + binomial_lower_tail_exact(q, t, &p);
                assert_eq!(s, BigRational::one());
            }
        }
    }

    #[test]
    fn hypergeometric_against_enumeration() {
        // Brute force over all 6-subsets of 12 nodes, 4 marked.
        let (n, marked, q) = (12u32, 4u32, 6u32);
        let mut counts = vec![0u64; q as usize + 1];
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != q {
                continue;
            }
            total += 1;
            counts[(mask & ((1 << marked) - 1)).count_ones() as usize] += 1;
        }
        for t in 1..=q {
            let brute = counts[t as usize..].iter().sum::<u64>() as f64 / total as f64;
            let exact = hypergeometric_pass_prob(n, marked, q, t).unwrap();
            assert!((brute - exact).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn kl_examples() {
        assert!((kl_divergence(2.0 / 3.0, 1.0 / 3.0).unwrap() - 2f64.ln() / 3.0).abs() < 1e-15);
        assert!((kl_divergence(2.0 / 3.0, 1.0 / 3.0).unwrap() - 0.23105).abs() < 1e-5);
        assert_eq!(kl_divergence(0.3, 0.3).unwrap(), 0.0);
        assert!((kl_divergence(0.5, 0.25).unwrap() - 0.1438).abs() < 1e-4);
        assert!((kl_divergence(0.0, 0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((kl_divergence(1.0, 1.0 / 3.0).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(kl_divergence(-0.1, 0.5).is_err());
        assert!(kl_divergence(0.5, 1.0).is_err());
    }

    #[test]
    fn chernoff_examples() {
        let b = chernoff_pd_bound(12, 2.0 / 3.0, 1.0 / 3.0).unwrap();
        assert!((b - 0.0625).abs() < 1e-12);
        let exact = binomial_pass_prob(12, 8, 1.0 / 3.0).unwrap();
        assert!((exact - 0.018758432).abs() < 1e-8);
        assert!(exact <= b);
        assert_eq!(chernoff_pd_bound(0, 2.0 / 3.0, 1.0 / 3.0).unwrap(), 1.0);
        assert!(chernoff_pd_bound(5, 0.3, 0.3).is_err());
        assert_eq!(hub_size_for_bound(0.01, 2.0 / 3.0, 1.0 / 3.0).unwrap(), 20);
        assert_eq!(shortcut_hub_size(100, LogBase::Two), 20);
        assert_eq!(shortcut_hub_size(100, LogBase::Natural), 14);
    }

    #[test]
    fn chernoff_dominates_exact_tail() {
        for q in 1..=60 {
            for t in 1..=q {
                let frac_t = t as f64 / q as f64;
                if frac_t <= 1.0 / 3.0 {
                    continue;
                }
                let exact = binomial_pass_prob(q, t, 1.0 / 3.0).unwrap();
                let bound = chernoff_pd_bound(q, frac_t, 1.0 / 3.0).unwrap();
                assert!(exact <= bound * (1.0 + 1e-12), "q={q} t={t}: {exact} > {bound}");
            }
        }
    }

    #[test]
    fn success_examples() {
        assert!((success_probability(0.25, 8) - 0.89989).abs() < 1e-5);
        assert_eq!(success_probability(0.3, 0), 0.0);
        assert_eq!(success_probability(1.0, 1), 1.0);
    }

    #[test]
    fn success_is_monotone() {
        let mut prev_g = 0.0;
        for gi in 0..=50 {
            let g = gi as f64 / 50.0;
            let mut prev_l = 0.0;
            for l in 0..60 {
                let s = success_probability(g, l);
                assert!(s >= prev_l - 1e-15);
                prev_l = s;
            }
            let s = success_probability(g, 10);
            assert!(s >= prev_g - 1e-15);
            prev_g = s;
        }
    }

    #[test]
    fn hub_plan_invariants() {
        let p = hub_plan(18, 12, 2, 1.0 / 3.0, 8, 180).unwrap();
        assert!(p.p_d_exact <= p.p_d_chernoff);
        assert!((p.g_h - p.p_h_exact.powi(2)).abs() < 1e-15);
        assert!((p.g_d - p.p_d_exact.powi(2)).abs() < 1e-18);
        assert!((p.p_h_exact - 0.6085103).abs() < 1e-6);
    }

    #[test]
    fn planner_reaches_epsilon() {
        let plan = plan_hubs(256, 1.0, 2, 1.0 / 3.0, 0.9, 256).unwrap();
        assert!(plan.epsilon_bound <= 1.0 / 256.0);
        assert!(plan.success >= 0.9);
        assert!(2 * plan.t > plan.q);
        let smaller = hub_plan(plan.q - 1, two_thirds_threshold(plan.q - 1).max((plan.q - 1) / 2 + 1), 2, 1.0 / 3.0, 0, 256);
        if let Ok(s) = smaller {
            assert!(s.epsilon_bound > 1.0 / 256.0);
        }
    }

    #[test]
    fn complexity_rows() {
        let rows = complexity_estimates(256.0, 1000.0, 250.0, 32.0, 2.0);
        let get = |name: &str| rows.iter().find(|r| r.protocol == name).unwrap().clone();
        assert_eq!(get("Travelers-Light").submission_per_tx, 762.0);
        assert_eq!(get("Themis").submission_per_tx, 64000.0);
        let degenerate = complexity_estimates(1.0, 1.0, 250.0, 32.0, 2.0);
        for r in degenerate {
            assert!(r.submission_per_tx <= 250.0 + 32.0, "{}: {}", r.protocol, r.submission_per_tx);
        }
    }
}
