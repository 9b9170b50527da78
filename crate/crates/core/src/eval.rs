//! Metrics and experiment protocols: the average-return-percentage (ARP)
//! metric, observation/feedback noise injection, sum-rate CDFs, baseline
//! rollouts and paired sweeps.

use crate::env::V2xEnv;
use crate::oracle::{brute_force_allocate, OracleError};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("per-episode return vectors differ in length: {policy} vs {oracle}")]
    LengthMismatch { policy: usize, oracle: usize },
    #[error("oracle mean return is zero; nothing to normalize against")]
    ZeroOracleMean,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Average return percentage: returns are averaged over episodes first, then
/// the policy mean is normalized by the oracle mean.
pub fn arp(policy_returns: &[f64], oracle_returns: &[f64]) -> Result<f64, EvalError> {
    if policy_returns.len() != oracle_returns.len() {
        return Err(EvalError::LengthMismatch {
            policy: policy_returns.len(),
            oracle: oracle_returns.len(),
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let oracle_mean = mean(oracle_returns);
    if oracle_mean == 0.0 {
        return Err(EvalError::ZeroOracleMean);
    }
    Ok(mean(policy_returns) / oracle_mean * 100.0)
}

/// Corrupt each value with zero-mean Gaussian noise whose standard deviation
/// is `ratio` times the value's magnitude. Zero values stay exact.
pub fn noise_inject<R: Rng>(values: &mut [f64], ratio: f64, rng: &mut R) {
    assert!(ratio >= 0.0);
    if ratio == 0.0 {
        return;
    }
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += ratio * v.abs() * z;
    }
}

/// Empirical CDF: sorted samples paired with quantile levels i/n, i = 1..n.
pub fn sum_rate_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    assert!(!samples.is_empty(), "empty sample set");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN sample"));
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// Spearman rank correlation between paired samples; used for monotone-trend
/// checks. Ties get midranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = midranks(xs);
    let ry = midranks(ys);
    pearson(&rx, &ry)
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("NaN value"));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Per-episode evaluation record; both baselines are computed on exactly the
/// same channel trace as the policy run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub policy_return: f64,
    pub oracle_return: f64,
    pub random_return: f64,
}

/// One recorded step of a rollout (kept when step recording is on).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: u32,
    pub step: u32,
    pub action: u32,
    pub reward: f64,
    pub v2i_rates: Vec<f64>,
    pub v2v_rates: Vec<f64>,
}

/// Per-step sum-rate traces accumulated over a rollout.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RolloutTrace {
    /// Per-episode summed reward.
    pub returns: Vec<f64>,
    /// Per-step V2I sum rate, flattened over episodes.
    pub v2i_sum_rates: Vec<f64>,
    /// Per-step V2V sum rate, flattened over episodes.
    pub v2v_sum_rates: Vec<f64>,
    /// Full per-step records; empty unless recording was requested.
    pub steps: Vec<StepRecord>,
}

impl RolloutTrace {
    pub fn push_step(
        &mut self,
        record: bool,
        episode: usize,
        step: usize,
        action: u32,
        breakdown: &crate::env::RewardBreakdown,
    ) {
        self.v2i_sum_rates.push(breakdown.v2i_sum());
        self.v2v_sum_rates.push(breakdown.v2v_sum());
        if record {
            self.steps.push(StepRecord {
                episode: episode as u32,
                step: step as u32,
                action,
                reward: breakdown.total,
                v2i_rates: breakdown.v2i_rates.clone(),
                v2v_rates: breakdown.v2v_rates.clone(),
            });
        }
    }
}

/// Roll the brute-force oracle over `episodes` fresh episodes.
pub fn oracle_rollout(
    env: &mut V2xEnv,
    episodes: usize,
    steps: usize,
    record_steps: bool,
) -> Result<RolloutTrace, EvalError> {
    let codec = env.codec();
    let radio = *env.radio();
    let mut trace = RolloutTrace::default();
    for episode in 0..episodes {
        env.reset(episode as u64)?;
        let mut ep_return = 0.0;
        for step in 0..steps {
            let (action, _) = brute_force_allocate(env.realization(), &radio, &codec)?;
            let idx = codec.encode(&action) as u32;
            let out = env.step(&action);
            ep_return += out.reward;
            trace.push_step(record_steps, episode, step, idx, &out.breakdown);
        }
        trace.returns.push(ep_return);
    }
    Ok(trace)
}

/// Roll the uniform-random policy; action draws come from `rng` so the
/// environment streams stay aligned with other rollouts of the same seed.
pub fn random_rollout<R: Rng>(
    env: &mut V2xEnv,
    episodes: usize,
    steps: usize,
    rng: &mut R,
    record_steps: bool,
) -> Result<RolloutTrace, EvalError> {
    let codec = env.codec();
    let mut trace = RolloutTrace::default();
    for episode in 0..episodes {
        env.reset(episode as u64)?;
        let mut ep_return = 0.0;
        for step in 0..steps {
            let action = codec.random_action(rng);
            let idx = codec.encode(&action) as u32;
            let out = env.step(&action);
            ep_return += out.reward;
            trace.push_step(record_steps, episode, step, idx, &out.breakdown);
        }
        trace.returns.push(ep_return);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arp_reference_values() {
        let oracle = vec![2.0, 4.0, 6.0];
        assert_eq!(arp(&oracle, &oracle).unwrap(), 100.0);
        let half: Vec<f64> = oracle.iter().map(|v| v / 2.0).collect();
        assert_eq!(arp(&half, &oracle).unwrap(), 50.0);
        assert!(arp(&[1.0], &[1.0, 2.0]).is_err());
        assert!(arp(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn arp_is_scale_invariant() {
        let policy = vec![1.0, 3.0, 2.0];
        let oracle = vec![2.0, 4.0, 3.0];
        let a = arp(&policy, &oracle).unwrap();
        let policy_s: Vec<f64> = policy.iter().map(|v| v * 7.5).collect();
        let oracle_s: Vec<f64> = oracle.iter().map(|v| v * 7.5).collect();
        let b = arp(&policy_s, &oracle_s).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn noise_inject_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut v = vec![1.0, -2.0, 0.0];
        let orig = v.clone();
        noise_inject(&mut v, 0.0, &mut rng);
        assert_eq!(v, orig);
        noise_inject(&mut v, 0.5, &mut rng);
        assert_eq!(v[2], 0.0); // zero magnitude stays exact
        assert_ne!(v[0], orig[0]);
    }

    #[test]
    fn noise_inject_relative_std_matches_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let ratio = 0.3;
        let n = 1_000_000;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut v = [2.5f64];
            noise_inject(&mut v, ratio, &mut rng);
            let rel = (v[0] - 2.5) / 2.5;
            sumsq += rel * rel;
        }
        let std = (sumsq / n as f64).sqrt();
        assert!(
            (std - ratio).abs() / ratio < 0.02,
            "relative std {} vs ratio {}",
            std,
            ratio
        );
    }

    #[test]
    fn cdf_is_nondecreasing_and_ends_at_one() {
        let samples = vec![3.0, 1.0, 2.0, 2.0, 5.0];
        let cdf = sum_rate_cdf(&samples);
        assert_eq!(cdf.len(), 5);
        assert_eq!(cdf.last().unwrap().1, 1.0);
        for w in cdf.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
        // constant samples: a step at that value
        let cdf = sum_rate_cdf(&[4.0, 4.0, 4.0]);
        assert!(cdf.iter().all(|&(v, _)| v == 4.0));
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 8.0, 5.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]) - 1.0).abs() < 1e-12);
        // ties get midranks and keep the trend direction
        let rho = spearman(&[0.0, 0.5, 1.0, 2.0], &[90.0, 90.0, 80.0, 60.0]);
        assert!(rho < -0.8, "rho = {}", rho);
    }
}
