//! Q-learning machinery shared by the two decision schemes: replay buffer,
//! epsilon schedule, greedy/exploratory action selection, TD targets, and the
//! training/testing pipelines (C-Decision in [`cdecision`], D-Decision in
//! [`ddecision`]).

pub mod bundle_io;
pub mod cdecision;
pub mod ddecision;

use crate::env::{EnvError, Observation, ObsNorm};
use crate::neural::NeuralError;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("width mismatch: {0}")]
    WidthMismatch(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training interrupted by callback: {0}")]
    Callback(String),
}

/// Replay record: joint observations, joint action (canonical encoding),
/// shared reward, next joint observations. Observations are stored
/// post-normalization, flattened to K·(3N+1).
#[derive(Clone, Debug)]
pub struct Transition<T: Scalar> {
    pub obs: Vec<T>,
    pub action: u32,
    pub reward: T,
    pub next_obs: Vec<T>,
}

/// Fixed-capacity ring of transitions with uniform without-replacement
/// mini-batch sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T: Scalar> {
    capacity: usize,
    data: VecDeque<Transition<T>>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Append, evicting the oldest record at capacity.
    pub fn push(&mut self, t: Transition<T>) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    pub fn get(&self, idx: usize) -> &Transition<T> {
        &self.data[idx]
    }

    /// `batch` distinct indices drawn uniformly.
    pub fn sample_indices<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(batch <= self.data.len(), "batch larger than buffer");
        rand::seq::index::sample(rng, self.data.len(), batch).into_vec()
    }
}

/// Piecewise-linear exploration schedule, annealed per episode and clamped at
/// `end` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        if self.anneal_episodes == 0 || episode >= self.anneal_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.anneal_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Argmax with deterministic lowest-index tie-breaking.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    assert!(!values.is_empty());
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy over a q-vector: with probability 1−ε the argmax (lowest
/// index on ties), otherwise a uniform random index.
pub fn epsilon_greedy<T: Scalar, R: Rng>(q_values: &[T], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_values.is_empty());
    assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// TD target y = R + γ·max_a Q(O', a; θ⁻). The task is continuing, so there
/// is no terminal masking.
pub fn td_target<T: Scalar>(reward: T, max_next_q: T, gamma: T) -> T {
    reward + gamma * max_next_q
}

/// Regression loss applied to the TD error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Huber,
    Squared,
}

impl LossKind {
    pub(crate) fn eval<T: Scalar>(&self, pred: &[T], target: &[T], delta: T) -> (T, Vec<T>) {
        match self {
            LossKind::Huber => crate::neural::huber_loss(pred, target, delta),
            LossKind::Squared => crate::neural::squared_loss(pred, target),
        }
    }
}

/// Hyperparameters of one training run (either scheme).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Target-network refresh cadence in environment steps.
    pub target_refresh_steps: usize,
    pub buffer_capacity: usize,
    pub epsilon: EpsilonSchedule,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub huber_delta: f64,
    pub loss: LossKind,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            episodes: 2000,
            steps_per_episode: 1000,
            batch_size: 512,
            learning_rate: 0.001,
            gamma: 0.05,
            target_refresh_steps: 500,
            buffer_capacity: 1_000_000,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.01,
                anneal_episodes: 1600,
            },
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-7,
            huber_delta: 1.0,
            loss: LossKind::Huber,
        }
    }
}

/// Per-episode training log row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_loss: f64,
    pub epsilon: f64,
    pub episode_return: f64,
}

/// Testing-time corruption levels (relative Gaussian noise ratios).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseCfg {
    pub input_ratio: f64,
    pub feedback_ratio: f64,
}

/// Normalize and flatten joint observations to a K·(3N+1) vector.
pub fn normalize_joint<T: Scalar>(observations: &[Observation], norm: &ObsNorm) -> Vec<T> {
    let mut out = Vec::with_capacity(
        observations.len() * observations.first().map(|o| o.len()).unwrap_or(0),
    );
    for obs in observations {
        out.extend(obs.normalized(norm).into_iter().map(T::from_f64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn buffer_evicts_oldest_first() {
        let mut buf: ReplayBuffer<f64> = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: i,
                reward: 0.0,
                next_obs: vec![],
            });
        }
        assert_eq!(buf.len(), 3);
        let actions: Vec<u32> = (0..3).map(|i| buf.get(i).action).collect();
        assert_eq!(actions, vec![2, 3, 4]);
    }

    #[test]
    fn buffer_sampling_is_without_replacement() {
        let mut buf: ReplayBuffer<f64> = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(Transition {
                obs: vec![],
                action: i,
                reward: 0.0,
                next_obs: vec![],
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let mut idx = buf.sample_indices(32, &mut rng);
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 32);
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_and_clamped() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            anneal_episodes: 1600,
        };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(800) - 0.505).abs() < 1e-12);
        assert!((s.value(1600) - 0.01).abs() < 1e-12);
        assert_eq!(s.value(5000), 0.01);
        let mut prev = f64::INFINITY;
        for ep in 0..2000 {
            let v = s.value(ep);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn epsilon_greedy_pure_exploitation() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        // first index wins ties
        assert_eq!(epsilon_greedy(&[3.0, 3.0, 2.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn epsilon_greedy_uniform_under_full_exploration() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let q = [0.0f64, 100.0, -5.0, 2.0];
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[epsilon_greedy(&q, 1.0, &mut rng)] += 1;
        }
        let expected = draws as f64 / 4.0;
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn greedy_choice_invariant_under_increasing_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let q = [0.3f64, -0.7, 0.9, 0.1];
        let base = epsilon_greedy(&q, 0.0, &mut rng);
        let shifted: Vec<f64> = q.iter().map(|v| 3.0 * v + 11.0).collect();
        assert_eq!(epsilon_greedy(&shifted, 0.0, &mut rng), base);
    }

    #[test]
    fn td_target_reference_values() {
        assert_eq!(td_target(2.0, 10.0, 0.05), 2.5);
        assert_eq!(td_target(7.0, 123.0, 0.0), 7.0);
    }

    #[test]
    fn default_hyperparameters_match_published_settings() {
        let p = TrainParams::default();
        assert_eq!(p.episodes, 2000);
        assert_eq!(p.steps_per_episode, 1000);
        assert_eq!(p.batch_size, 512);
        assert_eq!(p.learning_rate, 0.001);
        assert_eq!(p.gamma, 0.05);
        assert_eq!(p.target_refresh_steps, 500);
        assert_eq!(p.buffer_capacity, 1_000_000);
        assert_eq!(p.epsilon.start, 1.0);
        assert_eq!(p.epsilon.end, 0.01);
        assert_eq!(p.epsilon.anneal_episodes, 1600);
        assert_eq!(p.loss, LossKind::Huber);
    }
}
