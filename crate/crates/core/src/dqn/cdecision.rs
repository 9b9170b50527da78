//! C-Decision: each V2V link compresses its observation with a local network,
//! the BS concatenates all feedback and selects the joint channel allocation
//! with one DQN. Compression networks and the BS network form a single
//! differentiable graph and train together from the BS's TD loss.

use super::{
    argmax, normalize_joint, DqnError, EpisodeLog, LossKind, NoiseCfg, ReplayBuffer, TrainParams,
    Transition,
};
use crate::env::{ActionCodec, Observation, V2xEnv};
use crate::eval::{noise_inject, RolloutTrace};
use crate::neural::{binarize, Activation, DenseNetwork, Gradients, LayerSpec, Tape};
use crate::scalar::Scalar;
use crate::seeding::{mix, substream, STREAM_EXPLORE, STREAM_INIT};
use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture of the C-Decision scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CArch {
    /// Number of real-valued feedback values per V2V link (N_k).
    pub n_k: usize,
    /// Hidden widths of each V2V compression network.
    pub comp_hidden: Vec<usize>,
    /// Quantize feedback through a pre-binary tanh layer plus sign layer.
    pub binary_feedback: bool,
    /// Width of the binary feedback (bits per V2V) when quantizing.
    pub feedback_bits: usize,
    /// Hidden widths of the BS Q-network.
    pub bs_hidden: Vec<usize>,
}

impl Default for CArch {
    fn default() -> Self {
        Self {
            n_k: 3,
            comp_hidden: vec![16, 32, 16],
            binary_feedback: false,
            feedback_bits: 36,
            bs_hidden: vec![1200, 800, 600],
        }
    }
}

impl CArch {
    /// Width of one V2V link's feedback as seen by the BS.
    pub fn feedback_dim(&self) -> usize {
        if self.binary_feedback {
            self.feedback_bits
        } else {
            self.n_k
        }
    }

    fn comp_specs(&self) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self
            .comp_hidden
            .iter()
            .map(|&w| LayerSpec::dense(w, Activation::Relu))
            .collect();
        specs.push(LayerSpec::dense(self.n_k, Activation::Linear));
        if self.binary_feedback {
            specs.push(LayerSpec::dense(self.feedback_bits, Activation::Tanh));
            specs.push(LayerSpec::sign());
        }
        specs
    }

    fn bs_specs(&self, n_actions: usize) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self
            .bs_hidden
            .iter()
            .map(|&w| LayerSpec::dense(w, Activation::Relu))
            .collect();
        specs.push(LayerSpec::dense(n_actions, Activation::Linear));
        specs
    }
}

/// Trained state of the C-Decision scheme: K compression networks, the BS
/// Q-network and its target copy, plus the replay buffer.
pub struct AgentBundleC<T: Scalar> {
    pub arch: CArch,
    pub n_channels: usize,
    pub n_links: usize,
    pub obs_dim: usize,
    pub comp: Vec<DenseNetwork<T>>,
    pub q: DenseNetwork<T>,
    pub q_target: DenseNetwork<T>,
    pub buffer: ReplayBuffer<T>,
}

impl<T: Scalar> AgentBundleC<T> {
    /// Build freshly initialized networks. Fails fast on inconsistent widths.
    pub fn new(
        n_channels: usize,
        n_links: usize,
        arch: CArch,
        buffer_capacity: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, DqnError> {
        if arch.n_k == 0 {
            return Err(DqnError::WidthMismatch(
                "n_k must be at least 1 for the C-Decision scheme (n_k = 0 is the random baseline)"
                    .into(),
            ));
        }
        if arch.binary_feedback && arch.feedback_bits == 0 {
            return Err(DqnError::WidthMismatch(
                "binary feedback requires feedback_bits >= 1".into(),
            ));
        }
        let obs_dim = Observation::dim(n_channels);
        let codec = ActionCodec::new(n_channels, n_links);
        let n_actions = codec.count();
        let comp: Vec<DenseNetwork<T>> = (0..n_links)
            .map(|_| DenseNetwork::new(obs_dim, &arch.comp_specs(), rng))
            .collect();
        let q = DenseNetwork::new(n_links * arch.feedback_dim(), &arch.bs_specs(n_actions), rng);
        let q_target = q.clone();
        for c in &comp {
            debug_assert_eq!(c.output_dim(), arch.feedback_dim());
        }
        debug_assert_eq!(q.output_dim(), n_actions);
        Ok(Self {
            arch,
            n_channels,
            n_links,
            obs_dim,
            comp,
            q,
            q_target,
            buffer: ReplayBuffer::new(buffer_capacity),
        })
    }

    pub fn codec(&self) -> ActionCodec {
        ActionCodec::new(self.n_channels, self.n_links)
    }

    /// Check that this bundle fits an environment's dimensions.
    pub fn check_env(&self, env: &V2xEnv) -> Result<(), DqnError> {
        let s = env.scenario();
        if s.n_v2i != self.n_channels || s.n_v2v != self.n_links {
            return Err(DqnError::WidthMismatch(format!(
                "bundle trained for N={} K={}, environment has N={} K={}",
                self.n_channels, self.n_links, s.n_v2i, s.n_v2v
            )));
        }
        Ok(())
    }

    /// Per-link views of a flat joint observation batch: X_k is (B, obs_dim).
    fn split_per_link(&self, joint: &[Vec<T>]) -> Vec<Array2<T>> {
        let b = joint.len();
        (0..self.n_links)
            .map(|k| {
                let mut x = Array2::zeros((b, self.obs_dim));
                for (row, sample) in joint.iter().enumerate() {
                    let slice = &sample[k * self.obs_dim..(k + 1) * self.obs_dim];
                    x.row_mut(row)
                        .iter_mut()
                        .zip(slice.iter())
                        .for_each(|(dst, &src)| *dst = src);
                }
                x
            })
            .collect()
    }

    /// Compress per-link inputs and concatenate to the BS state (B, K·F).
    fn compress_batch(
        &self,
        xs: &[Array2<T>],
        with_tapes: bool,
    ) -> Result<(Array2<T>, Vec<Option<Tape<T>>>), DqnError> {
        let b = xs[0].nrows();
        let f = self.arch.feedback_dim();
        let mut state = Array2::zeros((b, self.n_links * f));
        let mut tapes = Vec::with_capacity(self.n_links);
        for (k, x) in xs.iter().enumerate() {
            let (out, tape) = if with_tapes {
                let (out, tape) = self.comp[k].forward_tape(x.view())?;
                (out, Some(tape))
            } else {
                (self.comp[k].forward(x.view())?, None)
            };
            state.slice_mut(s![.., k * f..(k + 1) * f]).assign(&out);
            tapes.push(tape);
        }
        Ok((state, tapes))
    }

    /// Feedback vector of one V2V link for a single observation.
    pub fn feedback_one(&self, k: usize, normalized_obs: &[T]) -> Result<Vec<T>, DqnError> {
        let x = Array2::from_shape_vec((1, self.obs_dim), normalized_obs.to_vec())
            .map_err(|e| DqnError::WidthMismatch(e.to_string()))?;
        let y = self.comp[k].forward(x.view())?;
        Ok(y.row(0).to_vec())
    }

    /// Q-values for one joint feedback state (length K·F).
    pub fn q_values(&self, state: &[T]) -> Result<Vec<T>, DqnError> {
        let x = Array2::from_shape_vec((1, state.len()), state.to_vec())
            .map_err(|e| DqnError::WidthMismatch(e.to_string()))?;
        let y = self.q.forward(x.view())?;
        Ok(y.row(0).to_vec())
    }

    /// Epsilon-greedy joint action from a flat normalized joint observation.
    /// Exploration draws skip the network forward entirely.
    pub fn act<R: Rng>(
        &self,
        joint_obs: &[T],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize, DqnError> {
        let n_actions = self.codec().count();
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..n_actions));
        }
        let xs = self.split_per_link(std::slice::from_ref(&joint_obs.to_vec()));
        let (state, _) = self.compress_batch(&xs, false)?;
        let q = self.q.forward(state.view())?;
        Ok(argmax(&q.row(0).to_vec()))
    }

    /// Greedy joint action from an externally assembled feedback state; the
    /// testing protocol uses this to hold feedback between refreshes and to
    /// corrupt it with noise.
    pub fn act_greedy_from_state(&self, state: &[T]) -> Result<usize, DqnError> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// TD targets y = r + γ·max_a Q(O', a; θ⁻) for a sampled batch; the next
    /// observations run through the live compression networks and the frozen
    /// target Q-network, with no gradient kept.
    pub fn compute_targets(&self, batch: &[usize], gamma: T) -> Result<Vec<T>, DqnError> {
        let next: Vec<Vec<T>> = batch
            .iter()
            .map(|&i| self.buffer.get(i).next_obs.clone())
            .collect();
        let xs = self.split_per_link(&next);
        let (state, _) = self.compress_batch(&xs, false)?;
        let qn = self.q_target.forward(state.view())?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(row, &i)| {
                let max_q = qn
                    .row(row)
                    .iter()
                    .copied()
                    .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
                super::td_target(self.buffer.get(i).reward, max_q, gamma)
            })
            .collect())
    }

    /// Loss and gradients of the full composite (compression networks → BS
    /// Q-network → loss on the taken action) for a batch with frozen targets.
    /// Gradients flow only into the Q-value of the taken action.
    pub fn loss_and_grads(
        &self,
        obs: &[Vec<T>],
        actions: &[u32],
        targets: &[T],
        loss_kind: LossKind,
        delta: T,
    ) -> Result<(T, Gradients<T>, Vec<Gradients<T>>), DqnError> {
        let b = obs.len();
        debug_assert_eq!(actions.len(), b);
        debug_assert_eq!(targets.len(), b);
        let xs = self.split_per_link(obs);
        let (state, tapes) = self.compress_batch(&xs, true)?;
        let (q_all, q_tape) = self.q.forward_tape(state.view())?;
        let taken: Vec<T> = (0..b)
            .map(|row| q_all[(row, actions[row] as usize)])
            .collect();
        let (loss, d_taken) = loss_kind.eval(&taken, targets, delta);
        let mut d_out = Array2::zeros(q_all.raw_dim());
        for row in 0..b {
            d_out[(row, actions[row] as usize)] = d_taken[row];
        }
        let (q_grads, d_state) = self.q.backward(&q_tape, d_out.view())?;
        let f = self.arch.feedback_dim();
        let mut comp_grads = Vec::with_capacity(self.n_links);
        for k in 0..self.n_links {
            let slice = d_state.slice(s![.., k * f..(k + 1) * f]).to_owned();
            let tape = tapes[k].as_ref().expect("tape requested");
            let (g, _) = self.comp[k].backward(tape, slice.view())?;
            comp_grads.push(g);
        }
        Ok((loss, q_grads, comp_grads))
    }

    /// Composite loss value only (no tapes); the finite-difference oracle
    /// differentiates this with frozen targets.
    pub fn loss_value(
        &self,
        obs: &[Vec<T>],
        actions: &[u32],
        targets: &[T],
        loss_kind: LossKind,
        delta: T,
    ) -> Result<T, DqnError> {
        let xs = self.split_per_link(obs);
        let (state, _) = self.compress_batch(&xs, false)?;
        let q_all = self.q.forward(state.view())?;
        let taken: Vec<T> = (0..obs.len())
            .map(|row| q_all[(row, actions[row] as usize)])
            .collect();
        Ok(loss_kind.eval(&taken, targets, delta).0)
    }

    /// One mini-batch gradient update; returns the loss.
    pub fn train_step(
        &mut self,
        batch: &[usize],
        params: &TrainParams,
    ) -> Result<T, DqnError> {
        let gamma = T::from_f64(params.gamma);
        let targets = self.compute_targets(batch, gamma)?;
        let obs: Vec<Vec<T>> = batch
            .iter()
            .map(|&i| self.buffer.get(i).obs.clone())
            .collect();
        let actions: Vec<u32> = batch.iter().map(|&i| self.buffer.get(i).action).collect();
        let (loss, q_grads, comp_grads) = self.loss_and_grads(
            &obs,
            &actions,
            &targets,
            params.loss,
            T::from_f64(params.huber_delta),
        )?;
        let lr = T::from_f64(params.learning_rate);
        let decay = T::from_f64(params.rmsprop_decay);
        let eps = T::from_f64(params.rmsprop_eps);
        self.q.apply_rmsprop(&q_grads, lr, decay, eps);
        for (net, g) in self.comp.iter_mut().zip(comp_grads.iter()) {
            net.apply_rmsprop(g, lr, decay, eps);
        }
        Ok(loss)
    }

    /// θ⁻ ← θ.
    pub fn refresh_target(&mut self) {
        self.q_target.copy_parameters_from(&self.q);
    }

    /// Flat parameter count over compression networks then the BS network.
    pub fn param_count(&self) -> usize {
        self.comp.iter().map(|c| c.param_count()).sum::<usize>() + self.q.param_count()
    }

    pub fn param(&self, mut idx: usize) -> T {
        for c in &self.comp {
            if idx < c.param_count() {
                return c.param(idx);
            }
            idx -= c.param_count();
        }
        self.q.param(idx)
    }

    pub fn set_param(&mut self, mut idx: usize, v: T) {
        for c in &mut self.comp {
            if idx < c.param_count() {
                c.set_param(idx, v);
                return;
            }
            idx -= c.param_count();
        }
        self.q.set_param(idx, v);
    }

    /// Gradients flattened in the same order as [`AgentBundleC::param`].
    pub fn grads_flat(&self, q_grads: &Gradients<T>, comp_grads: &[Gradients<T>]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (net, g) in self.comp.iter().zip(comp_grads.iter()) {
            out.extend(net.grad_flat(g));
        }
        out.extend(self.q.grad_flat(q_grads));
        out
    }
}

/// Train the C-Decision scheme per the centralized training loop: one
/// epsilon-greedy environment step, one buffer append, one uniform mini-batch
/// update per step (once the buffer holds a batch), target refresh every
/// `target_refresh_steps`.
///
/// `on_episode` runs after every logged episode; checkpoint writers hook in
/// here. Returning an error aborts training.
pub fn train_c_decision<T: Scalar, F>(
    env: &mut V2xEnv,
    arch: &CArch,
    params: &TrainParams,
    seed: u64,
    start_episode: usize,
    bundle: Option<AgentBundleC<T>>,
    mut on_episode: F,
) -> Result<(AgentBundleC<T>, Vec<EpisodeLog>), DqnError>
where
    F: FnMut(&EpisodeLog, &AgentBundleC<T>) -> Result<(), DqnError>,
{
    let scenario = env.scenario().clone();
    let mut bundle = match bundle {
        Some(b) => b,
        None => {
            let mut rng_init = substream(seed, STREAM_INIT);
            AgentBundleC::new(
                scenario.n_v2i,
                scenario.n_v2v,
                arch.clone(),
                params.buffer_capacity,
                &mut rng_init,
            )?
        }
    };
    bundle.check_env(env)?;
    let codec = bundle.codec();
    let norm = scenario.normalization.clone();
    let mut log = Vec::with_capacity(params.episodes.saturating_sub(start_episode));
    let mut global_step = start_episode * params.steps_per_episode;
    for episode in start_episode..params.episodes {
        let epsilon = params.epsilon.value(episode);
        let mut rng_explore = substream(mix(seed, episode as u64), STREAM_EXPLORE);
        let raw = env.reset(episode as u64)?;
        let mut joint: Vec<T> = normalize_joint(&raw, &norm);
        let mut loss_sum = 0.0f64;
        let mut loss_n = 0usize;
        let mut ep_return = 0.0f64;
        for _ in 0..params.steps_per_episode {
            let a_idx = bundle.act(&joint, epsilon, &mut rng_explore)?;
            let action = codec.decode(a_idx);
            let out = env.step(&action);
            ep_return += out.reward;
            let next: Vec<T> = normalize_joint(&out.observations, &norm);
            bundle.buffer.push(Transition {
                obs: joint,
                action: a_idx as u32,
                reward: T::from_f64(out.reward),
                next_obs: next.clone(),
            });
            if bundle.buffer.len() >= params.batch_size {
                let batch = bundle.buffer.sample_indices(params.batch_size, &mut rng_explore);
                let loss = bundle.train_step(&batch, params)?;
                loss_sum += loss.as_f64();
                loss_n += 1;
            }
            joint = next;
            global_step += 1;
            if global_step % params.target_refresh_steps == 0 {
                bundle.refresh_target();
            }
        }
        let row = EpisodeLog {
            episode,
            mean_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN },
            epsilon,
            episode_return: ep_return,
        };
        on_episode(&row, &bundle)?;
        log.push(row);
    }
    Ok((bundle, log))
}

/// Greedy testing rollout with a feedback refresh interval and optional
/// observation/feedback noise.
///
/// Feedback is recomputed every `feedback_interval` steps and the resulting
/// decision held in between (the BS sees an unchanged state, so its greedy
/// decision is unchanged). Observation noise is injected on raw values before
/// normalization; feedback noise corrupts what the V2Vs send, and binary
/// feedback is re-signed after corruption.
pub fn test_c_decision<T: Scalar>(
    bundle: &AgentBundleC<T>,
    env: &mut V2xEnv,
    episodes: usize,
    steps: usize,
    feedback_interval: usize,
    noise: &NoiseCfg,
    rng_noise: &mut ChaCha8Rng,
    record_steps: bool,
) -> Result<RolloutTrace, DqnError> {
    assert!(feedback_interval >= 1);
    bundle.check_env(env)?;
    let scenario = env.scenario().clone();
    let norm = scenario.normalization.clone();
    let codec = bundle.codec();
    let f = bundle.arch.feedback_dim();
    let mut trace = RolloutTrace::default();
    for episode in 0..episodes {
        let mut raw = env.reset(episode as u64)?;
        let mut ep_return = 0.0;
        let mut held_action = codec.decode(0);
        for t in 0..steps {
            if t % feedback_interval == 0 {
                let mut state: Vec<T> = Vec::with_capacity(bundle.n_links * f);
                for (k, obs) in raw.iter().enumerate() {
                    let mut values = obs.raw();
                    if noise.input_ratio > 0.0 {
                        noise_inject(&mut values, noise.input_ratio, rng_noise);
                    }
                    let noisy = Observation::from_raw(&values, scenario.n_v2i);
                    let normalized: Vec<T> = noisy
                        .normalized(&norm)
                        .into_iter()
                        .map(T::from_f64)
                        .collect();
                    let mut fb = bundle.feedback_one(k, &normalized)?;
                    if noise.feedback_ratio > 0.0 {
                        let mut fb64: Vec<f64> = fb.iter().map(|v| v.as_f64()).collect();
                        noise_inject(&mut fb64, noise.feedback_ratio, rng_noise);
                        fb = fb64.into_iter().map(T::from_f64).collect();
                        if bundle.arch.binary_feedback {
                            fb = binarize(&fb);
                        }
                    }
                    state.extend(fb);
                }
                held_action = codec.decode(bundle.act_greedy_from_state(&state)?);
            }
            let out = env.step(&held_action);
            ep_return += out.reward;
            trace.push_step(
                record_steps,
                episode,
                t,
                codec.encode(&held_action) as u32,
                &out.breakdown,
            );
            raw = out.observations;
        }
        trace.returns.push(ep_return);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PropagationConfig, ScenarioConfig};
    use crate::fdcheck;

    fn tiny_scenario() -> ScenarioConfig {
        ScenarioConfig {
            n_v2i: 2,
            n_v2v: 2,
            steps_per_episode: 10,
            ..ScenarioConfig::default()
        }
    }

    fn tiny_arch() -> CArch {
        CArch {
            n_k: 2,
            comp_hidden: vec![6, 5],
            binary_feedback: false,
            feedback_bits: 8,
            bs_hidden: vec![8, 7],
        }
    }

    fn tiny_params() -> TrainParams {
        TrainParams {
            episodes: 2,
            steps_per_episode: 10,
            batch_size: 4,
            buffer_capacity: 64,
            epsilon: super::super::EpsilonSchedule {
                start: 1.0,
                end: 0.01,
                anneal_episodes: 2,
            },
            ..TrainParams::default()
        }
    }

    #[test]
    fn smoke_training_fills_buffer_and_logs() {
        let mut env =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 71).unwrap();
        let (bundle, log) = train_c_decision::<f32, _>(
            &mut env,
            &tiny_arch(),
            &tiny_params(),
            71,
            0,
            None,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(bundle.buffer.len(), 20);
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|l| l.episode_return.is_finite()));
        assert!(log.iter().all(|l| l.mean_loss.is_finite()));
    }

    #[test]
    fn rejects_zero_feedback_width() {
        let mut rng = substream(1, STREAM_INIT);
        let arch = CArch {
            n_k: 0,
            ..tiny_arch()
        };
        assert!(matches!(
            AgentBundleC::<f32>::new(2, 2, arch, 16, &mut rng),
            Err(DqnError::WidthMismatch(_))
        ));
    }

    #[test]
    fn composite_gradients_match_finite_differences() {
        // full pipeline at f64: compression nets → BS net → loss on the
        // taken action, targets frozen
        let mut rng = substream(2, STREAM_INIT);
        let mut bundle: AgentBundleC<f64> =
            AgentBundleC::new(2, 2, tiny_arch(), 16, &mut rng).unwrap();
        let obs_dim = bundle.obs_dim;
        let mut r = substream(3, STREAM_EXPLORE);
        let batch = 3usize;
        let obs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..2 * obs_dim)
                    .map(|_| r.random_range(-1.5..1.5))
                    .collect()
            })
            .collect();
        let actions: Vec<u32> = vec![0, 2, 3];
        let targets: Vec<f64> = vec![0.7, -0.4, 1.9];

        let (_, q_grads, comp_grads) = bundle
            .loss_and_grads(&obs, &actions, &targets, LossKind::Huber, 1.0)
            .unwrap();
        let analytic = bundle.grads_flat(&q_grads, &comp_grads);

        let n = bundle.param_count();
        let numeric = fdcheck::central_diff(
            &mut bundle,
            n,
            |b, i| b.param(i),
            |b, i, v| b.set_param(i, v),
            |b| {
                b.loss_value(&obs, &actions, &targets, LossKind::Huber, 1.0)
                    .unwrap()
            },
            1e-5,
        );
        let err = fdcheck::max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "max relative error {}", err);
    }

    #[test]
    fn exact_q_predictions_give_zero_loss_and_gradients() {
        let mut rng = substream(4, STREAM_INIT);
        let bundle: AgentBundleC<f64> =
            AgentBundleC::new(2, 2, tiny_arch(), 16, &mut rng).unwrap();
        let obs: Vec<Vec<f64>> = vec![vec![0.3; 2 * bundle.obs_dim]];
        let actions = vec![1u32];
        // target equals the current prediction
        let xs = bundle.split_per_link(&obs);
        let (state, _) = bundle.compress_batch(&xs, false).unwrap();
        let q = bundle.q.forward(state.view()).unwrap();
        let targets = vec![q[(0, 1)]];
        let (loss, qg, cg) = bundle
            .loss_and_grads(&obs, &actions, &targets, LossKind::Huber, 1.0)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!(bundle.grads_flat(&qg, &cg).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_transition_scalar_fixture_matches_hand_huber() {
        let mut rng = substream(5, STREAM_INIT);
        let mut bundle: AgentBundleC<f64> =
            AgentBundleC::new(2, 1, tiny_arch(), 16, &mut rng).unwrap();
        let obs = vec![vec![0.1; bundle.obs_dim]];
        let actions = vec![0u32];
        let xs = bundle.split_per_link(&obs);
        let (state, _) = bundle.compress_batch(&xs, false).unwrap();
        let q0 = bundle.q.forward(state.view()).unwrap()[(0, 0)];
        let y = q0 + 2.0; // error of −2, linear branch
        let (loss, _, _) = bundle
            .loss_and_grads(&obs, &actions, &[y], LossKind::Huber, 1.0)
            .unwrap();
        assert!((loss - 1.5).abs() < 1e-12);
        // squared-error ablation switch
        let (loss_sq, _, _) = bundle
            .loss_and_grads(&obs, &actions, &[y], LossKind::Squared, 1.0)
            .unwrap();
        assert!((loss_sq - 2.0).abs() < 1e-12);
        bundle.refresh_target();
        assert!(bundle.q_target.parameters_equal(&bundle.q));
    }

    #[test]
    fn lr_zero_leaves_parameters_unchanged() {
        let mut env =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 72).unwrap();
        let params = TrainParams {
            learning_rate: 0.0,
            ..tiny_params()
        };
        let mut rng_init = substream(72, STREAM_INIT);
        let fresh: AgentBundleC<f64> = AgentBundleC::new(
            2,
            2,
            tiny_arch(),
            params.buffer_capacity,
            &mut rng_init,
        )
        .unwrap();
        let before: Vec<f64> = (0..fresh.param_count()).map(|i| fresh.param(i)).collect();
        let (bundle, _) = train_c_decision::<f64, _>(
            &mut env,
            &tiny_arch(),
            &params,
            72,
            0,
            Some(fresh),
            |_, _| Ok(()),
        )
        .unwrap();
        let after: Vec<f64> = (0..bundle.param_count()).map(|i| bundle.param(i)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn binary_feedback_stays_in_sign_alphabet_under_noise() {
        let mut rng = substream(6, STREAM_INIT);
        let arch = CArch {
            binary_feedback: true,
            feedback_bits: 9,
            ..tiny_arch()
        };
        let bundle: AgentBundleC<f64> = AgentBundleC::new(2, 2, arch, 16, &mut rng).unwrap();
        let obs = vec![0.2; bundle.obs_dim];
        let fb = bundle.feedback_one(0, &obs).unwrap();
        assert_eq!(fb.len(), 9);
        assert!(fb.iter().all(|&v| v == 1.0 || v == -1.0));
        // corrupt-then-resign stays in the alphabet
        let mut fb64: Vec<f64> = fb.clone();
        let mut rng_noise = substream(7, crate::seeding::STREAM_NOISE);
        noise_inject(&mut fb64, 1.5, &mut rng_noise);
        let resigned = binarize(&fb64);
        assert!(resigned.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn greedy_test_rollout_is_deterministic_and_noise_free_ratio_is_identity() {
        let mut env =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 73).unwrap();
        let (bundle, _) = train_c_decision::<f32, _>(
            &mut env,
            &tiny_arch(),
            &tiny_params(),
            73,
            0,
            None,
            |_, _| Ok(()),
        )
        .unwrap();
        let mut rng_a = substream(73, crate::seeding::STREAM_NOISE);
        let mut env_a =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 500).unwrap();
        let a = test_c_decision(
            &bundle,
            &mut env_a,
            3,
            10,
            1,
            &NoiseCfg::default(),
            &mut rng_a,
            false,
        )
        .unwrap();
        let mut rng_b = substream(73, crate::seeding::STREAM_NOISE);
        let mut env_b =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 500).unwrap();
        let b = test_c_decision(
            &bundle,
            &mut env_b,
            3,
            10,
            1,
            &NoiseCfg {
                input_ratio: 0.0,
                feedback_ratio: 0.0,
            },
            &mut rng_b,
            false,
        )
        .unwrap();
        assert_eq!(a.returns, b.returns);
    }
}
