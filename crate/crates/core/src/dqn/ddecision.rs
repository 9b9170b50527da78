//! D-Decision: V2V links keep their compression networks, the BS aggregates
//! all feedback into a broadcast vector (the aggregated global information,
//! AGI), and each V2V link picks its own channel with a local Q-network fed
//! by its observation concatenated with the AGI. Everything trains end to end
//! from the shared reward; each V2V link keeps its own target network.

use super::{
    argmax, normalize_joint, DqnError, EpisodeLog, LossKind, NoiseCfg, ReplayBuffer, TrainParams,
    Transition,
};
use crate::env::{ActionCodec, AllocationAction, Observation, V2xEnv};
use crate::eval::{noise_inject, RolloutTrace};
use crate::neural::{binarize, Activation, DenseNetwork, Gradients, LayerSpec, Tape};
use crate::scalar::Scalar;
use crate::seeding::{mix, substream, STREAM_EXPLORE, STREAM_INIT};
use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture of the D-Decision scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DArch {
    /// Number of real-valued feedback values per V2V link (N_k).
    pub n_k: usize,
    pub comp_hidden: Vec<usize>,
    pub binary_feedback: bool,
    pub feedback_bits: usize,
    /// Number of AGI values broadcast by the BS (N_g).
    pub n_g: usize,
    pub agg_hidden: Vec<usize>,
    /// Quantize the AGI through a pre-binary tanh layer plus sign layer.
    pub binary_agi: bool,
    /// Width of the binary AGI when quantizing.
    pub n_g_bits: usize,
    pub dec_hidden: Vec<usize>,
}

impl Default for DArch {
    fn default() -> Self {
        Self {
            n_k: 3,
            comp_hidden: vec![16, 32, 16],
            binary_feedback: false,
            feedback_bits: 36,
            n_g: 16,
            agg_hidden: vec![500, 400, 300],
            binary_agi: false,
            n_g_bits: 80,
            dec_hidden: vec![80, 40, 20],
        }
    }
}

impl DArch {
    pub fn feedback_dim(&self) -> usize {
        if self.binary_feedback {
            self.feedback_bits
        } else {
            self.n_k
        }
    }

    /// Width of the broadcast AGI as seen by every decision network.
    pub fn agi_dim(&self) -> usize {
        if self.binary_agi {
            self.n_g_bits
        } else {
            self.n_g
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

    fn agg_specs(&self) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self
            .agg_hidden
            .iter()
            .map(|&w| LayerSpec::dense(w, Activation::Relu))
            .collect();
        specs.push(LayerSpec::dense(self.n_g, Activation::Linear));
        if self.binary_agi {
            specs.push(LayerSpec::dense(self.n_g_bits, Activation::Tanh));
            specs.push(LayerSpec::sign());
        }
        specs
    }

    fn dec_specs(&self, n_channels: usize) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self
            .dec_hidden
            .iter()
            .map(|&w| LayerSpec::dense(w, Activation::Relu))
            .collect();
        specs.push(LayerSpec::dense(n_channels, Activation::Linear));
        specs
    }
}

/// Trained state of the D-Decision scheme.
pub struct AgentBundleD<T: Scalar> {
    pub arch: DArch,
    pub n_channels: usize,
    pub n_links: usize,
    pub obs_dim: usize,
    pub comp: Vec<DenseNetwork<T>>,
    pub agg: DenseNetwork<T>,
    pub dec: Vec<DenseNetwork<T>>,
    pub dec_target: Vec<DenseNetwork<T>>,
    pub buffer: ReplayBuffer<T>,
}

impl<T: Scalar> AgentBundleD<T> {
    pub fn new(
        n_channels: usize,
        n_links: usize,
        arch: DArch,
        buffer_capacity: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, DqnError> {
        if arch.n_k == 0 {
            return Err(DqnError::WidthMismatch(
                "n_k must be at least 1 for the D-Decision scheme".into(),
            ));
        }
        if arch.n_g == 0 {
            return Err(DqnError::WidthMismatch(
                "n_g must be at least 1 for the D-Decision scheme".into(),
            ));
        }
        if arch.binary_agi && arch.n_g_bits == 0 {
            return Err(DqnError::WidthMismatch(
                "binary AGI requires n_g_bits >= 1".into(),
            ));
        }
        let obs_dim = Observation::dim(n_channels);
        let comp: Vec<DenseNetwork<T>> = (0..n_links)
            .map(|_| DenseNetwork::new(obs_dim, &arch.comp_specs(), rng))
            .collect();
        let agg = DenseNetwork::new(n_links * arch.feedback_dim(), &arch.agg_specs(), rng);
        let dec: Vec<DenseNetwork<T>> = (0..n_links)
            .map(|_| {
                DenseNetwork::new(
                    obs_dim + arch.agi_dim(),
                    &arch.dec_specs(n_channels),
                    rng,
                )
            })
            .collect();
        let dec_target = dec.clone();
        Ok(Self {
            arch,
            n_channels,
            n_links,
            obs_dim,
            comp,
            agg,
            dec,
            dec_target,
            buffer: ReplayBuffer::new(buffer_capacity),
        })
    }

    pub fn codec(&self) -> ActionCodec {
        ActionCodec::new(self.n_channels, self.n_links)
    }

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

    /// AGI broadcast for one joint observation (flat, normalized).
    pub fn agi_one(&self, joint_obs: &[T]) -> Result<Vec<T>, DqnError> {
        let xs = self.split_per_link(std::slice::from_ref(&joint_obs.to_vec()));
        let (fb, _) = self.compress_batch(&xs, false)?;
        let phi = self.agg.forward(fb.view())?;
        Ok(phi.row(0).to_vec())
    }

    /// Per-link q-values given that link's observation and the broadcast AGI.
    pub fn q_values_one(&self, k: usize, obs_k: &[T], agi: &[T]) -> Result<Vec<T>, DqnError> {
        let mut s_k = Vec::with_capacity(self.obs_dim + agi.len());
        s_k.extend_from_slice(obs_k);
        s_k.extend_from_slice(agi);
        let x = Array2::from_shape_vec((1, s_k.len()), s_k)
            .map_err(|e| DqnError::WidthMismatch(e.to_string()))?;
        let q = self.dec[k].forward(x.view())?;
        Ok(q.row(0).to_vec())
    }

    /// Joint action with independent epsilon-greedy exploration per V2V link.
    /// The AGI is only computed when at least one link exploits.
    pub fn act<R: Rng>(
        &self,
        joint_obs: &[T],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<AllocationAction, DqnError> {
        let explore: Vec<bool> = (0..self.n_links)
            .map(|_| epsilon > 0.0 && rng.random::<f64>() < epsilon)
            .collect();
        let mut channels = vec![0u8; self.n_links];
        let agi = if explore.iter().all(|&e| e) {
            None
        } else {
            Some(self.agi_one(joint_obs)?)
        };
        for k in 0..self.n_links {
            if explore[k] {
                channels[k] = rng.random_range(0..self.n_channels) as u8;
            } else {
                let obs_k = &joint_obs[k * self.obs_dim..(k + 1) * self.obs_dim];
                let q = self.q_values_one(k, obs_k, agi.as_ref().expect("agi computed"))?;
                channels[k] = argmax(&q) as u8;
            }
        }
        Ok(AllocationAction::new(channels))
    }

    /// TD targets per link for a sampled batch, through the live compression
    /// and aggregation networks and the frozen per-link target networks.
    pub fn compute_targets(&self, batch: &[usize], gamma: T) -> Result<Vec<Vec<T>>, DqnError> {
        let next: Vec<Vec<T>> = batch
            .iter()
            .map(|&i| self.buffer.get(i).next_obs.clone())
            .collect();
        let xs = self.split_per_link(&next);
        let (fb, _) = self.compress_batch(&xs, false)?;
        let phi = self.agg.forward(fb.view())?;
        let mut targets = Vec::with_capacity(self.n_links);
        for k in 0..self.n_links {
            let s_k = concat_state(&xs[k], &phi);
            let qn = self.dec_target[k].forward(s_k.view())?;
            let t_k: Vec<T> = batch
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
                .collect();
            targets.push(t_k);
        }
        Ok(targets)
    }

    /// Summed per-link losses and gradients for every trainable network, with
    /// frozen targets. The AGI gradient accumulates over links before flowing
    /// back through the aggregation and compression networks.
    #[allow(clippy::type_complexity)]
    pub fn loss_and_grads(
        &self,
        obs: &[Vec<T>],
        actions: &[u32],
        targets: &[Vec<T>],
        loss_kind: LossKind,
        delta: T,
    ) -> Result<(Vec<T>, Vec<Gradients<T>>, Gradients<T>, Vec<Gradients<T>>), DqnError> {
        let b = obs.len();
        let codec = self.codec();
        let xs = self.split_per_link(obs);
        let (fb, comp_tapes) = self.compress_batch(&xs, true)?;
        let (phi, agg_tape) = self.agg.forward_tape(fb.view())?;
        let g = self.arch.agi_dim();
        let mut d_phi = Array2::zeros((b, g));
        let mut dec_grads = Vec::with_capacity(self.n_links);
        let mut losses = Vec::with_capacity(self.n_links);
        for k in 0..self.n_links {
            let s_k = concat_state(&xs[k], &phi);
            let (q_k, tape_k) = self.dec[k].forward_tape(s_k.view())?;
            let taken: Vec<T> = (0..b)
                .map(|row| {
                    let a = codec.decode(actions[row] as usize).channels[k] as usize;
                    q_k[(row, a)]
                })
                .collect();
            let (loss_k, d_taken) = loss_kind.eval(&taken, &targets[k], delta);
            let mut d_out = Array2::zeros(q_k.raw_dim());
            for row in 0..b {
                let a = codec.decode(actions[row] as usize).channels[k] as usize;
                d_out[(row, a)] = d_taken[row];
            }
            let (g_k, d_s) = self.dec[k].backward(&tape_k, d_out.view())?;
            d_phi += &d_s.slice(s![.., self.obs_dim..]);
            dec_grads.push(g_k);
            losses.push(loss_k);
        }
        let (agg_grads, d_fb) = self.agg.backward(&agg_tape, d_phi.view())?;
        let f = self.arch.feedback_dim();
        let mut comp_grads = Vec::with_capacity(self.n_links);
        for k in 0..self.n_links {
            let slice = d_fb.slice(s![.., k * f..(k + 1) * f]).to_owned();
            let tape = comp_tapes[k].as_ref().expect("tape requested");
            let (g_c, _) = self.comp[k].backward(tape, slice.view())?;
            comp_grads.push(g_c);
        }
        Ok((losses, dec_grads, agg_grads, comp_grads))
    }

    /// Summed loss value with frozen targets (finite-difference oracle hook).
    pub fn loss_value(
        &self,
        obs: &[Vec<T>],
        actions: &[u32],
        targets: &[Vec<T>],
        loss_kind: LossKind,
        delta: T,
    ) -> Result<T, DqnError> {
        let b = obs.len();
        let codec = self.codec();
        let xs = self.split_per_link(obs);
        let (fb, _) = self.compress_batch(&xs, false)?;
        let phi = self.agg.forward(fb.view())?;
        let mut total = T::zero();
        for k in 0..self.n_links {
            let s_k = concat_state(&xs[k], &phi);
            let q_k = self.dec[k].forward(s_k.view())?;
            let taken: Vec<T> = (0..b)
                .map(|row| {
                    let a = codec.decode(actions[row] as usize).channels[k] as usize;
                    q_k[(row, a)]
                })
                .collect();
            total = total + loss_kind.eval(&taken, &targets[k], delta).0;
        }
        Ok(total)
    }

    /// One mini-batch update of every network; returns per-link losses.
    pub fn train_step(
        &mut self,
        batch: &[usize],
        params: &TrainParams,
    ) -> Result<Vec<T>, DqnError> {
        let gamma = T::from_f64(params.gamma);
        let targets = self.compute_targets(batch, gamma)?;
        let obs: Vec<Vec<T>> = batch
            .iter()
            .map(|&i| self.buffer.get(i).obs.clone())
            .collect();
        let actions: Vec<u32> = batch.iter().map(|&i| self.buffer.get(i).action).collect();
        let (losses, dec_grads, agg_grads, comp_grads) = self.loss_and_grads(
            &obs,
            &actions,
            &targets,
            params.loss,
            T::from_f64(params.huber_delta),
        )?;
        let lr = T::from_f64(params.learning_rate);
        let decay = T::from_f64(params.rmsprop_decay);
        let eps = T::from_f64(params.rmsprop_eps);
        for (net, g) in self.dec.iter_mut().zip(dec_grads.iter()) {
            net.apply_rmsprop(g, lr, decay, eps);
        }
        self.agg.apply_rmsprop(&agg_grads, lr, decay, eps);
        for (net, g) in self.comp.iter_mut().zip(comp_grads.iter()) {
            net.apply_rmsprop(g, lr, decay, eps);
        }
        Ok(losses)
    }

    /// θ_k⁻ ← θ_k for every V2V link.
    pub fn refresh_targets(&mut self) {
        for (t, n) in self.dec_target.iter_mut().zip(self.dec.iter()) {
            t.copy_parameters_from(n);
        }
    }

    pub fn param_count(&self) -> usize {
        self.comp.iter().map(|c| c.param_count()).sum::<usize>()
            + self.agg.param_count()
            + self.dec.iter().map(|d| d.param_count()).sum::<usize>()
    }

    pub fn param(&self, mut idx: usize) -> T {
        for c in &self.comp {
            if idx < c.param_count() {
                return c.param(idx);
            }
            idx -= c.param_count();
        }
        if idx < self.agg.param_count() {
            return self.agg.param(idx);
        }
        idx -= self.agg.param_count();
        for d in &self.dec {
            if idx < d.param_count() {
                return d.param(idx);
            }
            idx -= d.param_count();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, v: T) {
        for c in &mut self.comp {
            if idx < c.param_count() {
                c.set_param(idx, v);
                return;
            }
            idx -= c.param_count();
        }
        if idx < self.agg.param_count() {
            self.agg.set_param(idx, v);
            return;
        }
        idx -= self.agg.param_count();
        for d in &mut self.dec {
            if idx < d.param_count() {
                d.set_param(idx, v);
                return;
            }
            idx -= d.param_count();
        }
        panic!("parameter index out of range");
    }

    pub fn grads_flat(
        &self,
        dec_grads: &[Gradients<T>],
        agg_grads: &Gradients<T>,
        comp_grads: &[Gradients<T>],
    ) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (net, g) in self.comp.iter().zip(comp_grads.iter()) {
            out.extend(net.grad_flat(g));
        }
        out.extend(self.agg.grad_flat(agg_grads));
        for (net, g) in self.dec.iter().zip(dec_grads.iter()) {
            out.extend(net.grad_flat(g));
        }
        out
    }
}

fn concat_state<T: Scalar>(obs: &Array2<T>, phi: &Array2<T>) -> Array2<T> {
    let b = obs.nrows();
    let mut s_k = Array2::zeros((b, obs.ncols() + phi.ncols()));
    s_k.slice_mut(s![.., ..obs.ncols()]).assign(obs);
    s_k.slice_mut(s![.., obs.ncols()..]).assign(phi);
    s_k
}

/// Train the D-Decision scheme: per step each V2V link explores
/// independently, the joint transition lands in one shared buffer, and every
/// network updates from the same uniformly sampled mini-batch. Per-link
/// target networks refresh every `target_refresh_steps` steps.
pub fn train_d_decision<T: Scalar, F>(
    env: &mut V2xEnv,
    arch: &DArch,
    params: &TrainParams,
    seed: u64,
    start_episode: usize,
    bundle: Option<AgentBundleD<T>>,
    mut on_episode: F,
) -> Result<(AgentBundleD<T>, Vec<EpisodeLog>), DqnError>
where
    F: FnMut(&EpisodeLog, &AgentBundleD<T>) -> Result<(), DqnError>,
{
    let scenario = env.scenario().clone();
    let mut bundle = match bundle {
        Some(b) => b,
        None => {
            let mut rng_init = substream(seed, STREAM_INIT);
            AgentBundleD::new(
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
            let action = bundle.act(&joint, epsilon, &mut rng_explore)?;
            let a_idx = codec.encode(&action) as u32;
            let out = env.step(&action);
            ep_return += out.reward;
            let next: Vec<T> = normalize_joint(&out.observations, &norm);
            bundle.buffer.push(Transition {
                obs: joint,
                action: a_idx,
                reward: T::from_f64(out.reward),
                next_obs: next.clone(),
            });
            if bundle.buffer.len() >= params.batch_size {
                let batch = bundle.buffer.sample_indices(params.batch_size, &mut rng_explore);
                let losses = bundle.train_step(&batch, params)?;
                loss_sum += losses.iter().map(|l| l.as_f64()).sum::<f64>()
                    / losses.len().max(1) as f64;
                loss_n += 1;
            }
            joint = next;
            global_step += 1;
            if global_step % params.target_refresh_steps == 0 {
                bundle.refresh_targets();
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

/// Greedy testing rollout for the D-Decision scheme, mirroring the C-Decision
/// protocol: AGI recomputed every `feedback_interval` steps, per-link greedy
/// channel choices, optional input/feedback noise (binary AGI is corrupted
/// then re-signed).
pub fn test_d_decision<T: Scalar>(
    bundle: &AgentBundleD<T>,
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
    let mut trace = RolloutTrace::default();
    for episode in 0..episodes {
        let mut raw = env.reset(episode as u64)?;
        let mut ep_return = 0.0;
        let mut held = AllocationAction::new(vec![0; bundle.n_links]);
        for t in 0..steps {
            if t % feedback_interval == 0 {
                let mut joint: Vec<T> = Vec::with_capacity(bundle.n_links * bundle.obs_dim);
                for obs in raw.iter() {
                    let mut values = obs.raw();
                    if noise.input_ratio > 0.0 {
                        noise_inject(&mut values, noise.input_ratio, rng_noise);
                    }
                    let noisy = Observation::from_raw(&values, scenario.n_v2i);
                    joint.extend(noisy.normalized(&norm).into_iter().map(T::from_f64));
                }
                let mut agi = bundle.agi_one(&joint)?;
                if noise.feedback_ratio > 0.0 {
                    let mut agi64: Vec<f64> = agi.iter().map(|v| v.as_f64()).collect();
                    noise_inject(&mut agi64, noise.feedback_ratio, rng_noise);
                    agi = agi64.into_iter().map(T::from_f64).collect();
                    if bundle.arch.binary_agi {
                        agi = binarize(&agi);
                    }
                }
                let mut channels = vec![0u8; bundle.n_links];
                for k in 0..bundle.n_links {
                    let obs_k = &joint[k * bundle.obs_dim..(k + 1) * bundle.obs_dim];
                    let q = bundle.q_values_one(k, obs_k, &agi)?;
                    channels[k] = argmax(&q) as u8;
                }
                held = AllocationAction::new(channels);
            }
            let out = env.step(&held);
            ep_return += out.reward;
            trace.push_step(
                record_steps,
                episode,
                t,
                bundle.codec().encode(&held) as u32,
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

    fn tiny_arch() -> DArch {
        DArch {
            n_k: 2,
            comp_hidden: vec![6, 5],
            binary_feedback: false,
            feedback_bits: 8,
            n_g: 3,
            agg_hidden: vec![7, 6],
            binary_agi: false,
            n_g_bits: 6,
            dec_hidden: vec![6, 5],
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
    fn smoke_training_has_finite_losses_for_every_link() {
        let mut env =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 81).unwrap();
        let (mut bundle, log) = train_d_decision::<f32, _>(
            &mut env,
            &tiny_arch(),
            &tiny_params(),
            81,
            0,
            None,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|l| l.mean_loss.is_finite()));
        // per-link losses explicitly
        let batch = vec![0, 1, 2, 3];
        let losses = bundle.train_step(&batch, &tiny_params()).unwrap();
        assert_eq!(losses.len(), 2);
        assert!(losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn single_link_reduces_to_plain_dqn_over_channels() {
        let mut env = V2xEnv::new(
            ScenarioConfig {
                n_v2v: 1,
                ..tiny_scenario()
            },
            PropagationConfig::default(),
            82,
        )
        .unwrap();
        let (bundle, log) = train_d_decision::<f32, _>(
            &mut env,
            &tiny_arch(),
            &tiny_params(),
            82,
            0,
            None,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(bundle.dec.len(), 1);
        assert_eq!(bundle.dec[0].output_dim(), 2);
        assert!(log.iter().all(|l| l.episode_return.is_finite()));
    }

    #[test]
    fn composite_gradients_match_finite_differences() {
        let mut rng = substream(12, STREAM_INIT);
        let mut bundle: AgentBundleD<f64> =
            AgentBundleD::new(2, 2, tiny_arch(), 16, &mut rng).unwrap();
        let mut r = substream(13, STREAM_EXPLORE);
        let batch = 3usize;
        let obs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..2 * bundle.obs_dim)
                    .map(|_| r.random_range(-1.5..1.5))
                    .collect()
            })
            .collect();
        let actions: Vec<u32> = vec![0, 3, 1];
        let targets: Vec<Vec<f64>> = vec![vec![0.5, -0.2, 1.1], vec![-0.7, 0.9, 0.3]];

        let (_, dec_g, agg_g, comp_g) = bundle
            .loss_and_grads(&obs, &actions, &targets, LossKind::Huber, 1.0)
            .unwrap();
        let analytic = bundle.grads_flat(&dec_g, &agg_g, &comp_g);
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
    fn binary_agi_outputs_are_signs() {
        let mut rng = substream(14, STREAM_INIT);
        let arch = DArch {
            binary_agi: true,
            n_g_bits: 5,
            ..tiny_arch()
        };
        let bundle: AgentBundleD<f64> = AgentBundleD::new(2, 2, arch, 16, &mut rng).unwrap();
        let joint = vec![0.3; 2 * bundle.obs_dim];
        let agi = bundle.agi_one(&joint).unwrap();
        assert_eq!(agi.len(), 5);
        assert!(agi.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(bundle.dec[0].input_dim(), bundle.obs_dim + 5);
    }

    #[test]
    fn deterministic_test_rollout_under_fixed_seed() {
        let mut env =
            V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 83).unwrap();
        let (bundle, _) = train_d_decision::<f32, _>(
            &mut env,
            &tiny_arch(),
            &tiny_params(),
            83,
            0,
            None,
            |_, _| Ok(()),
        )
        .unwrap();
        let run = || {
            let mut env =
                V2xEnv::new(tiny_scenario(), PropagationConfig::default(), 600).unwrap();
            let mut rng = substream(83, crate::seeding::STREAM_NOISE);
            test_d_decision(
                &bundle,
                &mut env,
                3,
                10,
                2,
                &NoiseCfg::default(),
                &mut rng,
                false,
            )
            .unwrap()
            .returns
        };
        assert_eq!(run(), run());
    }
}
