//! Urban V2X environment: vehicle drop and mobility on a Manhattan grid,
//! per-step channel realizations, SINR/capacity/reward accounting, and
//! observation assembly for the learning pipelines.
//!
//! One environment instance is stepped sequentially. Fast fading is redrawn
//! every step; positions, path loss and shadowing advance once per
//! `large_scale_update_period` steps (one step is 1 ms of simulated time).
//! All randomness flows through two seeded streams (motion and channel), so a
//! channel trace depends only on the seed, never on the actions taken — which
//! is what makes paired policy/oracle/random evaluation exact.

pub mod roads;

use crate::channel::{
    combine_link_gain, dbm_to_mw, draw_fast_fading, pathloss_v2i_db, pathloss_v2v_db,
    ChannelError, ShadowingState,
};
pub use crate::channel::PropagationConfig;
use crate::seeding::{mix, substream, STREAM_CHANNEL, STREAM_MOTION};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use roads::{RoadGrid, VehiclePose};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("could not pair V2V link {link}: no receiver position within {radius_m} m after {tries} tries")]
    DropInfeasible {
        link: usize,
        radius_m: f64,
        tries: usize,
    },
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Normalization constants applied to raw observations before they enter any
/// network. Gains and interference are taken to dB/dBm, then shifted and
/// scaled; the constants below were frozen from a calibration rollout of the
/// default scenario under random actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsNorm {
    pub gain_mean_db: f64,
    pub gain_scale_db: f64,
    pub interference_mean_dbm: f64,
    pub interference_scale_db: f64,
    pub bs_gain_mean_db: f64,
    pub bs_gain_scale_db: f64,
}

impl Default for ObsNorm {
    fn default() -> Self {
        Self {
            gain_mean_db: -87.5,
            gain_scale_db: 15.0,
            interference_mean_dbm: -97.0,
            interference_scale_db: 14.0,
            bs_gain_mean_db: -103.5,
            bs_gain_scale_db: 12.5,
        }
    }
}

/// Linear floor applied before dB conversion so that exact zeros (for example
/// a forced-off interferer) stay finite.
const GAIN_FLOOR_LINEAR: f64 = 1e-16;

fn norm_db(value_linear: f64, mean_db: f64, scale_db: f64) -> f64 {
    let db = 10.0 * value_linear.max(GAIN_FLOOR_LINEAR).log10();
    (db - mean_db) / scale_db
}

/// Scenario layout, powers, reward weights and episode cadence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of V2I links / cellular users / channels (N).
    pub n_v2i: usize,
    /// Number of V2V pairs (K).
    pub n_v2v: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub v2i_power_dbm: f64,
    pub v2v_power_dbm: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub steps_per_episode: usize,
    /// Steps between mobility/path-loss/shadowing updates (fast fading is
    /// redrawn every step).
    pub large_scale_update_period: usize,
    pub pairing_radius_m: f64,
    /// Normalized channel bandwidth entering the log2 capacity.
    pub bandwidth: f64,
    pub normalization: ObsNorm,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_v2i: 4,
            n_v2v: 4,
            area_width_m: 1299.0,
            area_height_m: 750.0,
            blocks_x: 3,
            blocks_y: 3,
            speed_min_kmh: 10.0,
            speed_max_kmh: 15.0,
            v2i_power_dbm: 23.0,
            v2v_power_dbm: 10.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
            steps_per_episode: 1000,
            large_scale_update_period: 100,
            pairing_radius_m: 150.0,
            bandwidth: 1.0,
            normalization: ObsNorm::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_v2i < 1 || self.n_v2i > 255 {
            return Err(EnvError::InvalidConfig(format!(
                "n_v2i must be in 1..=255, got {}",
                self.n_v2i
            )));
        }
        if self.n_v2v < 1 {
            return Err(EnvError::InvalidConfig("n_v2v must be at least 1".into()));
        }
        if self.lambda_c < 0.0 || self.lambda_d < 0.0 {
            return Err(EnvError::InvalidConfig(
                "reward weights must be nonnegative".into(),
            ));
        }
        if !(self.area_width_m > 0.0) || !(self.area_height_m > 0.0) {
            return Err(EnvError::InvalidConfig("area must be positive".into()));
        }
        if !(self.speed_min_kmh > 0.0) || self.speed_max_kmh < self.speed_min_kmh {
            return Err(EnvError::InvalidConfig(
                "speed range must satisfy 0 < min <= max".into(),
            ));
        }
        if self.steps_per_episode == 0 || self.large_scale_update_period == 0 {
            return Err(EnvError::InvalidConfig(
                "episode length and update period must be positive".into(),
            ));
        }
        if !(self.pairing_radius_m > 0.0) {
            return Err(EnvError::InvalidConfig(
                "pairing radius must be positive".into(),
            ));
        }
        if !(self.bandwidth > 0.0) {
            return Err(EnvError::InvalidConfig("bandwidth must be positive".into()));
        }
        Ok(())
    }

    /// Linear powers, effective noise levels and reward weights.
    pub fn radio(&self, prop: &PropagationConfig) -> RadioParams {
        RadioParams {
            p_c_mw: dbm_to_mw(self.v2i_power_dbm),
            p_d_mw: dbm_to_mw(self.v2v_power_dbm),
            noise_bs_mw: prop.effective_noise_bs_mw(),
            noise_vehicle_mw: prop.effective_noise_vehicle_mw(),
            bandwidth: self.bandwidth,
            lambda_c: self.lambda_c,
            lambda_d: self.lambda_d,
        }
    }
}

/// Linear-domain quantities entering SINR and reward computations.
#[derive(Clone, Copy, Debug)]
pub struct RadioParams {
    pub p_c_mw: f64,
    pub p_d_mw: f64,
    pub noise_bs_mw: f64,
    pub noise_vehicle_mw: f64,
    pub bandwidth: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
}

/// Joint channel choice: one channel index in [0, N) per V2V link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationAction {
    pub channels: Vec<u8>,
}

impl AllocationAction {
    pub fn new(channels: Vec<u8>) -> Self {
        Self { channels }
    }
}

/// Canonical bijection between joint actions and indices in [0, N^K):
/// idx = Σ_k channels[k]·N^k.
#[derive(Clone, Copy, Debug)]
pub struct ActionCodec {
    pub n_channels: usize,
    pub n_links: usize,
}

impl ActionCodec {
    pub fn new(n_channels: usize, n_links: usize) -> Self {
        assert!(n_channels >= 1 && n_channels <= 255);
        assert!(n_links >= 1);
        Self { n_channels, n_links }
    }

    /// N^K, saturating at usize::MAX for absurd configurations.
    pub fn count(&self) -> usize {
        let mut c: usize = 1;
        for _ in 0..self.n_links {
            c = c.saturating_mul(self.n_channels);
        }
        c
    }

    pub fn encode(&self, action: &AllocationAction) -> usize {
        debug_assert_eq!(action.channels.len(), self.n_links);
        let mut idx = 0usize;
        let mut base = 1usize;
        for &c in &action.channels {
            debug_assert!((c as usize) < self.n_channels);
            idx += c as usize * base;
            base *= self.n_channels;
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> AllocationAction {
        debug_assert!(idx < self.count());
        let mut channels = Vec::with_capacity(self.n_links);
        for _ in 0..self.n_links {
            channels.push((idx % self.n_channels) as u8);
            idx /= self.n_channels;
        }
        AllocationAction { channels }
    }

    /// Uniform independent channel choice per V2V link.
    pub fn random_action<R: Rng>(&self, rng: &mut R) -> AllocationAction {
        let channels = (0..self.n_links)
            .map(|_| rng.random_range(0..self.n_channels) as u8)
            .collect();
        AllocationAction { channels }
    }
}

/// All instantaneous linear power gains for one time step.
///
/// Index conventions: `g[n]` CU n → BS on channel n; `h[(k, n)]` V2V k
/// transmitter → its receiver on channel n; `h_b[(k, n)]` V2V k transmitter →
/// BS on channel n; `h_cross[(l, k, n)]` V2V l transmitter → V2V k receiver on
/// channel n (diagonal l = k unused, zero); `g_cross[(n, k)]` CU n → V2V k
/// receiver on channel n.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub g: Vec<f64>,
    pub h: Array2<f64>,
    pub h_b: Array2<f64>,
    pub h_cross: Array3<f64>,
    pub g_cross: Array2<f64>,
}

impl ChannelRealization {
    pub fn n_channels(&self) -> usize {
        self.g.len()
    }

    pub fn n_links(&self) -> usize {
        self.h.nrows()
    }
}

/// SINR of the n-th V2I link under a joint V2V allocation.
pub fn v2i_sinr(
    re: &ChannelRealization,
    radio: &RadioParams,
    action: &AllocationAction,
    n: usize,
) -> f64 {
    let interference: f64 = action
        .channels
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c as usize == n)
        .map(|(k, _)| radio.p_d_mw * re.h_b[(k, n)])
        .sum();
    radio.p_c_mw * re.g[n] / (interference + radio.noise_bs_mw)
}

/// Aggregate interference seen by V2V link k's receiver on channel n:
/// co-channel V2V transmitters (l ≠ k) plus the resident CU.
pub fn v2v_interference(
    re: &ChannelRealization,
    radio: &RadioParams,
    action: &AllocationAction,
    k: usize,
    n: usize,
) -> f64 {
    let mut i = radio.p_c_mw * re.g_cross[(n, k)];
    for (l, &c) in action.channels.iter().enumerate() {
        if l != k && c as usize == n {
            i += radio.p_d_mw * re.h_cross[(l, k, n)];
        }
    }
    i
}

/// SINR of V2V link k on its chosen channel.
pub fn v2v_sinr(
    re: &ChannelRealization,
    radio: &RadioParams,
    action: &AllocationAction,
    k: usize,
) -> f64 {
    let n = action.channels[k] as usize;
    let interference = v2v_interference(re, radio, action, k, n);
    radio.p_d_mw * re.h[(k, n)] / (interference + radio.noise_vehicle_mw)
}

/// Shannon capacity B·log2(1 + sinr).
#[inline]
pub fn capacity(sinr: f64, bandwidth: f64) -> f64 {
    debug_assert!(sinr >= 0.0);
    bandwidth * (1.0 + sinr).log2()
}

/// Per-link capacities and the weighted reward they induce.
#[derive(Clone, Debug)]
pub struct RewardBreakdown {
    pub v2i_rates: Vec<f64>,
    pub v2v_rates: Vec<f64>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn v2i_sum(&self) -> f64 {
        self.v2i_rates.iter().sum()
    }

    pub fn v2v_sum(&self) -> f64 {
        self.v2v_rates.iter().sum()
    }
}

/// Weighted sum-rate reward: λ_c·Σ_n C_c[n] + λ_d·Σ_k C_d[k].
///
/// This is the single reward code path; the brute-force oracle evaluates the
/// same function.
pub fn reward_breakdown(
    re: &ChannelRealization,
    radio: &RadioParams,
    action: &AllocationAction,
) -> RewardBreakdown {
    let n_ch = re.n_channels();
    let n_links = re.n_links();
    let v2i_rates: Vec<f64> = (0..n_ch)
        .map(|n| capacity(v2i_sinr(re, radio, action, n), radio.bandwidth))
        .collect();
    let v2v_rates: Vec<f64> = (0..n_links)
        .map(|k| capacity(v2v_sinr(re, radio, action, k), radio.bandwidth))
        .collect();
    let total = radio.lambda_c * v2i_rates.iter().sum::<f64>()
        + radio.lambda_d * v2v_rates.iter().sum::<f64>();
    RewardBreakdown {
        v2i_rates,
        v2v_rates,
        total,
    }
}

pub fn reward(re: &ChannelRealization, radio: &RadioParams, action: &AllocationAction) -> f64 {
    reward_breakdown(re, radio, action).total
}

/// Raw (pre-normalization) observation of one V2V link: own-channel gains,
/// measured aggregate interference per channel, own transmit power, and the
/// cross gains to the BS. Length 3N + 1 once flattened.
#[derive(Clone, Debug)]
pub struct Observation {
    pub own_gains: Vec<f64>,
    pub interference_mw: Vec<f64>,
    pub tx_power_dbm: f64,
    pub bs_gains: Vec<f64>,
}

impl Observation {
    pub fn dim(n_channels: usize) -> usize {
        3 * n_channels + 1
    }

    pub fn len(&self) -> usize {
        self.own_gains.len() + self.interference_mw.len() + 1 + self.bs_gains.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flatten in (h_k, I_k, P_d, h_kB) order.
    pub fn raw(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.own_gains);
        out.extend_from_slice(&self.interference_mw);
        out.push(self.tx_power_dbm);
        out.extend_from_slice(&self.bs_gains);
        out
    }

    /// Rebuild from a raw vector (used after injecting observation noise).
    pub fn from_raw(values: &[f64], n_channels: usize) -> Self {
        assert_eq!(values.len(), Self::dim(n_channels));
        Self {
            own_gains: values[..n_channels].to_vec(),
            interference_mw: values[n_channels..2 * n_channels].to_vec(),
            tx_power_dbm: values[2 * n_channels],
            bs_gains: values[2 * n_channels + 1..].to_vec(),
        }
    }

    /// Network-ready vector: gains/interference in shifted-scaled dB, power in
    /// dBm/10.
    pub fn normalized(&self, norm: &ObsNorm) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.own_gains {
            out.push(norm_db(g, norm.gain_mean_db, norm.gain_scale_db));
        }
        for &i in &self.interference_mw {
            out.push(norm_db(
                i,
                norm.interference_mean_dbm,
                norm.interference_scale_db,
            ));
        }
        out.push(self.tx_power_dbm / 10.0);
        for &g in &self.bs_gains {
            out.push(norm_db(g, norm.bs_gain_mean_db, norm.bs_gain_scale_db));
        }
        out
    }
}

/// Assemble V2V link k's observation from a realization, measuring
/// interference under the previous step's allocation.
pub fn assemble_observation(
    re: &ChannelRealization,
    radio: &RadioParams,
    last_action: &AllocationAction,
    v2v_power_dbm: f64,
    k: usize,
) -> Observation {
    let n_ch = re.n_channels();
    let own_gains = (0..n_ch).map(|n| re.h[(k, n)]).collect();
    let interference_mw = (0..n_ch)
        .map(|n| v2v_interference(re, radio, last_action, k, n))
        .collect();
    let bs_gains = (0..n_ch).map(|n| re.h_b[(k, n)]).collect();
    Observation {
        own_gains,
        interference_mw,
        tx_power_dbm: v2v_power_dbm,
        bs_gains,
    }
}

/// One vehicle: a pose on the road grid plus a per-episode constant speed.
#[derive(Clone, Debug)]
pub struct VehicleState {
    pub pose: VehiclePose,
    pub speed_mps: f64,
}

/// Dropped topology: N CU vehicles plus K transmitter/receiver pairs.
#[derive(Clone, Debug)]
pub struct Topology {
    pub cu: Vec<VehicleState>,
    pub tx: Vec<VehicleState>,
    pub rx: Vec<VehicleState>,
}

fn euclid(a: &VehiclePose, b: &VehiclePose) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

const DROP_ATTEMPTS: usize = 200_000;

/// Drop `n_cu` CU vehicles and 2·`k_pairs` V2V vehicles uniformly over the
/// lane network, pairing each transmitter with the nearest unpaired receiver
/// vehicle within the pairing radius. A drop where some transmitter has no
/// neighbor in range is discarded and redrawn; exhausting the attempt budget
/// is an error.
pub fn drop_vehicles<R: Rng>(
    grid: &RoadGrid,
    n_cu: usize,
    k_pairs: usize,
    pairing_radius_m: f64,
    speed_range_kmh: (f64, f64),
    rng: &mut R,
) -> Result<Topology, EnvError> {
    let vehicle = |rng: &mut R| {
        let pose = grid.random_pose(rng);
        let kmh = if speed_range_kmh.0 == speed_range_kmh.1 {
            speed_range_kmh.0
        } else {
            rng.random_range(speed_range_kmh.0..speed_range_kmh.1)
        };
        VehicleState {
            pose,
            speed_mps: kmh / 3.6,
        }
    };
    let cu: Vec<VehicleState> = (0..n_cu).map(|_| vehicle(rng)).collect();
    let tx: Vec<VehicleState> = (0..k_pairs).map(|_| vehicle(rng)).collect();
    let mut failed_link = 0;
    // transmitter and CU positions stay unconditioned; only the receiver pool
    // is redrawn until every transmitter finds a neighbor in range
    for _ in 0..DROP_ATTEMPTS {
        let pool: Vec<VehicleState> = (0..k_pairs).map(|_| vehicle(rng)).collect();
        let mut used = vec![false; k_pairs];
        let mut rx: Vec<VehicleState> = Vec::with_capacity(k_pairs);
        let mut ok = true;
        for (link, t) in tx.iter().enumerate() {
            let nearest = pool
                .iter()
                .enumerate()
                .filter(|(i, r)| !used[*i] && euclid(&t.pose, &r.pose) <= pairing_radius_m)
                .min_by(|(_, a), (_, b)| {
                    euclid(&t.pose, &a.pose)
                        .partial_cmp(&euclid(&t.pose, &b.pose))
                        .expect("finite distances")
                });
            match nearest {
                Some((i, _)) => {
                    used[i] = true;
                    rx.push(pool[i].clone());
                }
                None => {
                    failed_link = link;
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(Topology { cu, tx, rx });
        }
    }
    Err(EnvError::DropInfeasible {
        link: failed_link,
        radius_m: pairing_radius_m,
        tries: DROP_ATTEMPTS,
    })
}

/// Advance every vehicle along its lane by speed·dt, turning at intersections.
pub fn advance_mobility<R: Rng>(
    grid: &RoadGrid,
    vehicles: &mut [&mut VehicleState],
    dt_s: f64,
    rng: &mut R,
) {
    assert!(dt_s >= 0.0);
    for v in vehicles.iter_mut() {
        grid.advance(&mut v.pose, v.speed_mps * dt_s, rng);
    }
}

/// Per-link slowly varying state: path loss plus a shadowing process.
#[derive(Clone, Debug)]
struct LinkState {
    pathloss_db: f64,
    shadow: ShadowingState,
}

/// Large-scale state for every link class, flattened row-major.
#[derive(Clone, Debug)]
struct LargeScale {
    /// CU n → BS.
    g: Vec<LinkState>,
    /// V2V k transmitter → receiver.
    h: Vec<LinkState>,
    /// V2V k transmitter → BS.
    hb: Vec<LinkState>,
    /// V2V l transmitter → V2V k receiver, K×K, diagonal unused.
    hx: Vec<LinkState>,
    /// CU n → V2V k receiver, N×K.
    gx: Vec<LinkState>,
}

/// Outcome of one environment step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub observations: Vec<Observation>,
}

/// The stepped MDP environment.
///
/// Episode randomness is derived per episode index from the base seed, so any
/// episode is reproducible in isolation (paired evaluation, exact resume),
/// independent of how many steps earlier episodes ran.
pub struct V2xEnv {
    scenario: ScenarioConfig,
    prop: PropagationConfig,
    radio: RadioParams,
    grid: RoadGrid,
    base_seed: u64,
    topology: Topology,
    large: LargeScale,
    realization: ChannelRealization,
    last_action: AllocationAction,
    step_in_episode: usize,
    rng_motion: ChaCha8Rng,
    rng_channel: ChaCha8Rng,
}

impl V2xEnv {
    /// Build an environment, initialized to episode 0.
    pub fn new(
        scenario: ScenarioConfig,
        prop: PropagationConfig,
        seed: u64,
    ) -> Result<Self, EnvError> {
        scenario.validate()?;
        prop.validate()?;
        let grid = RoadGrid::new(
            scenario.area_width_m,
            scenario.area_height_m,
            scenario.blocks_x,
            scenario.blocks_y,
        );
        let radio = scenario.radio(&prop);
        let mut env = Self {
            scenario,
            prop,
            radio,
            grid,
            base_seed: seed,
            topology: Topology {
                cu: Vec::new(),
                tx: Vec::new(),
                rx: Vec::new(),
            },
            large: LargeScale {
                g: Vec::new(),
                h: Vec::new(),
                hb: Vec::new(),
                hx: Vec::new(),
                gx: Vec::new(),
            },
            realization: ChannelRealization {
                g: Vec::new(),
                h: Array2::zeros((0, 0)),
                h_b: Array2::zeros((0, 0)),
                h_cross: Array3::zeros((0, 0, 0)),
                g_cross: Array2::zeros((0, 0)),
            },
            last_action: AllocationAction::new(Vec::new()),
            step_in_episode: 0,
            rng_motion: substream(seed, STREAM_MOTION),
            rng_channel: substream(seed, STREAM_CHANNEL),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn codec(&self) -> ActionCodec {
        ActionCodec::new(self.scenario.n_v2i, self.scenario.n_v2v)
    }

    pub fn realization(&self) -> &ChannelRealization {
        &self.realization
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn last_action(&self) -> &AllocationAction {
        &self.last_action
    }

    fn bs_position(&self) -> (f64, f64) {
        (self.scenario.area_width_m / 2.0, self.scenario.area_height_m / 2.0)
    }

    /// Start a fresh episode: new drop, new large-scale state, new fading,
    /// and a uniformly random previous action for the first interference
    /// measurement. Returns the initial observations.
    pub fn reset(&mut self, episode: u64) -> Result<Vec<Observation>, EnvError> {
        let ep_seed = mix(self.base_seed, episode);
        self.rng_motion = substream(ep_seed, STREAM_MOTION);
        self.rng_channel = substream(ep_seed, STREAM_CHANNEL);
        self.topology = drop_vehicles(
            &self.grid,
            self.scenario.n_v2i,
            self.scenario.n_v2v,
            self.scenario.pairing_radius_m,
            (self.scenario.speed_min_kmh, self.scenario.speed_max_kmh),
            &mut self.rng_motion,
        )?;
        self.large = Self::fresh_large_scale(
            &self.scenario,
            &self.prop,
            &self.grid,
            &self.topology,
            &mut self.rng_channel,
        );
        self.realization = Self::realize(
            &self.scenario,
            &self.prop,
            &self.large,
            |rng| draw_fast_fading(rng),
            &mut self.rng_channel,
        );
        self.last_action = self.codec().random_action(&mut self.rng_motion);
        self.step_in_episode = 0;
        Ok(self.observations())
    }

    /// Observations of all K V2V links under the current realization, with
    /// interference measured under the previous action.
    pub fn observations(&self) -> Vec<Observation> {
        (0..self.scenario.n_v2v)
            .map(|k| {
                assemble_observation(
                    &self.realization,
                    &self.radio,
                    &self.last_action,
                    self.scenario.v2v_power_dbm,
                    k,
                )
            })
            .collect()
    }

    /// Apply a joint allocation: collect the reward on the current
    /// realization, advance time (fast fading every step, mobility and
    /// large-scale state every `large_scale_update_period` steps), and return
    /// the next observations.
    pub fn step(&mut self, action: &AllocationAction) -> StepOutcome {
        debug_assert_eq!(action.channels.len(), self.scenario.n_v2v);
        let breakdown = reward_breakdown(&self.realization, &self.radio, action);
        self.last_action = action.clone();
        self.step_in_episode += 1;
        if self.step_in_episode % self.scenario.large_scale_update_period == 0 {
            self.update_large_scale();
        }
        self.realization = Self::realize(
            &self.scenario,
            &self.prop,
            &self.large,
            |rng| draw_fast_fading(rng),
            &mut self.rng_channel,
        );
        StepOutcome {
            reward: breakdown.total,
            observations: self.observations(),
            breakdown,
        }
    }

    /// Redraw the realization with an injected fading source; diagnostics and
    /// tests use this to freeze fading.
    pub fn realize_with_fading<F: FnMut(&mut ChaCha8Rng) -> f64>(&mut self, fading: F) {
        self.realization = Self::realize(
            &self.scenario,
            &self.prop,
            &self.large,
            fading,
            &mut self.rng_channel,
        );
    }

    fn fresh_large_scale(
        scenario: &ScenarioConfig,
        prop: &PropagationConfig,
        grid: &RoadGrid,
        topo: &Topology,
        rng: &mut ChaCha8Rng,
    ) -> LargeScale {
        let bs = (grid.width_m() / 2.0, grid.height_m() / 2.0);
        let _ = scenario;
        let v2i_link = |pose: &VehiclePose, rng: &mut ChaCha8Rng| LinkState {
            pathloss_db: v2i_pathloss_from(prop, pose, bs),
            shadow: ShadowingState::init(prop.v2i_shadow_std_db, prop.v2i_decorrelation_m, rng),
        };
        let v2v_link = |a: &VehiclePose, b: &VehiclePose, rng: &mut ChaCha8Rng| LinkState {
            pathloss_db: v2v_pathloss_from(prop, a, b),
            shadow: ShadowingState::init(prop.v2v_shadow_std_db, prop.v2v_decorrelation_m, rng),
        };
        let g = topo.cu.iter().map(|v| v2i_link(&v.pose, rng)).collect();
        let h = topo
            .tx
            .iter()
            .zip(topo.rx.iter())
            .map(|(t, r)| v2v_link(&t.pose, &r.pose, rng))
            .collect();
        let hb = topo.tx.iter().map(|v| v2i_link(&v.pose, rng)).collect();
        let mut hx = Vec::with_capacity(topo.tx.len() * topo.rx.len());
        for l in 0..topo.tx.len() {
            for k in 0..topo.rx.len() {
                if l == k {
                    // diagonal placeholder, never read
                    hx.push(LinkState {
                        pathloss_db: f64::INFINITY,
                        shadow: ShadowingState {
                            value_db: 0.0,
                            decorrelation_m: prop.v2v_decorrelation_m,
                            std_dev_db: prop.v2v_shadow_std_db,
                        },
                    });
                } else {
                    hx.push(v2v_link(&topo.tx[l].pose, &topo.rx[k].pose, rng));
                }
            }
        }
        let mut gx = Vec::with_capacity(topo.cu.len() * topo.rx.len());
        for n in 0..topo.cu.len() {
            for k in 0..topo.rx.len() {
                gx.push(v2v_link(&topo.cu[n].pose, &topo.rx[k].pose, rng));
            }
        }
        LargeScale { g, h, hb, hx, gx }
    }

    fn update_large_scale(&mut self) {
        let dt_s = self.scenario.large_scale_update_period as f64 * 1e-3;
        let old_cu: Vec<VehiclePose> = self.topology.cu.iter().map(|v| v.pose).collect();
        let old_tx: Vec<VehiclePose> = self.topology.tx.iter().map(|v| v.pose).collect();
        let old_rx: Vec<VehiclePose> = self.topology.rx.iter().map(|v| v.pose).collect();
        for v in self
            .topology
            .cu
            .iter_mut()
            .chain(self.topology.tx.iter_mut())
            .chain(self.topology.rx.iter_mut())
        {
            self.grid
                .advance(&mut v.pose, v.speed_mps * dt_s, &mut self.rng_motion);
        }
        let moved = |old: &VehiclePose, now: &VehiclePose| {
            ((old.x - now.x).powi(2) + (old.y - now.y).powi(2)).sqrt()
        };
        let d_cu: Vec<f64> = old_cu
            .iter()
            .zip(self.topology.cu.iter())
            .map(|(o, v)| moved(o, &v.pose))
            .collect();
        let d_tx: Vec<f64> = old_tx
            .iter()
            .zip(self.topology.tx.iter())
            .map(|(o, v)| moved(o, &v.pose))
            .collect();
        let d_rx: Vec<f64> = old_rx
            .iter()
            .zip(self.topology.rx.iter())
            .map(|(o, v)| moved(o, &v.pose))
            .collect();

        let bs = self.bs_position();
        let prop = self.prop.clone();
        let (n, k) = (self.scenario.n_v2i, self.scenario.n_v2v);
        // Displacement driving a link's shadowing update is the sum of its
        // endpoint displacements (the BS does not move).
        for i in 0..n {
            let ls = &mut self.large.g[i];
            ls.pathloss_db = v2i_pathloss_from(&prop, &self.topology.cu[i].pose, bs);
            ls.shadow.update(d_cu[i], &mut self.rng_channel);
        }
        for i in 0..k {
            let ls = &mut self.large.h[i];
            ls.pathloss_db =
                v2v_pathloss_from(&prop, &self.topology.tx[i].pose, &self.topology.rx[i].pose);
            ls.shadow.update(d_tx[i] + d_rx[i], &mut self.rng_channel);
        }
        for i in 0..k {
            let ls = &mut self.large.hb[i];
            ls.pathloss_db = v2i_pathloss_from(&prop, &self.topology.tx[i].pose, bs);
            ls.shadow.update(d_tx[i], &mut self.rng_channel);
        }
        for l in 0..k {
            for kk in 0..k {
                if l == kk {
                    continue;
                }
                let ls = &mut self.large.hx[l * k + kk];
                ls.pathloss_db = v2v_pathloss_from(
                    &prop,
                    &self.topology.tx[l].pose,
                    &self.topology.rx[kk].pose,
                );
                ls.shadow.update(d_tx[l] + d_rx[kk], &mut self.rng_channel);
            }
        }
        for nn in 0..n {
            for kk in 0..k {
                let ls = &mut self.large.gx[nn * k + kk];
                ls.pathloss_db = v2v_pathloss_from(
                    &prop,
                    &self.topology.cu[nn].pose,
                    &self.topology.rx[kk].pose,
                );
                ls.shadow.update(d_cu[nn] + d_rx[kk], &mut self.rng_channel);
            }
        }
    }

    /// Combine large-scale state with fresh fading draws into gain tensors.
    /// Draw order is fixed (g, h, h_b, h_cross, g_cross; channel-major within
    /// each link) and is part of the reproducibility contract.
    fn realize<F: FnMut(&mut ChaCha8Rng) -> f64>(
        scenario: &ScenarioConfig,
        prop: &PropagationConfig,
        large: &LargeScale,
        mut fading: F,
        rng: &mut ChaCha8Rng,
    ) -> ChannelRealization {
        let n = scenario.n_v2i;
        let k = scenario.n_v2v;
        let g_v2i = prop.v2i_antenna_gain_db();
        let g_v2v = prop.v2v_antenna_gain_db();
        let combine = |ls: &LinkState, gain_db: f64, fad: f64| {
            if ls.pathloss_db.is_infinite() {
                0.0
            } else {
                combine_link_gain(ls.pathloss_db, ls.shadow.value_db, fad, gain_db)
            }
        };
        let g = (0..n)
            .map(|i| combine(&large.g[i], g_v2i, fading(rng)))
            .collect();
        let mut h = Array2::zeros((k, n));
        for kk in 0..k {
            for nn in 0..n {
                h[(kk, nn)] = combine(&large.h[kk], g_v2v, fading(rng));
            }
        }
        let mut h_b = Array2::zeros((k, n));
        for kk in 0..k {
            for nn in 0..n {
                h_b[(kk, nn)] = combine(&large.hb[kk], g_v2i, fading(rng));
            }
        }
        let mut h_cross = Array3::zeros((k, k, n));
        for l in 0..k {
            for kk in 0..k {
                if l == kk {
                    continue;
                }
                for nn in 0..n {
                    h_cross[(l, kk, nn)] = combine(&large.hx[l * k + kk], g_v2v, fading(rng));
                }
            }
        }
        let mut g_cross = Array2::zeros((n, k));
        for nn in 0..n {
            for kk in 0..k {
                g_cross[(nn, kk)] = combine(&large.gx[nn * k + kk], g_v2v, fading(rng));
            }
        }
        ChannelRealization {
            g,
            h,
            h_b,
            h_cross,
            g_cross,
        }
    }
}

fn v2i_pathloss_from(prop: &PropagationConfig, pose: &VehiclePose, bs: (f64, f64)) -> f64 {
    let dx = pose.x - bs.0;
    let dy = pose.y - bs.1;
    let dh = prop.bs_height_m - prop.vehicle_height_m;
    let d3d_m = (dx * dx + dy * dy + dh * dh).sqrt();
    pathloss_v2i_db(d3d_m / 1000.0).expect("3D distance includes the height difference")
}

fn v2v_pathloss_from(prop: &PropagationConfig, a: &VehiclePose, b: &VehiclePose) -> f64 {
    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    // the 3 m floor inside the model covers co-located vehicles
    pathloss_v2v_db(prop, d.max(1e-3)).expect("positive distance")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn small_realization() -> (ChannelRealization, RadioParams) {
        // K = 2, N = 2 hand fixture
        let re = ChannelRealization {
            g: vec![2e-9, 3e-9],
            h: ndarray::array![[4e-7, 5e-7], [6e-7, 7e-7]],
            h_b: ndarray::array![[1e-10, 2e-10], [3e-10, 4e-10]],
            h_cross: ndarray::Array3::from_shape_fn((2, 2, 2), |(l, k, n)| {
                if l == k {
                    0.0
                } else {
                    ((l + 1) * (k + 1) * (n + 1)) as f64 * 1e-9
                }
            }),
            g_cross: ndarray::array![[1e-11, 2e-11], [3e-11, 4e-11]],
        };
        let radio = RadioParams {
            p_c_mw: 199.52623149688787,
            p_d_mw: 10.0,
            noise_bs_mw: dbm_to_mw(-109.0),
            noise_vehicle_mw: dbm_to_mw(-105.0),
            bandwidth: 1.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
        };
        (re, radio)
    }

    #[test]
    fn v2i_sinr_reference_arithmetic() {
        let radio = RadioParams {
            p_c_mw: 1.0,
            p_d_mw: 1.0,
            noise_bs_mw: 1.0,
            noise_vehicle_mw: 1.0,
            bandwidth: 1.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
        };
        // single CU, single V2V
        let mut re = ChannelRealization {
            g: vec![1.0],
            h: ndarray::array![[1.0]],
            h_b: ndarray::array![[1.0]],
            h_cross: ndarray::Array3::zeros((1, 1, 1)),
            g_cross: ndarray::array![[0.0]],
        };
        // no V2V on the channel: P_c·g = σ² gives SINR 1. Emulate by pointing
        // the V2V elsewhere — impossible with N = 1, so zero out its gain.
        re.h_b[(0, 0)] = 0.0;
        let a = AllocationAction::new(vec![0]);
        assert_relative_eq!(v2i_sinr(&re, &radio, &a, 0), 1.0);
        // one co-channel V2V with P_d·h_b = σ²: SINR halves
        re.h_b[(0, 0)] = 1.0;
        assert_relative_eq!(v2i_sinr(&re, &radio, &a, 0), 0.5);
    }

    #[test]
    fn v2i_sinr_decreases_when_v2v_joins_channel() {
        let (re, radio) = small_realization();
        let alone = v2i_sinr(&re, &radio, &AllocationAction::new(vec![1, 1]), 0);
        let one = v2i_sinr(&re, &radio, &AllocationAction::new(vec![0, 1]), 0);
        let two = v2i_sinr(&re, &radio, &AllocationAction::new(vec![0, 0]), 0);
        assert!(alone > one && one > two);
    }

    #[test]
    fn v2v_sinr_unit_when_signal_equals_noise() {
        let radio = RadioParams {
            p_c_mw: 1.0,
            p_d_mw: 2.0,
            noise_bs_mw: 1.0,
            noise_vehicle_mw: 4.0,
            bandwidth: 1.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
        };
        let re = ChannelRealization {
            g: vec![1.0],
            h: ndarray::array![[2.0]],
            h_b: ndarray::array![[0.0]],
            h_cross: ndarray::Array3::zeros((1, 1, 1)),
            g_cross: ndarray::array![[0.0]], // CU forced absent
        };
        let a = AllocationAction::new(vec![0]);
        assert_relative_eq!(v2v_sinr(&re, &radio, &a, 0), 1.0);
    }

    #[test]
    fn v2v_sinr_symmetric_links_match() {
        let radio = RadioParams {
            p_c_mw: 5.0,
            p_d_mw: 3.0,
            noise_bs_mw: 1.0,
            noise_vehicle_mw: 2.0,
            bandwidth: 1.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
        };
        let re = ChannelRealization {
            g: vec![1.0, 1.0],
            h: ndarray::array![[7.0, 1.0], [7.0, 1.0]],
            h_b: ndarray::Array2::zeros((2, 2)),
            h_cross: ndarray::Array3::from_shape_fn(
                (2, 2, 2),
                |(l, k, _)| if l == k { 0.0 } else { 0.3 },
            ),
            g_cross: ndarray::array![[0.02, 0.02], [0.05, 0.05]],
        };
        let a = AllocationAction::new(vec![0, 0]);
        assert_relative_eq!(
            v2v_sinr(&re, &radio, &a, 0),
            v2v_sinr(&re, &radio, &a, 1)
        );
    }

    #[test]
    fn v2v_sinr_matches_hand_evaluation() {
        let (re, radio) = small_realization();
        let a = AllocationAction::new(vec![1, 1]); // both on channel 1
        // k = 0: signal P_d·h[0][1]; interference from l = 1 plus CU 1
        let signal = radio.p_d_mw * 5e-7;
        let interference = radio.p_d_mw * ((2usize * 1 * 2) as f64 * 1e-9)
            + radio.p_c_mw * re.g_cross[(1, 0)];
        let expected = signal / (interference + radio.noise_vehicle_mw);
        assert_relative_eq!(v2v_sinr(&re, &radio, &a, 0), expected, max_relative = 1e-12);
    }

    #[test]
    fn capacity_reference_points() {
        assert_relative_eq!(capacity(1.0, 1.0), 1.0);
        assert_relative_eq!(capacity(0.0, 1.0), 0.0);
        assert_relative_eq!(capacity(3.0, 1.0), 2.0);
    }

    #[test]
    fn reward_weights_scale_linearly() {
        let (re, mut radio) = small_realization();
        let a = AllocationAction::new(vec![0, 1]);
        radio.lambda_c = 0.0;
        radio.lambda_d = 1.0;
        let b = reward_breakdown(&re, &radio, &a);
        assert_relative_eq!(b.total, b.v2v_sum());
        radio.lambda_d = 2.0;
        let b2 = reward_breakdown(&re, &radio, &a);
        assert_relative_eq!(b2.total, 2.0 * b.total);
        radio.lambda_c = 0.1;
        radio.lambda_d = 1.0;
        let b3 = reward_breakdown(&re, &radio, &a);
        assert_relative_eq!(b3.total, 0.1 * b3.v2i_sum() + b3.v2v_sum());
    }

    #[test]
    fn observation_layout_and_zero_interference() {
        let (re, radio) = small_realization();
        let last = AllocationAction::new(vec![0, 1]);
        let obs = assemble_observation(&re, &radio, &last, 10.0, 0);
        assert_eq!(obs.len(), Observation::dim(2));
        assert_eq!(obs.raw().len(), 7);

        // CU gain forced to zero and no co-channel interferer: I_k = 0
        let mut re2 = re.clone();
        re2.g_cross.fill(0.0);
        let alone = AllocationAction::new(vec![0, 0]);
        let obs2 = assemble_observation(&re2, &radio, &alone, 10.0, 0);
        assert_eq!(obs2.interference_mw[1], 0.0); // channel 1 is empty
        let normed = obs2.normalized(&ObsNorm::default());
        assert!(normed.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_geometry_gives_identical_observations() {
        let radio = RadioParams {
            p_c_mw: 2.0,
            p_d_mw: 1.0,
            noise_bs_mw: 1.0,
            noise_vehicle_mw: 1.0,
            bandwidth: 1.0,
            lambda_c: 0.1,
            lambda_d: 1.0,
        };
        let re = ChannelRealization {
            g: vec![1.0, 2.0],
            h: ndarray::array![[3.0, 4.0], [3.0, 4.0]],
            h_b: ndarray::array![[5.0, 6.0], [5.0, 6.0]],
            h_cross: ndarray::Array3::zeros((2, 2, 2)),
            g_cross: ndarray::array![[0.7, 0.7], [0.8, 0.8]],
        };
        let last = AllocationAction::new(vec![0, 1]);
        let o0 = assemble_observation(&re, &radio, &last, 10.0, 0);
        let o1 = assemble_observation(&re, &radio, &last, 10.0, 1);
        // cross interference is zero and geometry identical, so the two
        // observations coincide apart from the co-channel structure, which is
        // also symmetric here
        assert_eq!(o0.own_gains, o1.own_gains);
        assert_eq!(o0.bs_gains, o1.bs_gains);
        assert_eq!(o0.interference_mw, o1.interference_mw);
    }

    #[test]
    fn default_scenario_matches_published_parameters() {
        let s = ScenarioConfig::default();
        assert_eq!(s.n_v2i, 4);
        assert_eq!(s.n_v2v, 4);
        assert_eq!((s.area_width_m, s.area_height_m), (1299.0, 750.0));
        assert_eq!((s.speed_min_kmh, s.speed_max_kmh), (10.0, 15.0));
        assert_eq!(s.v2i_power_dbm, 23.0);
        assert_eq!(s.v2v_power_dbm, 10.0);
        assert_eq!((s.lambda_c, s.lambda_d), (0.1, 1.0));
        assert_eq!(s.steps_per_episode, 1000);
        s.validate().unwrap();
        let codec = ActionCodec::new(s.n_v2i, s.n_v2v);
        assert_eq!(codec.count(), 256);
    }

    #[test]
    fn drop_counts_and_containment() {
        let grid = RoadGrid::new(1299.0, 750.0, 3, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        // K = 1, N = 0 degenerate drop
        let t = drop_vehicles(&grid, 0, 1, 150.0, (10.0, 15.0), &mut rng).unwrap();
        assert_eq!(t.cu.len(), 0);
        assert_eq!(t.tx.len(), 1);
        assert_eq!(t.rx.len(), 1);

        let t = drop_vehicles(&grid, 4, 4, 150.0, (10.0, 15.0), &mut rng).unwrap();
        assert_eq!(t.cu.len() + t.tx.len() + t.rx.len(), 12);
        for v in t.cu.iter().chain(t.tx.iter()).chain(t.rx.iter()) {
            assert!(v.pose.x >= 0.0 && v.pose.x <= 1299.0);
            assert!(v.pose.y >= 0.0 && v.pose.y <= 750.0);
            assert!(v.speed_mps >= 10.0 / 3.6 && v.speed_mps <= 15.0 / 3.6);
        }
        for k in 0..4 {
            assert!(euclid(&t.tx[k].pose, &t.rx[k].pose) <= 150.0);
        }
    }

    #[test]
    fn infeasible_pairing_errors_out() {
        let grid = RoadGrid::new(1299.0, 750.0, 3, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(32);
        let r = drop_vehicles(&grid, 0, 1, 1e-6, (10.0, 15.0), &mut rng);
        assert!(matches!(r, Err(EnvError::DropInfeasible { .. })));
    }

    #[test]
    fn env_gains_positive_finite_and_flat_without_fading() {
        let mut env = V2xEnv::new(ScenarioConfig::default(), PropagationConfig::default(), 7)
            .unwrap();
        let re = env.realization();
        assert!(re.g.iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(re.h.iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(re.h_b.iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(re.g_cross.iter().all(|&v| v > 0.0 && v.is_finite()));

        // frequency-flat: with fading pinned to 1 the own gain is identical
        // across channels
        env.realize_with_fading(|_| 1.0);
        let re = env.realization();
        for k in 0..4 {
            for n in 1..4 {
                assert_eq!(re.h[(k, 0)], re.h[(k, n)]);
            }
        }
    }

    #[test]
    fn moving_apart_decreases_gain() {
        // same shadowing and fading, growing distance
        let prop = PropagationConfig::default();
        let g_near = {
            let pl = pathloss_v2v_db(&prop, 20.0).unwrap();
            combine_link_gain(pl, 1.5, 1.0, prop.v2v_antenna_gain_db())
        };
        let g_far = {
            let pl = pathloss_v2v_db(&prop, 120.0).unwrap();
            combine_link_gain(pl, 1.5, 1.0, prop.v2v_antenna_gain_db())
        };
        assert!(g_near > g_far);
    }

    #[test]
    fn step_is_deterministic_under_equal_seeds() {
        let run = |seed: u64| -> Vec<f64> {
            let mut env =
                V2xEnv::new(ScenarioConfig::default(), PropagationConfig::default(), seed)
                    .unwrap();
            let codec = env.codec();
            let mut rewards = Vec::new();
            for t in 0..250 {
                let action = codec.decode(t % codec.count());
                rewards.push(env.step(&action).reward);
            }
            rewards
        };
        let a = run(99);
        let b = run(99);
        let c = run(100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn reward_recomputation_is_stable() {
        let env =
            V2xEnv::new(ScenarioConfig::default(), PropagationConfig::default(), 11).unwrap();
        let action = env.codec().decode(137);
        let r1 = reward(env.realization(), env.radio(), &action);
        let r2 = reward(env.realization(), env.radio(), &action);
        assert_eq!(r1, r2);
    }

    #[test]
    fn v2i_sinr_ignores_other_channels_allocation() {
        let (re, radio) = small_realization();
        // channel 0 free of V2Vs in both actions; channel 1 allocation differs
        let a = AllocationAction::new(vec![1, 1]);
        let b = AllocationAction::new(vec![1, 1]);
        let mut c = b.clone();
        c.channels[0] = 1;
        assert_eq!(
            v2i_sinr(&re, &radio, &a, 0),
            v2i_sinr(&re, &radio, &c, 0)
        );
    }

    proptest! {
        #[test]
        fn action_encoding_round_trips(idx in 0usize..256) {
            let codec = ActionCodec::new(4, 4);
            let action = codec.decode(idx);
            prop_assert_eq!(codec.encode(&action), idx);
            prop_assert!(action.channels.iter().all(|&c| c < 4));
        }

        #[test]
        fn action_encoding_round_trips_rectangular(n in 1usize..6, k in 1usize..5, salt in 0usize..1000) {
            let codec = ActionCodec::new(n, k);
            let idx = salt % codec.count();
            let action = codec.decode(idx);
            prop_assert_eq!(codec.encode(&action), idx);
        }

        #[test]
        fn observation_length_is_3n_plus_1(n in 1usize..10) {
            let re = ChannelRealization {
                g: vec![1.0; n],
                h: Array2::from_elem((1, n), 1.0),
                h_b: Array2::from_elem((1, n), 1.0),
                h_cross: Array3::zeros((1, 1, n)),
                g_cross: Array2::from_elem((n, 1), 1.0),
            };
            let radio = RadioParams {
                p_c_mw: 1.0, p_d_mw: 1.0, noise_bs_mw: 1.0, noise_vehicle_mw: 1.0,
                bandwidth: 1.0, lambda_c: 0.1, lambda_d: 1.0,
            };
            let last = AllocationAction::new(vec![0]);
            let obs = assemble_observation(&re, &radio, &last, 10.0, 0);
            prop_assert_eq!(obs.raw().len(), 3 * n + 1);
            prop_assert_eq!(obs.normalized(&ObsNorm::default()).len(), 3 * n + 1);
        }
    }
}
