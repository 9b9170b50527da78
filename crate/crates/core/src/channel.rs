//! Propagation primitives and fading processes for V2I and V2V links.
//!
//! Path loss uses the cellular urban-macro model for links terminating at the
//! base station and a dual-slope WINNER B1 LOS model for vehicle-to-vehicle
//! links. Shadowing follows a Gudmundson exponential-autocorrelation process
//! driven by per-update displacement; fast fading is unit-mean Rayleigh,
//! redrawn independently every step.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation constant used for the B1 breakpoint distance.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// V2V path-loss validity floor; closer vehicles are clamped to this distance.
pub const V2V_DISTANCE_FLOOR_M: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be strictly positive, got {0} ")]
    NonPositiveDistance(f64),
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
}

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// dBm to linear milliwatts.
#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Antenna, noise and propagation parameters for both link classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub carrier_freq_hz: f64,
    pub bs_height_m: f64,
    pub vehicle_height_m: f64,
    pub bs_gain_dbi: f64,
    pub vehicle_gain_dbi: f64,
    pub bs_noise_figure_db: f64,
    pub vehicle_noise_figure_db: f64,
    pub noise_power_dbm: f64,
    pub v2i_shadow_std_db: f64,
    pub v2v_shadow_std_db: f64,
    pub v2i_decorrelation_m: f64,
    pub v2v_decorrelation_m: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 2.0e9,
            bs_height_m: 25.0,
            vehicle_height_m: 1.5,
            bs_gain_dbi: 8.0,
            vehicle_gain_dbi: 3.0,
            bs_noise_figure_db: 5.0,
            vehicle_noise_figure_db: 9.0,
            noise_power_dbm: -114.0,
            v2i_shadow_std_db: 8.0,
            v2v_shadow_std_db: 3.0,
            v2i_decorrelation_m: 50.0,
            v2v_decorrelation_m: 10.0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bs_height_m", self.bs_height_m),
            ("vehicle_height_m", self.vehicle_height_m),
            ("v2i_decorrelation_m", self.v2i_decorrelation_m),
            ("v2v_decorrelation_m", self.v2v_decorrelation_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ChannelError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.v2i_shadow_std_db < 0.0 || self.v2v_shadow_std_db < 0.0 {
            return Err(ChannelError::InvalidConfig(
                "shadowing standard deviations must be nonnegative".into(),
            ));
        }
        if self.vehicle_height_m <= 1.0 {
            return Err(ChannelError::InvalidConfig(
                "vehicle height must exceed 1 m (B1 effective-height offset)".into(),
            ));
        }
        Ok(())
    }

    /// B1 dual-slope breakpoint distance, 4·h'_tx·h'_rx·f_c/c with h' = h − 1 m.
    pub fn v2v_breakpoint_m(&self) -> f64 {
        let h_eff = self.vehicle_height_m - 1.0;
        4.0 * h_eff * h_eff * self.carrier_freq_hz / SPEED_OF_LIGHT
    }

    /// Thermal noise plus BS receive noise figure, linear mW.
    pub fn effective_noise_bs_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm + self.bs_noise_figure_db)
    }

    /// Thermal noise plus vehicle receive noise figure, linear mW.
    pub fn effective_noise_vehicle_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm + self.vehicle_noise_figure_db)
    }

    /// Total antenna gain for a vehicle-to-BS link, dB.
    pub fn v2i_antenna_gain_db(&self) -> f64 {
        self.vehicle_gain_dbi + self.bs_gain_dbi
    }

    /// Total antenna gain for a vehicle-to-vehicle link, dB.
    pub fn v2v_antenna_gain_db(&self) -> f64 {
        2.0 * self.vehicle_gain_dbi
    }
}

/// Urban-macro path loss for links terminating at the BS: 128.1 + 37.6·log10(d),
/// d the 3D distance in km.
pub fn pathloss_v2i_db(distance_3d_km: f64) -> Result<f64, ChannelError> {
    if !(distance_3d_km > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_3d_km));
    }
    Ok(128.1 + 37.6 * distance_3d_km.log10())
}

/// Dual-slope WINNER B1 LOS path loss for vehicle-to-vehicle links.
///
/// Beyond the breakpoint the literal B1 constants apply:
/// 40·log10(d) + 9.45 − 17.3·log10(h'_tx) − 17.3·log10(h'_rx) + 2.7·log10(f_c/5 GHz).
/// Below it the 22.7-slope branch is anchored to the same value at d_BP, which
/// makes the model continuous there by construction (the published constants
/// leave a few-millidB step). Distances under 3 m clamp to the 3 m value.
pub fn pathloss_v2v_db(cfg: &PropagationConfig, distance_m: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    let d = distance_m.max(V2V_DISTANCE_FLOOR_M);
    let h_eff = cfg.vehicle_height_m - 1.0;
    let d_bp = cfg.v2v_breakpoint_m();
    let freq_term = cfg.carrier_freq_hz / 5.0e9;
    let beyond = |d: f64| {
        40.0 * d.log10() + 9.45 - 34.6 * h_eff.log10() + 2.7 * freq_term.log10()
    };
    if d >= d_bp {
        Ok(beyond(d))
    } else {
        Ok(beyond(d_bp) + 22.7 * (d / d_bp).log10())
    }
}

/// One link's log-normal shadowing process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowingState {
    pub value_db: f64,
    pub decorrelation_m: f64,
    pub std_dev_db: f64,
}

impl ShadowingState {
    /// Fresh zero-mean draw with the configured standard deviation.
    pub fn init<R: Rng>(std_dev_db: f64, decorrelation_m: f64, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Self {
            value_db: std_dev_db * z,
            decorrelation_m,
            std_dev_db,
        }
    }

    /// Gudmundson update after moving `delta_m`:
    /// S' = ρ·S + √(1−ρ²)·X with ρ = exp(−Δd/d_corr), X ~ N(0, σ²).
    ///
    /// Preserves the stationary N(0, σ²) marginal for any Δd.
    pub fn update<R: Rng>(&mut self, delta_m: f64, rng: &mut R) {
        assert!(delta_m >= 0.0, "displacement must be nonnegative");
        let rho = (-delta_m / self.decorrelation_m).exp();
        let z: f64 = StandardNormal.sample(rng);
        self.value_db = rho * self.value_db + (1.0 - rho * rho).sqrt() * self.std_dev_db * z;
    }
}

/// One Rayleigh fast-fading power draw, |h|² with E|h|² = 1 (exponential(1)).
#[inline]
pub fn draw_fast_fading<R: Rng>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Link budget for a single link on a single channel.
///
/// Invariant: `combined_power_gain` equals
/// 10^((−pathloss − shadowing + antenna_gain_total)/10) × fast_fading_power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGain {
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub fast_fading_power: f64,
    pub antenna_gain_total_db: f64,
    pub combined_power_gain: f64,
}

impl LinkGain {
    pub fn new(
        pathloss_db: f64,
        shadowing_db: f64,
        fast_fading_power: f64,
        antenna_gain_total_db: f64,
    ) -> Self {
        let combined = combine_link_gain(
            pathloss_db,
            shadowing_db,
            fast_fading_power,
            antenna_gain_total_db,
        );
        Self {
            pathloss_db,
            shadowing_db,
            fast_fading_power,
            antenna_gain_total_db,
            combined_power_gain: combined,
        }
    }
}

/// Assemble a linear power gain from dB-domain losses/gains and linear fading.
///
/// Receiver noise figures are *not* folded in here; they enter the SINR
/// denominator as an effective noise increase, keeping gains device-independent.
#[inline]
pub fn combine_link_gain(
    pathloss_db: f64,
    shadowing_db: f64,
    fast_fading_power: f64,
    antenna_gain_total_db: f64,
) -> f64 {
    debug_assert!(fast_fading_power >= 0.0);
    db_to_lin(-pathloss_db - shadowing_db + antenna_gain_total_db) * fast_fading_power
}
