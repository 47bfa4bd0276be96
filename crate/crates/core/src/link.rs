//! Satellite-to-gateway link model: channel gain, SINR, Shannon rate and
//! model transfer times.
//!
//! Beamforming is reduced to scalar effective gains, so the received power of
//! a link is `|h|² · p_tx`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("transfer over a link with zero rate")]
    ZeroRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Linear gain magnitude.
    pub gain: f64,
    pub doppler_hz: f64,
    pub delay_s: f64,
    pub carrier_hz: f64,
    pub time_s: f64,
}

impl ChannelRealization {
    pub fn coefficient(&self) -> Complex64 {
        channel_at(self.gain, self.doppler_hz, self.delay_s, self.time_s, self.carrier_hz)
    }

    /// Received power for unit-gain beamforming and transmit power `p_tx`.
    pub fn received_power(&self, p_tx_w: f64) -> f64 {
        self.coefficient().norm_sqr() * p_tx_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub sinr: f64,
    pub bandwidth_hz: f64,
    pub rate_bps: f64,
    pub uplink_s: f64,
    pub downlink_s: f64,
    pub distance_km: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Large-scale gain `sqrt(G_s·G_g) · 10^(−PL/10)`.
pub fn channel_gain(sat_gain_dbi: f64, gw_gain_dbi: f64, pathloss_db: f64) -> f64 {
    (db_to_linear(sat_gain_dbi) * db_to_linear(gw_gain_dbi)).sqrt() * 10f64.powf(-pathloss_db / 10.0)
}

/// `gain · exp(j2π(tν − fτ))`.
///
/// Each product is split into its rounded value and exact rounding error
/// (via FMA) and reduced modulo one cycle, so the phase stays accurate when
/// `f·τ` runs to 10⁷ cycles.
pub fn channel_at(gain: f64, doppler_hz: f64, delay_s: f64, t: f64, f: f64) -> Complex64 {
    let cycles = frac_product(t, doppler_hz) - frac_product(f, delay_s);
    Complex64::from_polar(gain, TAU * cycles)
}

fn frac_product(a: f64, b: f64) -> f64 {
    let p = a * b;
    let err = a.mul_add(b, -p);
    let whole = p.floor();
    (p - whole) + err
}

/// `signal / (noise + Σ interference)`.
pub fn sinr(signal_power: f64, interferer_powers: &[f64], noise_power: f64) -> Result<f64, LinkError> {
    if !(noise_power > 0.0) {
        return Err(LinkError::NonPositiveNoise(noise_power));
    }
    let interference: f64 = interferer_powers.iter().sum();
    Ok(signal_power / (noise_power + interference))
}

/// Shannon rate of an associated link; zero for unassociated pairs.
pub fn achievable_rate(associated: bool, bandwidth_hz: f64, sinr: f64) -> f64 {
    if !associated {
        return 0.0;
    }
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Serialization plus propagation delay.
pub fn transfer_time(model_bits: f64, rate_bps: f64, distance_km: f64) -> Result<f64, LinkError> {
    if !(rate_bps > 0.0) {
        return Err(LinkError::ZeroRate);
    }
    Ok(model_bits / rate_bps + propagation_delay(distance_km))
}

pub fn propagation_delay(distance_km: f64) -> f64 {
    distance_km / SPEED_OF_LIGHT_KM_S
}

/// Checks `Σ_g χ·B ≤ B_tot` for every satellite. Each row holds the bandwidth
/// of the links a satellite is associated on.
pub fn bandwidth_check(allocations: &[Vec<f64>], budget_hz: f64) -> bool {
    allocations
        .iter()
        .all(|row| row.iter().sum::<f64>() <= budget_hz)
}
