//! Constellation geometry.
//!
//! Satellites fly circular tracks at a fixed altitude above the z = 0 ground
//! plane. Gateway coverage is a closed disk on the ground plane, and a
//! satellite is covered when its ground projection falls inside the disk.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitalError {
    #[error("satellite {sat} is not inside the coverage of gateway {gateway}")]
    NotInCoverage { sat: u32, gateway: u32 },
}

/// A point in kilometers. Gateways sit on the z = 0 plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar_distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        let dz = self.z - other.z;
        (self.planar_distance(other).powi(2) + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A circular track around a ground-plane center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrack {
    pub center: GroundPoint,
    pub radius_km: f64,
    pub altitude_km: f64,
    /// Radians per second; equals linear speed / radius.
    pub angular_speed: f64,
}

impl OrbitTrack {
    /// Builds a track from a linear speed in km/s.
    pub fn from_speed(center: GroundPoint, radius_km: f64, altitude_km: f64, speed_km_s: f64) -> Self {
        Self {
            center,
            radius_km,
            altitude_km,
            angular_speed: speed_km_s / radius_km,
        }
    }

    pub fn speed_km_s(&self) -> f64 {
        self.angular_speed * self.radius_km
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.angular_speed
    }

    pub fn is_valid(&self) -> bool {
        self.center.is_finite()
            && self.radius_km > 0.0
            && self.altitude_km >= 0.0
            && self.angular_speed > 0.0
            && self.angular_speed.is_finite()
    }
}

/// Travel sense along the track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Prograde,
    Retrograde,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Prograde => 1.0,
            Direction::Retrograde => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub id: u32,
    pub track: OrbitTrack,
    /// Radians in [0, 2π).
    pub phase: f64,
    pub direction: Direction,
    /// Number of local training samples.
    pub data_count: usize,
    pub energy_budget_j: f64,
    pub max_freq_hz: f64,
    /// Chip-architecture energy coefficient.
    pub chip_const: f64,
}

impl SatelliteState {
    /// The same satellite after `dt` seconds of flight.
    pub fn advanced(&self, dt: f64) -> Self {
        let mut next = self.clone();
        next.phase = phase_after(self, dt);
        next
    }

    pub fn position(&self) -> GroundPoint {
        position_at(self, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub id: u32,
    pub position: GroundPoint,
    pub coverage_radius_km: f64,
    pub n_antennas_x: u32,
    pub n_antennas_y: u32,
    pub n_beams: u32,
    pub noise_power_w: f64,
    pub antenna_gain_dbi: f64,
}

impl GatewayConfig {
    /// Total UPA elements.
    pub fn n_antennas(&self) -> u32 {
        self.n_antennas_x * self.n_antennas_y
    }
}

fn phase_after(sat: &SatelliteState, t: f64) -> f64 {
    (sat.phase + sat.direction.sign() * sat.track.angular_speed * t).rem_euclid(TAU)
}

/// Position of `sat` after `t` seconds.
pub fn position_at(sat: &SatelliteState, t: f64) -> GroundPoint {
    let phase = phase_after(sat, t);
    let c = sat.track.center;
    GroundPoint {
        x: c.x + sat.track.radius_km * phase.cos(),
        y: c.y + sat.track.radius_km * phase.sin(),
        z: c.z + sat.track.altitude_km,
    }
}

/// Closed-disk membership of the ground projection.
pub fn in_coverage(sat_pos: &GroundPoint, gw: &GatewayConfig) -> bool {
    sat_pos.planar_distance(&gw.position) <= gw.coverage_radius_km
}

/// Seconds until `sat` leaves the coverage disk of `gw`, travelling along its
/// track. A track that never leaves the disk yields one orbital period.
pub fn window_time(sat: &SatelliteState, gw: &GatewayConfig) -> Result<f64, OrbitalError> {
    if !in_coverage(&sat.position(), gw) {
        return Err(OrbitalError::NotInCoverage {
            sat: sat.id,
            gateway: gw.id,
        });
    }
    let track = &sat.track;
    let period = track.period_s();
    let dx = track.center.x - gw.position.x;
    let dy = track.center.y - gw.position.y;
    let d = dx.hypot(dy);
    let r = track.radius_km;
    let big_r = gw.coverage_radius_km;
    if d == 0.0 {
        // Concentric: the planar distance is r everywhere on the track.
        return Ok(period);
    }
    // |c + r·u(θ) − g|² = r² + d² + 2rd·cos(θ − α), α = atan2(c − g).
    // Inside iff cos(θ − α) ≤ k.
    let k = (big_r * big_r - r * r - d * d) / (2.0 * r * d);
    if k >= 1.0 {
        return Ok(period);
    }
    let alpha = dy.atan2(dx);
    let entry = k.max(-1.0).acos();
    let x = (sat.phase - alpha).rem_euclid(TAU);
    // The covered arc is x ∈ [entry, 2π − entry]; clamp for rounding at the rim.
    let x = x.clamp(entry, TAU - entry);
    let remaining = match sat.direction {
        Direction::Prograde => TAU - entry - x,
        Direction::Retrograde => x - entry,
    };
    Ok((remaining.max(0.0) / track.angular_speed).min(period))
}

/// Evenly spaced initial phases for `n` satellites sharing a track.
pub fn even_phases(n: usize, offset: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (offset + TAU * i as f64 / n as f64).rem_euclid(TAU))
        .collect()
}

/// Converts km/h to km/s.
pub fn kmh_to_kms(v: f64) -> f64 {
    v / 3600.0
}
