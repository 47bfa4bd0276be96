//! Scenario files: constellation, gateways, radio and compute constants, data
//! split, model, and training schedule. Field names carry their units.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::aggregation::AggregatorConfig;
use crate::association::{AssociationMode, LinkParams};
use crate::learner::{AutoencoderSpec, TrainConfig};
use crate::orbital::{even_phases, kmh_to_kms, Direction, GatewayConfig, GroundPoint, OrbitTrack, SatelliteState};

/// Satellites sharing one circular track, evenly spaced in phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub center_x_km: f64,
    pub center_y_km: f64,
    pub radius_km: f64,
    pub altitude_km: f64,
    pub speed_km_h: f64,
    pub n_satellites: usize,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub phase_offset_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewaySpec {
    pub id: u32,
    pub x_km: f64,
    pub y_km: f64,
    pub coverage_radius_km: f64,
    pub antenna_gain_dbi: f64,
    pub noise_power_w: f64,
    #[serde(default = "default_antennas")]
    pub n_antennas_x: u32,
    #[serde(default = "default_antennas")]
    pub n_antennas_y: u32,
    #[serde(default = "default_beams")]
    pub n_beams: u32,
}

fn default_antennas() -> u32 {
    8
}

fn default_beams() -> u32 {
    16
}

impl GatewaySpec {
    pub fn to_config(&self) -> GatewayConfig {
        GatewayConfig {
            id: self.id,
            position: GroundPoint::new(self.x_km, self.y_km, 0.0),
            coverage_radius_km: self.coverage_radius_km,
            n_antennas_x: self.n_antennas_x,
            n_antennas_y: self.n_antennas_y,
            n_beams: self.n_beams,
            noise_power_w: self.noise_power_w,
            antenna_gain_dbi: self.antenna_gain_dbi,
        }
    }
}

/// On-board computer, identical across satellites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub max_freq_hz: f64,
    pub cycles_per_sample: f64,
    pub chip_const: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    /// Training samples split across satellites.
    pub total_samples: usize,
    /// Held-out evaluation samples.
    pub holdout_samples: usize,
    pub dirichlet_lambda: f64,
    pub tile_width_px: usize,
    /// Directory of grayscale images; the synthetic generator is used when
    /// absent.
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub tracks: Vec<TrackSpec>,
    pub gateways: Vec<GatewaySpec>,
    pub link: LinkParams,
    pub compute: ComputeSpec,
    pub energy_mean_j: f64,
    pub energy_std_j: f64,
    /// Truncation point of the energy distribution.
    pub energy_floor_j: f64,
    pub data: DataSpec,
    pub model: AutoencoderSpec,
    /// The seed field is replaced per satellite and round.
    pub train: TrainConfig,
    pub aggregator: AggregatorConfig,
    pub association_mode: AssociationMode,
    pub global_rounds: usize,
    pub subregion_rounds: usize,
    /// Clock advance when no satellite trains in a sub-region round.
    pub idle_step_s: f64,
    pub eval_snrs_db: Vec<f64>,
}

impl Scenario {
    /// Three gateways, three tracks and ten satellites as in the reference
    /// simulation setup.
    pub fn reference() -> Self {
        let center = (1500.0, 2000.0 / 3.0);
        let tracks = [(1200.0, 4), (1700.0, 3), (2200.0, 3)]
            .into_iter()
            .map(|(radius_km, n_satellites)| TrackSpec {
                center_x_km: center.0,
                center_y_km: center.1,
                radius_km,
                altitude_km: 500.0,
                speed_km_h: 28_000.0,
                n_satellites,
                direction: Direction::Prograde,
                phase_offset_rad: 0.0,
            })
            .collect();
        let gateways = [(0.0, 0.0), (3000.0, 0.0), (1500.0, 2000.0)]
            .into_iter()
            .enumerate()
            .map(|(i, (x_km, y_km))| GatewaySpec {
                id: i as u32,
                x_km,
                y_km,
                coverage_radius_km: 2200.0,
                antenna_gain_dbi: 45.0,
                // kTB at 290 K over 1 GHz
                noise_power_w: 1.380_649e-23 * 290.0 * 1e9,
                n_antennas_x: 8,
                n_antennas_y: 8,
                n_beams: 16,
            })
            .collect();
        Scenario {
            name: "reference".into(),
            seed: 0,
            tracks,
            gateways,
            link: LinkParams {
                sat_gain_dbi: 25.0,
                pathloss_db: 1.5,
                bandwidth_hz: 1e9,
                carrier_hz: 10e9,
                doppler_hz: 20e3,
                tx_power_w: 1.0,
            },
            compute: ComputeSpec {
                max_freq_hz: 1e9,
                cycles_per_sample: 1e8,
                chip_const: 5e-24,
            },
            energy_mean_j: 100e3,
            energy_std_j: 20e3,
            energy_floor_j: 1e3,
            data: DataSpec {
                total_samples: 2000,
                holdout_samples: 200,
                dirichlet_lambda: 0.1,
                tile_width_px: 8,
                corpus_dir: None,
            },
            model: AutoencoderSpec::default(),
            train: TrainConfig::default(),
            aggregator: AggregatorConfig::default(),
            association_mode: AssociationMode::Proposed,
            global_rounds: 60,
            subregion_rounds: 1,
            idle_step_s: 60.0,
            eval_snrs_db: vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0],
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn n_satellites(&self) -> usize {
        self.tracks.iter().map(|t| t.n_satellites).sum()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Scenario(m));
        if self.global_rounds < 1 {
            return bad("global_rounds must be at least 1".into());
        }
        if self.subregion_rounds < 1 {
            return bad("subregion_rounds must be at least 1".into());
        }
        if !(self.energy_std_j >= 0.0) {
            return bad(format!("energy_std_j {} is negative", self.energy_std_j));
        }
        if !(self.energy_floor_j > 0.0) {
            return bad("energy_floor_j must be positive".into());
        }
        if self.gateways.is_empty() {
            return bad("no gateways".into());
        }
        if self.n_satellites() == 0 {
            return bad("no satellites".into());
        }
        let mut ids: Vec<u32> = self.gateways.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.gateways.len() {
            return bad("gateway ids must be unique".into());
        }
        if !(self.data.dirichlet_lambda > 0.0) {
            return bad("dirichlet_lambda must be positive".into());
        }
        if self.data.total_samples == 0 || self.data.holdout_samples == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.idle_step_s > 0.0) {
            return bad("idle_step_s must be positive".into());
        }
        if !self.aggregator.is_valid() {
            return bad(format!("aggregator {:?}", self.aggregator));
        }
        if self.model.input_dim != self.data.tile_width_px * self.data.tile_width_px {
            return bad(format!(
                "model input {} does not match {}px tiles",
                self.model.input_dim, self.data.tile_width_px
            ));
        }
        self.model.validate().map_err(|e| HarnessError::Scenario(e.to_string()))?;
        self.train.validate().map_err(|e| HarnessError::Scenario(e.to_string()))?;
        for t in &self.tracks {
            let track = self.track(t);
            if !track.is_valid() {
                return bad(format!("invalid track {t:?}"));
            }
        }
        Ok(())
    }

    fn track(&self, t: &TrackSpec) -> OrbitTrack {
        OrbitTrack::from_speed(
            GroundPoint::new(t.center_x_km, t.center_y_km, 0.0),
            t.radius_km,
            t.altitude_km,
            kmh_to_kms(t.speed_km_h),
        )
    }

    pub fn gateway_configs(&self) -> Vec<GatewayConfig> {
        self.gateways.iter().map(GatewaySpec::to_config).collect()
    }

    /// Satellites at time zero with ids assigned track by track. Data counts
    /// and energy budgets are filled in by the caller.
    pub fn initial_satellites(&self) -> Vec<SatelliteState> {
        let mut out = Vec::with_capacity(self.n_satellites());
        for t in &self.tracks {
            let track = self.track(t);
            for phase in even_phases(t.n_satellites, t.phase_offset_rad) {
                out.push(SatelliteState {
                    id: out.len() as u32,
                    track,
                    phase,
                    direction: t.direction,
                    data_count: 0,
                    energy_budget_j: 0.0,
                    max_freq_hz: self.compute.max_freq_hz,
                    chip_const: self.compute.chip_const,
                });
            }
        }
        out
    }

    /// The same scenario with only gateway `gateway_id`.
    pub fn restricted_to(&self, gateway_id: u32) -> Option<Scenario> {
        let gw = self.gateways.iter().find(|g| g.id == gateway_id)?;
        let mut sc = self.clone();
        sc.gateways = vec![gw.clone()];
        sc.name = format!("{}-gw{}", self.name, gateway_id);
        Some(sc)
    }
}
