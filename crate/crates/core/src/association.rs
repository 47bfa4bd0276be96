//! Satellite-to-gateway association and per-satellite compute planning.
//!
//! The proposed rule keeps a satellite covered by a single gateway with that
//! gateway and sends a satellite in an overlap to the gateway it will stay
//! with longest. The benchmark rule picks the closest covering gateway. Both
//! then size the satellite's frequency and epoch count from its window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::link::{self, ChannelRealization, LinkBudget};
use crate::orbital::{in_coverage, window_time, GatewayConfig, SatelliteState};
use crate::resource::{self, AllocationInput, ComputePlan, ResourceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AssociationMode {
    /// Longest remaining window wins.
    #[default]
    Proposed,
    /// Geographically closest covering gateway wins.
    Nearest,
}

impl std::str::FromStr for AssociationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(Self::Proposed),
            "nearest" => Ok(Self::Nearest),
            other => Err(format!("unknown association mode `{other}`")),
        }
    }
}

/// Radio constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub sat_gain_dbi: f64,
    pub pathloss_db: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub doppler_hz: f64,
    pub tx_power_w: f64,
}

/// Everything besides geometry that the planning step needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningParams {
    pub link: LinkParams,
    pub cycles_per_sample: f64,
    /// Payload in each direction.
    pub model_bits: f64,
    /// Simulation clock, used for the channel phase.
    pub time_s: f64,
}

/// Outcome for one associated satellite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatellitePlan {
    pub sat_id: u32,
    pub gateway_id: u32,
    /// Position in the gateway's association list.
    pub subcarrier: usize,
    pub link: LinkBudget,
    /// `epochs == 0` means the satellite sits this round out.
    pub compute: ComputePlan,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssociationPlan {
    /// Satellite id to gateway id; `None` when uncovered.
    pub assignments: BTreeMap<u32, Option<u32>>,
    pub plans: BTreeMap<u32, SatellitePlan>,
}

impl AssociationPlan {
    /// Satellites assigned to `gateway_id`, in id order.
    pub fn members(&self, gateway_id: u32) -> Vec<u32> {
        self.assignments
            .iter()
            .filter(|(_, g)| **g == Some(gateway_id))
            .map(|(s, _)| *s)
            .collect()
    }

    /// Assigned satellites that can complete at least one epoch.
    pub fn participants(&self) -> impl Iterator<Item = &SatellitePlan> {
        self.plans.values().filter(|p| p.compute.epochs > 0)
    }

    pub fn gateway_of(&self, sat_id: u32) -> Option<u32> {
        self.assignments.get(&sat_id).copied().flatten()
    }
}

/// Covering gateways of `sat` with the remaining window under each.
fn covering(sat: &SatelliteState, gws: &[GatewayConfig]) -> Vec<(usize, f64)> {
    let pos = sat.position();
    gws.iter()
        .enumerate()
        .filter(|(_, g)| in_coverage(&pos, g))
        .map(|(i, g)| (i, window_time(sat, g).expect("covered satellite has a window")))
        .collect()
}

/// Gateway index per satellite under `mode`; `None` for uncovered satellites.
pub fn choose_gateways(
    sats: &[SatelliteState],
    gws: &[GatewayConfig],
    mode: AssociationMode,
) -> Vec<Option<(usize, f64)>> {
    sats.iter()
        .map(|sat| {
            let options = covering(sat, gws);
            match options.len() {
                0 => None,
                1 => Some(options[0]),
                _ => match mode {
                    AssociationMode::Proposed => best_by(&options, gws, |_, w| -w),
                    AssociationMode::Nearest => {
                        let pos = sat.position();
                        best_by(&options, gws, |i, _| pos.distance(&gws[i].position))
                    }
                },
            }
        })
        .collect()
}

/// Minimizes `key`, breaking ties on the lowest gateway id.
fn best_by(
    options: &[(usize, f64)],
    gws: &[GatewayConfig],
    key: impl Fn(usize, f64) -> f64,
) -> Option<(usize, f64)> {
    options.iter().copied().min_by(|a, b| {
        key(a.0, a.1)
            .total_cmp(&key(b.0, b.1))
            .then(gws[a.0].id.cmp(&gws[b.0].id))
    })
}

fn channel(sat: &SatelliteState, gw: &GatewayConfig, params: &PlanningParams) -> (ChannelRealization, f64) {
    let distance_km = sat.position().distance(&gw.position);
    let ch = ChannelRealization {
        gain: link::channel_gain(params.link.sat_gain_dbi, gw.antenna_gain_dbi, params.link.pathloss_db),
        doppler_hz: params.link.doppler_hz,
        delay_s: link::propagation_delay(distance_km),
        carrier_hz: params.link.carrier_hz,
        time_s: params.time_s,
    };
    (ch, distance_km)
}

/// Longest-window association followed by compute allocation.
pub fn associate(sats: &[SatelliteState], gws: &[GatewayConfig], params: &PlanningParams) -> AssociationPlan {
    plan(sats, gws, params, AssociationMode::Proposed)
}

/// Closest-gateway association followed by compute allocation.
pub fn nearest_associate(sats: &[SatelliteState], gws: &[GatewayConfig], params: &PlanningParams) -> AssociationPlan {
    plan(sats, gws, params, AssociationMode::Nearest)
}

pub fn plan(
    sats: &[SatelliteState],
    gws: &[GatewayConfig],
    params: &PlanningParams,
    mode: AssociationMode,
) -> AssociationPlan {
    let choices = choose_gateways(sats, gws, mode);
    let mut out = AssociationPlan::default();
    for (sat, choice) in sats.iter().zip(&choices) {
        out.assignments.insert(sat.id, choice.map(|(g, _)| gws[g].id));
    }

    // Subcarrier = rank of the satellite (by id) within its gateway.
    let mut subcarrier: BTreeMap<u32, usize> = BTreeMap::new();
    for gw in gws {
        for (k, s) in out.members(gw.id).into_iter().enumerate() {
            subcarrier.insert(s, k);
        }
    }
    let by_id: BTreeMap<u32, (&SatelliteState, usize, f64)> = sats
        .iter()
        .zip(&choices)
        .filter_map(|(s, c)| c.map(|(g, w)| (s.id, (s, g, w))))
        .collect();

    for (&sat_id, &(sat, g, window_s)) in &by_id {
        let gw = &gws[g];
        let k = subcarrier[&sat_id];
        let (ch, distance_km) = channel(sat, gw, params);
        let signal = ch.received_power(params.link.tx_power_w);
        // Co-channel interference: satellites on other gateways using the same
        // subcarrier index.
        let interference: Vec<f64> = by_id
            .iter()
            .filter(|(other, (_, og, _))| **other != sat_id && gws[*og].id != gw.id && subcarrier[*other] == k)
            .map(|(_, (other_sat, _, _))| channel(other_sat, gw, params).0.received_power(params.link.tx_power_w))
            .collect();
        let sinr = link::sinr(signal, &interference, gw.noise_power_w).unwrap_or(0.0);
        let rate = link::achievable_rate(true, params.link.bandwidth_hz, sinr);
        let transfer = link::transfer_time(params.model_bits, rate, distance_km).unwrap_or(f64::INFINITY);
        let budget = LinkBudget {
            sinr,
            bandwidth_hz: params.link.bandwidth_hz,
            rate_bps: rate,
            uplink_s: transfer,
            downlink_s: transfer,
            distance_km,
        };
        let compute = match resource::allocate(&AllocationInput {
            energy_budget_j: sat.energy_budget_j,
            chip_const: sat.chip_const,
            max_freq_hz: sat.max_freq_hz,
            cycles_per_sample: params.cycles_per_sample,
            data_count: sat.data_count,
            window_s,
            uplink_s: transfer,
            downlink_s: transfer,
        }) {
            Ok(p) => p,
            Err(ResourceError::WindowTooShort { .. }) | Err(ResourceError::NoData) | Err(ResourceError::ZeroFrequency) => {
                ComputePlan {
                    freq_hz: 0.0,
                    epochs: 0,
                    epoch_time_s: 0.0,
                    epoch_energy_j: 0.0,
                    window_s,
                    uplink_s: transfer,
                    downlink_s: transfer,
                }
            }
        };
        out.plans.insert(
            sat_id,
            SatellitePlan {
                sat_id,
                gateway_id: gw.id,
                subcarrier: k,
                link: budget,
                compute,
            },
        );
    }
    out
}
