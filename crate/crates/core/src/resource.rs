//! On-board compute budgeting: per-epoch time and energy, and the closed-form
//! computing frequency that maximizes the number of local epochs inside a
//! contact window under an energy budget.
//!
//! With `t_eff = T − t_down − t_up`, the time limit allows
//! `K ≤ t_eff·C/(D·C_d)` and the energy limit allows `K ≤ E/(ε·C²·C_d·D)`.
//! The first grows with `C`, the second shrinks, and they cross at
//! `C = ∛(E/(ε·t_eff))`, which is then capped at the hardware maximum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("computing frequency must be positive")]
    ZeroFrequency,
    #[error("window {window_s} s leaves no compute time after {transfer_s} s of transfers")]
    WindowTooShort { window_s: f64, transfer_s: f64 },
    #[error("satellite holds no training data")]
    NoData,
}

/// Per-satellite compute allocation for one sub-region round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputePlan {
    pub freq_hz: f64,
    pub epochs: u32,
    pub epoch_time_s: f64,
    pub epoch_energy_j: f64,
    pub window_s: f64,
    pub uplink_s: f64,
    pub downlink_s: f64,
}

impl ComputePlan {
    /// Wall-clock time the satellite is busy: download, training and upload.
    pub fn busy_time_s(&self) -> f64 {
        self.downlink_s + self.epochs as f64 * self.epoch_time_s + self.uplink_s
    }

    pub fn energy_used_j(&self) -> f64 {
        self.epochs as f64 * self.epoch_energy_j
    }

    pub fn fits_window(&self) -> bool {
        self.busy_time_s() <= self.window_s
    }
}

/// Seconds for one pass over `data_count` samples.
pub fn epoch_time(data_count: usize, cycles_per_sample: f64, freq_hz: f64) -> Result<f64, ResourceError> {
    if !(freq_hz > 0.0) {
        return Err(ResourceError::ZeroFrequency);
    }
    Ok(data_count as f64 * cycles_per_sample / freq_hz)
}

/// Joules for one pass: `ε·C²·C_d·D`.
pub fn epoch_energy(chip_const: f64, freq_hz: f64, cycles_per_sample: f64, data_count: usize) -> f64 {
    chip_const * freq_hz * freq_hz * cycles_per_sample * data_count as f64
}

pub fn effective_window(window_s: f64, uplink_s: f64, downlink_s: f64) -> Result<f64, ResourceError> {
    let transfer_s = uplink_s + downlink_s;
    let eff = window_s - transfer_s;
    if !(eff > 0.0) {
        return Err(ResourceError::WindowTooShort { window_s, transfer_s });
    }
    Ok(eff)
}

/// `min(C_max, ∛(E/(ε·(T − t_down − t_up))))`.
pub fn optimal_frequency(
    energy_budget_j: f64,
    chip_const: f64,
    window_s: f64,
    uplink_s: f64,
    downlink_s: f64,
    max_freq_hz: f64,
) -> Result<f64, ResourceError> {
    let eff = effective_window(window_s, uplink_s, downlink_s)?;
    let unclamped = (energy_budget_j / (chip_const * eff)).cbrt();
    Ok(unclamped.min(max_freq_hz))
}

/// Largest whole number of epochs that satisfies both the time and energy
/// constraints at frequency `freq_hz`.
pub fn epoch_count(
    energy_budget_j: f64,
    chip_const: f64,
    freq_hz: f64,
    cycles_per_sample: f64,
    data_count: usize,
    effective_window_s: f64,
) -> Result<u32, ResourceError> {
    if data_count == 0 {
        return Err(ResourceError::NoData);
    }
    if !(freq_hz > 0.0) {
        return Err(ResourceError::ZeroFrequency);
    }
    let e_epoch = epoch_energy(chip_const, freq_hz, cycles_per_sample, data_count);
    let t_epoch = epoch_time(data_count, cycles_per_sample, freq_hz)?;
    let by_energy = (energy_budget_j / e_epoch).floor();
    let by_time = (effective_window_s / t_epoch).floor();
    let mut k = by_energy.min(by_time).max(0.0).min(u32::MAX as f64) as u32;
    // Floors of rounded quotients can overshoot by one ulp; step back until the
    // products themselves satisfy both limits.
    while k > 0 && (k as f64 * e_epoch > energy_budget_j || k as f64 * t_epoch > effective_window_s) {
        k -= 1;
    }
    Ok(k)
}

/// Inputs of a single allocation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationInput {
    pub energy_budget_j: f64,
    pub chip_const: f64,
    pub max_freq_hz: f64,
    pub cycles_per_sample: f64,
    pub data_count: usize,
    pub window_s: f64,
    pub uplink_s: f64,
    pub downlink_s: f64,
}

/// Closed-form frequency plus epoch count, packaged as a plan.
pub fn allocate(input: &AllocationInput) -> Result<ComputePlan, ResourceError> {
    let freq = optimal_frequency(
        input.energy_budget_j,
        input.chip_const,
        input.window_s,
        input.uplink_s,
        input.downlink_s,
        input.max_freq_hz,
    )?;
    let eff = effective_window(input.window_s, input.uplink_s, input.downlink_s)?;
    let epochs = epoch_count(
        input.energy_budget_j,
        input.chip_const,
        freq,
        input.cycles_per_sample,
        input.data_count,
        eff,
    )?;
    Ok(ComputePlan {
        freq_hz: freq,
        epochs,
        epoch_time_s: epoch_time(input.data_count, input.cycles_per_sample, freq)?,
        epoch_energy_j: epoch_energy(input.chip_const, freq, input.cycles_per_sample, input.data_count),
        window_s: input.window_s,
        uplink_s: input.uplink_s,
        downlink_s: input.downlink_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const EPS: f64 = 5e-24;
    const CD: f64 = 1e8;

    /// Best epoch count over a uniform frequency grid on (0, C_max].
    fn grid_best(e: f64, eps: f64, t_eff: f64, d: usize, cd: f64, cmax: f64, n: usize) -> u32 {
        let mut best = 0u32;
        for i in 1..=n {
            let c = cmax * i as f64 / n as f64;
            let by_e = (e / (eps * c * c * cd * d as f64)).floor();
            let by_t = (t_eff * c / (d as f64 * cd)).floor();
            best = best.max(by_e.min(by_t) as u32);
        }
        best
    }

    #[test]
    fn epoch_time_cases() {
        assert!((epoch_time(93, CD, 0.3664e9).unwrap() - 25.38).abs() < 0.01);
        assert_eq!(epoch_time(0, CD, 1e9).unwrap(), 0.0);
        assert_eq!(epoch_time(1, 5e8, 5e8).unwrap(), 1.0);
        assert_eq!(epoch_time(1, CD, 0.0), Err(ResourceError::ZeroFrequency));
    }

    #[test]
    fn epoch_energy_cases() {
        let e = epoch_energy(EPS, 0.3664e9, CD, 93);
        assert!((e - 6243.0).abs() < 1.0, "{e}");
        assert_eq!(epoch_energy(EPS, 0.0, CD, 93), 0.0);
        let ratio = epoch_energy(EPS, 2e8, CD, 10) / epoch_energy(EPS, 1e8, CD, 10);
        assert_relative_eq!(ratio, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_frequency_matches_grid() {
        let c = optimal_frequency(1e5, EPS, 438.0, 0.0, 0.0, 1e9).unwrap();
        assert_relative_eq!(c, (1e5f64 / (EPS * 438.0)).cbrt(), max_relative = 1e-14);
        assert!((c - 3.57e8).abs() < 0.01e8);
        let k = epoch_count(1e5, EPS, c, CD, 93, 438.0).unwrap();
        assert_eq!(k, grid_best(1e5, EPS, 438.0, 93, CD, 1e9, 10_000));
    }

    #[test]
    fn frequency_cap_binds_for_short_windows() {
        let unclamped = (1e5f64 / EPS).cbrt();
        assert!((unclamped - 2.71e9).abs() < 0.01e9);
        assert_eq!(optimal_frequency(1e5, EPS, 1.0, 0.0, 0.0, 1e9).unwrap(), 1e9);
    }

    #[test]
    fn frequency_vanishes_for_long_windows() {
        let c = optimal_frequency(1e5, EPS, 1e9, 0.0, 0.0, 1e9).unwrap();
        assert!(c < 3e6, "{c}");
        // the grid optimum sits at the same place: the first grid point at or
        // above the crossing frequency
        let k = epoch_count(1e5, EPS, c, CD, 1_000_000, 1e9).unwrap();
        let grid = grid_best(1e5, EPS, 1e9, 1_000_000, CD, 1e7, 100_000);
        assert!(k > 0);
        assert!(k.abs_diff(grid) <= 1, "{k} vs {grid}");
    }

    #[test]
    fn window_too_short() {
        assert!(matches!(
            optimal_frequency(1e5, EPS, 1.0, 0.6, 0.4, 1e9),
            Err(ResourceError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn epoch_count_cases() {
        assert_eq!(epoch_count(1e5, EPS, 0.3664e9, CD, 93, 438.0).unwrap(), 16);
        assert_eq!(epoch_count(0.0, EPS, 0.3664e9, CD, 93, 438.0).unwrap(), 0);
        assert_eq!(epoch_count(1e5, EPS, 0.3664e9, CD, 0, 438.0), Err(ResourceError::NoData));
        // 18 samples, frequency solved for its own 447 s window
        let c = optimal_frequency(1e5, EPS, 447.0, 0.0, 0.0, 1e9).unwrap();
        let k = epoch_count(1e5, EPS, c, CD, 18, 447.0).unwrap();
        assert!((k as f64 - 85.4).abs() <= 8.54, "{k}");
    }

    #[test]
    fn shorter_window_raises_frequency_and_lowers_epochs() {
        let plan = |w: f64| {
            allocate(&AllocationInput {
                energy_budget_j: 1e5,
                chip_const: EPS,
                max_freq_hz: 1e9,
                cycles_per_sample: CD,
                data_count: 93,
                window_s: w,
                uplink_s: 0.01,
                downlink_s: 0.01,
            })
            .unwrap()
        };
        let long = plan(438.0);
        let short = plan(300.0);
        assert!(short.freq_hz > long.freq_hz);
        assert!(short.epochs < long.epochs);
    }

    fn input_strategy() -> impl Strategy<Value = AllocationInput> {
        (
            1e3f64..2e5,
            1e-24f64..1e-23,
            5e8f64..2e9,
            5e7f64..2e8,
            10usize..500,
            10.0f64..2000.0,
            0.0f64..2.0,
            0.0f64..2.0,
        )
            .prop_map(|(e, eps, cmax, cd, d, w, up, down)| AllocationInput {
                energy_budget_j: e,
                chip_const: eps,
                max_freq_hz: cmax,
                cycles_per_sample: cd,
                data_count: d,
                window_s: w + up + down,
                uplink_s: up,
                downlink_s: down,
            })
    }

    proptest! {
        #[test]
        fn plan_is_feasible(input in input_strategy()) {
            let p = allocate(&input).unwrap();
            prop_assert!(p.fits_window());
            prop_assert!(p.energy_used_j() <= input.energy_budget_j);
            prop_assert!(p.freq_hz <= input.max_freq_hz);
        }

        #[test]
        fn epochs_monotone(input in input_strategy(), bump in 1.0f64..2.0) {
            let base = allocate(&input).unwrap().epochs;
            let more_energy = allocate(&AllocationInput { energy_budget_j: input.energy_budget_j * bump, ..input }).unwrap().epochs;
            let longer = allocate(&AllocationInput { window_s: input.window_s * bump, ..input }).unwrap().epochs;
            let more_data = allocate(&AllocationInput { data_count: input.data_count + 5, ..input }).unwrap().epochs;
            prop_assert!(more_energy >= base);
            prop_assert!(longer >= base);
            prop_assert!(more_data <= base);
        }
    }
}
