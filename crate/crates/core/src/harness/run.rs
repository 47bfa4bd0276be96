//! The training loop: global rounds of sub-region rounds, each one
//! associating satellites, training them in parallel, and merging at the
//! gateways, followed by a cloud merge and held-out evaluation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::HarnessError;
use crate::aggregation::{self, ClientReport, ParamVector, Scheme};
use crate::association::{self, AssociationMode, AssociationPlan, PlanningParams};
use crate::learner::{self, derive_seed, Dataset, EvalResult, TrainConfig};
use crate::orbital::{GatewayConfig, SatelliteState};

// Seed streams. Every random quantity hangs off the scenario seed through one
// of these tags, so schemes run on the same seed share data, initial model,
// energy draws and evaluation noise.
const STREAM_DATA: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_HOLDOUT: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_ENERGY: u64 = 5;
const STREAM_TRAIN: u64 = 6;
const STREAM_EVAL: u64 = 7;

/// Relative slack on the time and energy checks, covering the rounding in
/// `down + K·t + up` against the window it was sized for.
const AUDIT_SLACK: f64 = 1e-12;

/// One satellite's share of a gateway merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub gateway_id: u32,
    pub sat_id: u32,
    pub weight: f64,
}

/// What happened in one sub-region round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRoundRecord {
    /// 1-based count of sub-region rounds since the start of the run.
    pub index: usize,
    pub start_time_s: f64,
    pub duration_s: f64,
    /// Epochs run per satellite; zero when it sat out or was uncovered.
    pub epochs: BTreeMap<u32, u32>,
    /// Window under the assigned gateway; absent when uncovered.
    pub window_s: BTreeMap<u32, f64>,
    pub assignments: BTreeMap<u32, Option<u32>>,
    pub weights: Vec<WeightRecord>,
    /// Weighted final-epoch loss of each gateway that merged reports.
    pub gateway_loss: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based global round.
    pub round: usize,
    /// Sub-region rounds completed by the end of this global round.
    pub subregion_round: usize,
    pub end_time_s: f64,
    /// Per gateway id, loss from the last sub-region round it merged in.
    pub per_gateway_loss: BTreeMap<u32, f64>,
    /// Cloud weights by gateway id; empty when no gateway collected data.
    pub gateway_weights: BTreeMap<u32, f64>,
    pub eval: Vec<EvalResult>,
    pub subrounds: Vec<SubRoundRecord>,
}

impl RoundMetrics {
    pub fn participants(&self) -> usize {
        self.subrounds
            .iter()
            .map(|s| s.epochs.values().filter(|&&k| k > 0).count())
            .sum()
    }

    pub fn total_epochs(&self) -> u64 {
        self.subrounds
            .iter()
            .flat_map(|s| s.epochs.values())
            .map(|&k| k as u64)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub scenario: String,
    pub scheme: Scheme,
    pub gateway_ids: Vec<u32>,
    pub eval_snrs_db: Vec<f64>,
    pub rounds: Vec<RoundMetrics>,
}

impl MetricsLog {
    pub fn final_eval(&self) -> Option<&[EvalResult]> {
        self.rounds.last().map(|r| r.eval.as_slice())
    }

    /// Final-round PSNR at the evaluation SNR closest to `snr_db`.
    pub fn final_psnr_near(&self, snr_db: f64) -> Option<f64> {
        self.final_eval()?
            .iter()
            .min_by(|a, b| (a.snr_db - snr_db).abs().total_cmp(&(b.snr_db - snr_db).abs()))
            .map(|e| e.psnr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Download, training and upload overran the window.
    Time,
    /// Cumulative compute energy exceeded the round's budget.
    Energy,
    /// A report reached a gateway the satellite was not associated with.
    Participation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub round: usize,
    pub subregion_round: usize,
    pub sat_id: u32,
    pub detail: String,
}

/// Per-round record of the time, energy and participation checks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub time_checks: usize,
    pub energy_checks: usize,
    pub participation_checks: usize,
    pub violations: Vec<Violation>,
}

impl ConstraintAudit {
    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub final_params: ParamVector,
    pub audit: ConstraintAudit,
}

/// Data shared by every run on a scenario and seed.
struct Prepared {
    shards: Vec<Dataset>,
    holdout: Dataset,
    initial: ParamVector,
}

fn prepare(sc: &Scenario) -> Result<Prepared, HarnessError> {
    let width = sc.data.tile_width_px;
    let n_sats = sc.n_satellites();
    let (train, holdout) = match &sc.data.corpus_dir {
        Some(dir) => {
            let corpus = learner::load_tile_corpus(dir, width)?;
            split_corpus(corpus, sc.data.total_samples, sc.data.holdout_samples, derive_seed(sc.seed, STREAM_DATA))?
        }
        None => (
            learner::synthetic_dataset(sc.data.total_samples, width, derive_seed(sc.seed, STREAM_DATA)),
            learner::synthetic_dataset(sc.data.holdout_samples, width, derive_seed(sc.seed, STREAM_HOLDOUT)),
        ),
    };
    let shards = learner::dirichlet_partition(
        &train,
        n_sats,
        sc.data.dirichlet_lambda,
        derive_seed(sc.seed, STREAM_PARTITION),
    );
    Ok(Prepared {
        shards,
        holdout,
        initial: sc.model.init(derive_seed(sc.seed, STREAM_INIT)),
    })
}

/// Shuffles a corpus and takes the held-out tail; the training part is
/// capped at `train_n` samples.
fn split_corpus(
    mut corpus: Dataset,
    train_n: usize,
    holdout_n: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), HarnessError> {
    use rand::seq::SliceRandom;
    if corpus.len() <= holdout_n {
        return Err(HarnessError::Scenario(format!(
            "corpus holds {} tiles, fewer than the {holdout_n} held out",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |idx: &[usize], c: &Dataset| Dataset {
        samples: idx.iter().map(|&i| c.samples[i].clone()).collect(),
        labels: idx.iter().map(|&i| c.labels[i]).collect(),
        width: c.width,
        owner: None,
    };
    let split = corpus.len() - holdout_n;
    let holdout = take(&order[split..], &corpus);
    let train_idx = &order[..split.min(train_n)];
    let train = take(train_idx, &corpus);
    corpus.samples.clear();
    Ok((train, holdout))
}

/// Normal(mean, std) truncated below at `floor` by rejection.
pub fn sample_energy<R: Rng>(rng: &mut R, mean: f64, std: f64, floor: f64) -> f64 {
    if std == 0.0 {
        return mean.max(floor);
    }
    let normal = Normal::new(mean, std).expect("finite energy distribution");
    loop {
        let e = normal.sample(rng);
        if e >= floor {
            return e;
        }
    }
}

fn planning_params(sc: &Scenario, model_bits: f64, time_s: f64) -> PlanningParams {
    PlanningParams {
        link: sc.link,
        cycles_per_sample: sc.compute.cycles_per_sample,
        model_bits,
        time_s,
    }
}

/// Runs the full schedule of `sc`.
pub fn run(sc: &Scenario) -> Result<RunOutput, HarnessError> {
    sc.validate()?;
    let prep = prepare(sc)?;
    run_prepared(sc, &prep)
}

/// One independent FedAvg run per gateway, each with that gateway alone.
pub fn run_single_gateway(sc: &Scenario) -> Result<Vec<RunOutput>, HarnessError> {
    sc.validate()?;
    let prep = prepare(sc)?;
    sc.gateways
        .iter()
        .map(|g| {
            let mut single = sc.restricted_to(g.id).expect("gateway exists");
            single.aggregator.scheme = Scheme::FedAvg;
            run_prepared(&single, &prep)
        })
        .collect()
}

fn run_prepared(sc: &Scenario, prep: &Prepared) -> Result<RunOutput, HarnessError> {
    let gateways = sc.gateway_configs();
    let mut sats = sc.initial_satellites();
    for (s, shard) in sats.iter_mut().zip(&prep.shards) {
        s.data_count = shard.len();
    }
    let mut global = prep.initial.clone();
    let model_bits = global.wire_bits();
    let mut clock = 0.0;
    let mut audit = ConstraintAudit::default();
    let mut log = MetricsLog {
        scenario: sc.name.clone(),
        scheme: sc.aggregator.scheme,
        gateway_ids: gateways.iter().map(|g| g.id).collect(),
        eval_snrs_db: sc.eval_snrs_db.clone(),
        rounds: Vec::with_capacity(sc.global_rounds),
    };
    let mut subround_index = 0;

    for round in 1..=sc.global_rounds {
        let mut energy_rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(sc.seed, STREAM_ENERGY), round as u64));
        let budgets: Vec<f64> = sats
            .iter()
            .map(|_| sample_energy(&mut energy_rng, sc.energy_mean_j, sc.energy_std_j, sc.energy_floor_j))
            .collect();
        let mut remaining = budgets.clone();
        let mut gw_models: Vec<ParamVector> = vec![global.clone(); gateways.len()];
        let mut gw_reports: Vec<Vec<ClientReport>> = vec![Vec::new(); gateways.len()];
        let mut per_gateway_loss = BTreeMap::new();
        let mut subrounds = Vec::with_capacity(sc.subregion_rounds);

        for _ in 0..sc.subregion_rounds {
            subround_index += 1;
            for (s, e) in sats.iter_mut().zip(&remaining) {
                s.energy_budget_j = *e;
            }
            let params = planning_params(sc, model_bits, clock);
            let plan = association::plan(&sats, &gateways, &params, sc.association_mode);
            let ctx = RoundCtx {
                round,
                subround: subround_index,
            };

            let jobs: Vec<(usize, usize, u32)> = plan
                .participants()
                .map(|p| {
                    let si = sats.iter().position(|s| s.id == p.sat_id).expect("planned satellite exists");
                    let gi = gateways.iter().position(|g| g.id == p.gateway_id).expect("planned gateway exists");
                    (si, gi, p.compute.epochs)
                })
                .collect();
            let trained: Vec<Result<ClientReport, HarnessError>> = jobs
                .par_iter()
                .map(|&(si, gi, epochs)| {
                    let cfg = TrainConfig {
                        seed: train_seed(sc.seed, subround_index, sats[si].id),
                        ..sc.train
                    };
                    let mut r = learner::train_epochs(&sc.model, &gw_models[gi], &prep.shards[si], epochs, &cfg)
                        .map_err(|e| HarnessError::Training {
                            round,
                            sat_id: sats[si].id,
                            message: e.to_string(),
                        })?;
                    r.sat_id = sats[si].id;
                    Ok(r)
                })
                .collect();

            let mut by_gateway: Vec<Vec<ClientReport>> = vec![Vec::new(); gateways.len()];
            for (&(si, gi, _), r) in jobs.iter().zip(trained) {
                let r = r?;
                let p = &plan.plans[&r.sat_id];
                audit_satellite(&mut audit, ctx, p, budgets[si], &mut remaining[si]);
                audit.participation_checks += 1;
                if plan.gateway_of(r.sat_id) != Some(gateways[gi].id) {
                    audit.violations.push(Violation {
                        kind: ViolationKind::Participation,
                        round,
                        subregion_round: subround_index,
                        sat_id: r.sat_id,
                        detail: format!("report sent to gateway {}", gateways[gi].id),
                    });
                }
                by_gateway[gi].push(r);
            }

            let mut weights = Vec::new();
            let mut gateway_loss = BTreeMap::new();
            for (gi, reports) in by_gateway.iter().enumerate() {
                if reports.is_empty() {
                    continue;
                }
                let w = aggregation::subregion_weights(reports, &sc.aggregator).map_err(|e| HarnessError::Aggregation {
                    round,
                    message: format!("gateway {}: {e}", gateways[gi].id),
                })?;
                gw_models[gi] = aggregation::merge(reports, &w).map_err(|e| HarnessError::Aggregation {
                    round,
                    message: format!("gateway {}: {e}", gateways[gi].id),
                })?;
                let loss: f64 = reports.iter().zip(&w).map(|(r, wi)| wi * r.loss).sum();
                gateway_loss.insert(gateways[gi].id, loss);
                per_gateway_loss.insert(gateways[gi].id, loss);
                for (r, wi) in reports.iter().zip(&w) {
                    weights.push(WeightRecord {
                        gateway_id: gateways[gi].id,
                        sat_id: r.sat_id,
                        weight: *wi,
                    });
                }
            }
            for (gi, reports) in by_gateway.into_iter().enumerate() {
                gw_reports[gi].extend(reports);
            }

            let busy = plan
                .participants()
                .map(|p| p.compute.busy_time_s())
                .fold(0.0, f64::max);
            let duration = if busy > 0.0 { busy } else { sc.idle_step_s };
            subrounds.push(sub_round_record(&plan, &sats, subround_index, clock, duration, weights, gateway_loss));
            clock += duration;
            sats = sats.iter().map(|s| s.advanced(duration)).collect();
        }

        let gateway_weights = match aggregation::global_weights(&gw_reports, sc.aggregator.cloud_kappa()) {
            Ok(w) => {
                global = aggregation::global_merge(&gw_models, &w).map_err(|e| HarnessError::Aggregation {
                    round,
                    message: format!("cloud: {e}"),
                })?;
                gateways.iter().map(|g| g.id).zip(w).collect()
            }
            Err(aggregation::AggregationError::AllZeroMass) => {
                log::debug!("round {round}: no gateway collected data, global model unchanged");
                BTreeMap::new()
            }
            Err(e) => {
                return Err(HarnessError::Aggregation {
                    round,
                    message: format!("cloud: {e}"),
                })
            }
        };

        let eval = evaluate_all(sc, &global, &prep.holdout)?;
        if let Some(e) = eval.first() {
            log::info!(
                "round {round}: {} participants, psnr {:.3} dB at {} dB",
                subrounds.iter().map(|s: &SubRoundRecord| s.epochs.values().filter(|&&k| k > 0).count()).sum::<usize>(),
                e.psnr_db,
                e.snr_db
            );
        }
        log.rounds.push(RoundMetrics {
            round,
            subregion_round: subround_index,
            end_time_s: clock,
            per_gateway_loss,
            gateway_weights,
            eval,
            subrounds,
        });
    }
    Ok(RunOutput {
        log,
        final_params: global,
        audit,
    })
}

#[derive(Clone, Copy)]
struct RoundCtx {
    round: usize,
    subround: usize,
}

fn train_seed(seed: u64, subround: usize, sat_id: u32) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, STREAM_TRAIN), subround as u64), sat_id as u64)
}

fn audit_satellite(
    audit: &mut ConstraintAudit,
    ctx: RoundCtx,
    plan: &association::SatellitePlan,
    budget_j: f64,
    remaining_j: &mut f64,
) {
    let c = &plan.compute;
    audit.time_checks += 1;
    let busy = c.busy_time_s();
    if busy > c.window_s * (1.0 + AUDIT_SLACK) {
        audit.violations.push(Violation {
            kind: ViolationKind::Time,
            round: ctx.round,
            subregion_round: ctx.subround,
            sat_id: plan.sat_id,
            detail: format!("busy {busy} s in a {} s window", c.window_s),
        });
    }
    audit.energy_checks += 1;
    *remaining_j -= c.energy_used_j();
    let used = budget_j - *remaining_j;
    if used > budget_j * (1.0 + AUDIT_SLACK) {
        audit.violations.push(Violation {
            kind: ViolationKind::Energy,
            round: ctx.round,
            subregion_round: ctx.subround,
            sat_id: plan.sat_id,
            detail: format!("used {used} J of {budget_j} J"),
        });
    }
    *remaining_j = remaining_j.max(0.0);
}

fn sub_round_record(
    plan: &AssociationPlan,
    sats: &[SatelliteState],
    index: usize,
    start_time_s: f64,
    duration_s: f64,
    weights: Vec<WeightRecord>,
    gateway_loss: BTreeMap<u32, f64>,
) -> SubRoundRecord {
    SubRoundRecord {
        index,
        start_time_s,
        duration_s,
        epochs: sats
            .iter()
            .map(|s| (s.id, plan.plans.get(&s.id).map_or(0, |p| p.compute.epochs)))
            .collect(),
        window_s: plan.plans.iter().map(|(&id, p)| (id, p.compute.window_s)).collect(),
        assignments: plan.assignments.clone(),
        weights,
        gateway_loss,
    }
}

fn evaluate_all(sc: &Scenario, params: &ParamVector, holdout: &Dataset) -> Result<Vec<EvalResult>, HarnessError> {
    sc.eval_snrs_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            learner::evaluate(
                &sc.model,
                params,
                &holdout.samples,
                holdout.width,
                snr,
                derive_seed(derive_seed(sc.seed, STREAM_EVAL), i as u64),
            )
            .map_err(HarnessError::from)
        })
        .collect()
}

/// Mean window and computing frequency over associated satellites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactStats {
    pub mode: AssociationMode,
    pub mean_window_s: f64,
    pub mean_freq_hz: f64,
    /// Satellite-instants that contributed.
    pub samples: usize,
}

/// Samples `instants` uniform times in `[0, horizon_s)`, draws fresh energy
/// budgets at each, associates under `mode` and averages the window and the
/// closed-form frequency over every associated satellite with a feasible plan.
pub fn contact_statistics(
    sc: &Scenario,
    mode: AssociationMode,
    seed: u64,
    instants: usize,
    horizon_s: f64,
) -> ContactStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gateways: Vec<GatewayConfig> = sc.gateway_configs();
    let base = sc.initial_satellites();
    let model_bits = sc.model.param_count() as f64 * 32.0;
    let (mut w_sum, mut f_sum, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..instants {
        let t = rng.random_range(0.0..horizon_s);
        let sats: Vec<SatelliteState> = base
            .iter()
            .map(|s| {
                let mut s = s.advanced(t);
                s.energy_budget_j = sample_energy(&mut rng, sc.energy_mean_j, sc.energy_std_j, sc.energy_floor_j);
                s.data_count = sc.data.total_samples / base.len().max(1);
                s
            })
            .collect();
        let plan = association::plan(&sats, &gateways, &planning_params(sc, model_bits, t), mode);
        for p in plan.plans.values() {
            if p.compute.freq_hz > 0.0 {
                w_sum += p.compute.window_s;
                f_sum += p.compute.freq_hz;
                n += 1;
            }
        }
    }
    let d = n.max(1) as f64;
    ContactStats {
        mode,
        mean_window_s: w_sum / d,
        mean_freq_hz: f_sum / d,
        samples: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{GatewaySpec, TrackSpec};

    fn tiny() -> Scenario {
        let mut sc = Scenario::reference();
        sc.name = "tiny".into();
        sc.data.total_samples = 120;
        sc.data.holdout_samples = 20;
        sc.global_rounds = 3;
        sc.eval_snrs_db = vec![5.0];
        sc
    }

    #[test]
    fn energy_draws_respect_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            assert!(sample_energy(&mut rng, 1.0, 5.0, 0.5) >= 0.5);
        }
        assert_eq!(sample_energy(&mut rng, 0.1, 0.0, 0.5), 0.5);
    }

    #[test]
    fn single_satellite_single_gateway_equals_local_training() {
        let mut sc = tiny();
        sc.gateways = vec![GatewaySpec {
            x_km: 0.0,
            y_km: 0.0,
            ..sc.gateways[0].clone()
        }];
        sc.tracks = vec![TrackSpec {
            center_x_km: 0.0,
            center_y_km: 0.0,
            radius_km: 1000.0,
            n_satellites: 1,
            ..sc.tracks[0].clone()
        }];
        sc.global_rounds = 1;
        let out = run(&sc).unwrap();
        let prep = prepare(&sc).unwrap();
        let r = &out.log.rounds[0];
        let k = r.subrounds[0].epochs[&0];
        assert!(k > 0);
        let cfg = TrainConfig {
            seed: train_seed(sc.seed, 1, 0),
            ..sc.train
        };
        let local = learner::train_epochs(&sc.model, &prep.initial, &prep.shards[0], k, &cfg).unwrap();
        assert_eq!(out.final_params, local.params);
        assert_eq!(r.gateway_weights[&0], 1.0);
        assert_eq!(r.subrounds[0].weights[0].weight, 1.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let sc = tiny();
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.final_params.fingerprint(), b.final_params.fingerprint());
        assert!(a.audit.is_clean());
        assert!(a.audit.time_checks > 0);
    }

    #[test]
    fn logged_rounds_are_monotone() {
        let mut sc = tiny();
        sc.subregion_rounds = 2;
        let out = run(&sc).unwrap();
        let rounds: Vec<usize> = out.log.rounds.iter().map(|r| r.round).collect();
        assert_eq!(rounds, vec![1, 2, 3]);
        let subs: Vec<usize> = out.log.rounds.iter().map(|r| r.subregion_round).collect();
        assert_eq!(subs, vec![2, 4, 6]);
        assert!(out.log.rounds.windows(2).all(|w| w[0].end_time_s < w[1].end_time_s));
        assert!(out.audit.is_clean());
    }

    #[test]
    fn uncovered_constellation_keeps_global_model() {
        let mut sc = tiny();
        for g in &mut sc.gateways {
            g.x_km += 1e5;
        }
        let out = run(&sc).unwrap();
        assert_eq!(out.final_params, sc.model.init(derive_seed(sc.seed, STREAM_INIT)));
        assert!(out.log.rounds.iter().all(|r| r.gateway_weights.is_empty()));
        assert_eq!(out.log.rounds[2].end_time_s, 3.0 * sc.idle_step_s);
    }

    #[test]
    fn single_gateway_runs_use_one_gateway_each() {
        let mut sc = tiny();
        sc.global_rounds = 1;
        let outs = run_single_gateway(&sc).unwrap();
        assert_eq!(outs.len(), 3);
        for (o, g) in outs.iter().zip(&sc.gateways) {
            assert_eq!(o.log.gateway_ids, vec![g.id]);
            assert_eq!(o.log.scheme, Scheme::FedAvg);
        }
    }

    #[test]
    fn contact_statistics_are_positive() {
        let sc = Scenario::reference();
        let s = contact_statistics(&sc, AssociationMode::Proposed, 1, 20, 1e5);
        assert!(s.samples > 0);
        assert!(s.mean_window_s > 0.0 && s.mean_freq_hz > 0.0 && s.mean_freq_hz <= 1e9);
    }
}
