//! Two-tier weighted model averaging.
//!
//! Gateways merge the models returned by their satellites with one of five
//! weighting schemes; the cloud merges gateway models by the data-epoch mass
//! each gateway collected. Every weight vector lies on the probability simplex.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σw = 1` accepted by the merge functions.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("no reports to aggregate")]
    EmptyReportSet,
    #[error("total loss is zero, the loss share is undefined")]
    ZeroTotalLoss,
    #[error("every gateway carries zero data-epoch mass")]
    AllZeroMass,
    #[error("clients carry zero weighting mass")]
    ZeroMass,
    #[error("parameter layouts differ: `{expected}` vs `{found}`")]
    LayoutMismatch { expected: String, found: String },
    #[error("weights sum to {0}, expected 1")]
    UnnormalizedWeights(f64),
    #[error("{weights} weights for {models} models")]
    WeightCountMismatch { weights: usize, models: usize },
}

/// Flat model parameters with an architecture fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: String,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: impl Into<String>) -> Self {
        Self {
            values,
            layout: layout.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Size on the wire at 32 bits per parameter.
    pub fn wire_bits(&self) -> f64 {
        32.0 * self.values.len() as f64
    }

    /// FNV-1a over the bit patterns; equal only for bit-identical vectors.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// What a satellite sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub sat_id: u32,
    pub params: ParamVector,
    pub data_count: usize,
    pub epochs: u32,
    /// Mean training loss over the final epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scheme {
    /// Sample-count share.
    FedAvg,
    /// Samples times epochs (mass term only).
    FedAvep,
    /// Independent product of sample, epoch and loss shares.
    FedIndi,
    /// Loss share only.
    FedLol,
    /// Blend of the mass and loss shares.
    #[default]
    FedSel,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::FedAvg, Scheme::FedAvep, Scheme::FedIndi, Scheme::FedLol, Scheme::FedSel];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::FedAvg => "fedavg",
            Scheme::FedAvep => "fedavep",
            Scheme::FedIndi => "fedindi",
            Scheme::FedLol => "fedlol",
            Scheme::FedSel => "fedsel",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown aggregation scheme `{s}`"))
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub scheme: Scheme,
    /// Share of the mass term, in [0, 1].
    pub beta: f64,
    /// Epoch exponent, ≥ 0.
    pub kappa: f64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::FedSel,
            beta: 0.5,
            kappa: 0.5,
        }
    }
}

impl AggregatorConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.beta) && self.kappa >= 0.0 && self.kappa.is_finite()
    }

    /// β actually applied by the scheme.
    pub fn effective_beta(&self) -> f64 {
        match self.scheme {
            Scheme::FedAvep => 1.0,
            Scheme::FedLol => 0.0,
            _ => self.beta,
        }
    }

    /// κ used by the cloud tier; sample averaging ignores epochs throughout.
    pub fn cloud_kappa(&self) -> f64 {
        match self.scheme {
            Scheme::FedAvg => 0.0,
            _ => self.kappa,
        }
    }
}

fn mass(r: &ClientReport, kappa: f64) -> f64 {
    r.data_count as f64 * (r.epochs as f64).powf(kappa)
}

/// `β · D_s K_s^κ / Σ D K^κ` for each report.
pub fn mass_term(reports: &[ClientReport], beta: f64, kappa: f64) -> Result<Vec<f64>, AggregationError> {
    let masses: Vec<f64> = reports.iter().map(|r| mass(r, kappa)).collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(AggregationError::ZeroMass);
    }
    Ok(masses.into_iter().map(|m| beta * m / total).collect())
}

/// `(1 − β)/(U − 1) · (ΣL − L_s)/ΣL` for each report; needs `U ≥ 2`.
pub fn loss_term(reports: &[ClientReport], beta: f64) -> Result<Vec<f64>, AggregationError> {
    let u = reports.len();
    debug_assert!(u >= 2);
    let total: f64 = reports.iter().map(|r| r.loss).sum();
    if !(total > 0.0) {
        return Err(AggregationError::ZeroTotalLoss);
    }
    let scale = (1.0 - beta) / (u - 1) as f64;
    Ok(reports.iter().map(|r| scale * (total - r.loss) / total).collect())
}

/// Per-satellite weights inside one gateway.
pub fn subregion_weights(reports: &[ClientReport], cfg: &AggregatorConfig) -> Result<Vec<f64>, AggregationError> {
    if reports.is_empty() {
        return Err(AggregationError::EmptyReportSet);
    }
    if reports.len() == 1 {
        // The loss share's 1/(U − 1) is undefined; a lone model passes through.
        return Ok(vec![1.0]);
    }
    let w = match cfg.scheme {
        Scheme::FedAvg => mass_term(reports, 1.0, 0.0)?,
        Scheme::FedIndi => {
            let samples = mass_term(reports, 1.0, 0.0)?;
            let epochs: Vec<f64> = reports.iter().map(|r| (r.epochs as f64).powf(cfg.kappa)).collect();
            let epoch_total: f64 = epochs.iter().sum();
            if !(epoch_total > 0.0) {
                return Err(AggregationError::ZeroMass);
            }
            let losses = loss_term(reports, 0.0)?;
            let product: Vec<f64> = samples
                .iter()
                .zip(&epochs)
                .zip(&losses)
                .map(|((a, b), c)| a * (b / epoch_total) * c)
                .collect();
            let total: f64 = product.iter().sum();
            if !(total > 0.0) {
                return Err(AggregationError::ZeroMass);
            }
            product.into_iter().map(|p| p / total).collect()
        }
        Scheme::FedAvep | Scheme::FedLol | Scheme::FedSel => {
            let beta = cfg.effective_beta();
            let mut w = if beta > 0.0 {
                mass_term(reports, beta, cfg.kappa)?
            } else {
                vec![0.0; reports.len()]
            };
            if beta < 1.0 {
                for (wi, li) in w.iter_mut().zip(loss_term(reports, beta)?) {
                    *wi += li;
                }
            }
            w
        }
    };
    Ok(w)
}

/// Cloud weights: each gateway's share of `Σ D K^κ`.
pub fn global_weights(per_gateway: &[Vec<ClientReport>], kappa: f64) -> Result<Vec<f64>, AggregationError> {
    let masses: Vec<f64> = per_gateway
        .iter()
        .map(|reports| reports.iter().map(|r| mass(r, kappa)).sum())
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(AggregationError::AllZeroMass);
    }
    Ok(masses.into_iter().map(|m| m / total).collect())
}

/// Weighted sum of parameter vectors, accumulated in input order.
pub fn weighted_sum(models: &[&ParamVector], weights: &[f64]) -> Result<ParamVector, AggregationError> {
    let first = models.first().ok_or(AggregationError::EmptyReportSet)?;
    if weights.len() != models.len() {
        return Err(AggregationError::WeightCountMismatch {
            weights: weights.len(),
            models: models.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(AggregationError::UnnormalizedWeights(sum));
    }
    for m in models {
        if m.layout != first.layout || m.len() != first.len() {
            return Err(AggregationError::LayoutMismatch {
                expected: first.layout.clone(),
                found: m.layout.clone(),
            });
        }
    }
    let mut out = vec![0.0; first.len()];
    for (m, &w) in models.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(&m.values) {
            *o += w * v;
        }
    }
    Ok(ParamVector::new(out, first.layout.clone()))
}

/// Gateway merge of the satellites' models.
pub fn merge(reports: &[ClientReport], weights: &[f64]) -> Result<ParamVector, AggregationError> {
    let models: Vec<&ParamVector> = reports.iter().map(|r| &r.params).collect();
    weighted_sum(&models, weights)
}

/// Cloud merge of gateway models.
pub fn global_merge(models: &[ParamVector], weights: &[f64]) -> Result<ParamVector, AggregationError> {
    let refs: Vec<&ParamVector> = models.iter().collect();
    weighted_sum(&refs, weights)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(d: usize, k: u32, loss: f64, values: Vec<f64>) -> ClientReport {
        ClientReport {
            sat_id: 0,
            params: ParamVector::new(values, "t"),
            data_count: d,
            epochs: k,
            loss,
        }
    }

    fn cfg(scheme: Scheme, beta: f64, kappa: f64) -> AggregatorConfig {
        AggregatorConfig { scheme, beta, kappa }
    }

    #[test]
    fn identical_reports_split_evenly() {
        let r = vec![report(50, 3, 0.2, vec![1.0]), report(50, 3, 0.2, vec![1.0])];
        for s in Scheme::ALL {
            let w = subregion_weights(&r, &cfg(s, 0.5, 0.5)).unwrap();
            assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15, "{s}: {w:?}");
        }
    }

    #[test]
    fn mass_only_weights() {
        let r = vec![report(100, 4, 0.1, vec![0.0]), report(200, 2, 0.9, vec![0.0])];
        let w = subregion_weights(&r, &cfg(Scheme::FedSel, 1.0, 1.0)).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn loss_only_weights() {
        let r = vec![report(10, 1, 1.0, vec![0.0]), report(90, 9, 3.0, vec![0.0])];
        let w = subregion_weights(&r, &cfg(Scheme::FedSel, 0.0, 1.0)).unwrap();
        assert_eq!(w, vec![0.75, 0.25]);
        assert_eq!(subregion_weights(&r, &cfg(Scheme::FedLol, 0.7, 1.0)).unwrap(), w);
    }

    #[test]
    fn fedavep_ignores_loss() {
        let r = vec![report(100, 4, 0.1, vec![0.0]), report(200, 2, 0.9, vec![0.0])];
        let w = subregion_weights(&r, &cfg(Scheme::FedAvep, 0.2, 1.0)).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn fedindi_product_of_shares() {
        // samples 1/4, 3/4; epochs (κ=1) 3/4, 1/4; loss shares 3/4, 1/4
        let r = vec![report(1, 3, 1.0, vec![0.0]), report(3, 1, 3.0, vec![0.0])];
        let w = subregion_weights(&r, &cfg(Scheme::FedIndi, 0.5, 1.0)).unwrap();
        let a = 0.25 * 0.75 * 0.75;
        let b = 0.75 * 0.25 * 0.25;
        assert!((w[0] - a / (a + b)).abs() < 1e-15);
        assert!((w[1] - b / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn single_client_passes_through() {
        let r = vec![report(10, 2, 0.0, vec![3.0, 4.0])];
        for s in Scheme::ALL {
            assert_eq!(subregion_weights(&r, &cfg(s, 0.5, 0.5)).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            subregion_weights(&[], &AggregatorConfig::default()),
            Err(AggregationError::EmptyReportSet)
        );
        let zero = vec![report(10, 2, 0.0, vec![0.0]), report(10, 3, 0.0, vec![0.0])];
        assert_eq!(
            subregion_weights(&zero, &cfg(Scheme::FedSel, 0.5, 0.5)),
            Err(AggregationError::ZeroTotalLoss)
        );
        // β = 1 never looks at the loss
        assert!(subregion_weights(&zero, &cfg(Scheme::FedAvep, 0.5, 0.5)).is_ok());
        assert_eq!(global_weights(&[vec![], vec![]], 1.0), Err(AggregationError::AllZeroMass));
    }

    #[test]
    fn global_weight_cases() {
        let g = vec![vec![report(100, 4, 0.1, vec![0.0])]];
        assert_eq!(global_weights(&g, 0.5).unwrap(), vec![1.0]);
        let g = vec![
            vec![report(100, 4, 0.1, vec![0.0])],
            vec![report(200, 2, 0.1, vec![0.0]), report(100, 2, 0.1, vec![0.0])],
        ];
        assert_eq!(global_weights(&g, 1.0).unwrap(), vec![0.4, 0.6]);
        let g: Vec<_> = (0..4).map(|_| vec![report(7, 3, 0.1, vec![0.0])]).collect();
        assert_eq!(global_weights(&g, 0.5).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn merge_cases() {
        let v = report(1, 1, 0.1, vec![1.5, -2.0, 3.25]);
        assert_eq!(merge(std::slice::from_ref(&v), &[1.0]).unwrap(), v.params);
        let neg = report(1, 1, 0.1, vec![-1.5, 2.0, -3.25]);
        let z = merge(&[v.clone(), neg], &[0.5, 0.5]).unwrap();
        assert_eq!(z.values, vec![0.0; 3]);
    }

    #[test]
    fn merge_errors() {
        let a = report(1, 1, 0.1, vec![1.0]);
        let mut b = report(1, 1, 0.1, vec![1.0]);
        b.params.layout = "other".into();
        assert!(matches!(merge(&[a.clone(), b], &[0.5, 0.5]), Err(AggregationError::LayoutMismatch { .. })));
        assert!(matches!(
            merge(&[a.clone(), a.clone()], &[0.5, 0.6]),
            Err(AggregationError::UnnormalizedWeights(_))
        ));
        assert!(matches!(merge(&[a], &[0.5, 0.5]), Err(AggregationError::WeightCountMismatch { .. })));
        assert_eq!(global_merge(&[], &[]), Err(AggregationError::EmptyReportSet));
    }

    #[test]
    fn global_merge_mirrors_merge() {
        let v = ParamVector::new(vec![0.25, -1.0], "t");
        assert_eq!(global_merge(std::slice::from_ref(&v), &[1.0]).unwrap(), v);
        let neg = ParamVector::new(vec![-0.25, 1.0], "t");
        assert_eq!(global_merge(&[v, neg], &[0.5, 0.5]).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("FedSEL".parse::<Scheme>().unwrap(), Scheme::FedSel);
        assert!("fedesl".parse::<Scheme>().is_err());
    }

    fn reports_strategy() -> impl Strategy<Value = Vec<ClientReport>> {
        proptest::collection::vec((1usize..500, 1u32..100, 0.001f64..5.0), 1..12).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (d, k, l))| ClientReport {
                    sat_id: i as u32,
                    params: ParamVector::new(vec![i as f64], "t"),
                    data_count: d,
                    epochs: k,
                    loss: l,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn weights_on_simplex(reports in reports_strategy(), beta in 0.0f64..=1.0, kappa in 0.0f64..2.0) {
            for s in Scheme::ALL {
                let w = subregion_weights(&reports, &cfg(s, beta, kappa)).unwrap();
                let sum: f64 = w.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9, "{s}: {sum}");
                prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn term_sums(reports in reports_strategy(), beta in 0.0f64..=1.0, kappa in 0.0f64..2.0) {
            prop_assume!(reports.len() >= 2);
            let l: f64 = loss_term(&reports, beta).unwrap().iter().sum();
            let m: f64 = mass_term(&reports, beta, kappa).unwrap().iter().sum();
            prop_assert!((l - (1.0 - beta)).abs() <= 1e-12);
            prop_assert!((m - beta).abs() <= 1e-12);
        }

        #[test]
        fn sample_scale_invariance(reports in reports_strategy(), scale in 2usize..7, kappa in 0.0f64..2.0) {
            let scaled: Vec<_> = reports.iter().cloned().map(|mut r| { r.data_count *= scale; r }).collect();
            for s in [Scheme::FedAvg, Scheme::FedAvep] {
                let a = subregion_weights(&reports, &cfg(s, 1.0, kappa)).unwrap();
                let b = subregion_weights(&scaled, &cfg(s, 1.0, kappa)).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn equal_epochs_reduce_fedavep_to_fedavg(reports in reports_strategy(), k in 1u32..50, kappa in 0.0f64..2.0) {
            let same: Vec<_> = reports.into_iter().map(|mut r| { r.epochs = k; r }).collect();
            let a = subregion_weights(&same, &cfg(Scheme::FedAvg, 0.5, kappa)).unwrap();
            let b = subregion_weights(&same, &cfg(Scheme::FedAvep, 0.5, kappa)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn merging_identical_vectors_is_identity(
            v in proptest::collection::vec(-10.0f64..10.0, 1..20),
            raw in proptest::collection::vec(0.01f64..1.0, 1..8),
        ) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let sum: f64 = w.iter().sum();
            prop_assume!((sum - 1.0).abs() <= 1e-9);
            let models: Vec<_> = w.iter().map(|_| ParamVector::new(v.clone(), "t")).collect();
            let out = global_merge(&models, &w).unwrap();
            for (a, b) in out.values.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn merge_matches_coordinate_dot_products(
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 6), 3),
            raw in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let models: Vec<_> = rows.iter().map(|r| ParamVector::new(r.clone(), "t")).collect();
            let out = global_merge(&models, &w).unwrap();
            for j in 0..6 {
                let dot: f64 = (0..3).map(|i| w[i] * rows[i][j]).sum();
                prop_assert!((out.values[j] - dot).abs() <= 1e-12);
            }
        }
    }
}
