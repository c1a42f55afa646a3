//! RSSI estimators behind one fit/predict contract.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::MacAddr;
use crate::preprocess::{FeatureMatrix, Layout};

pub mod adam;
pub mod knn;
pub mod mlp;

pub use adam::{Adam, AdamConfig};
pub use knn::{knn_distance, knn_sq_distance, KnnIndex, KnnSpec, Projector, Weighting};
pub use mlp::{mlp_train, Mlp, MlpSpec, TrainingHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GlobalMean,
    PerMacMean,
    Knn,
    PerMacKnn,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::GlobalMean,
        Family::PerMacMean,
        Family::Knn,
        Family::PerMacKnn,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::GlobalMean => "global_mean",
            Family::PerMacMean => "per_mac_mean",
            Family::Knn => "knn",
            Family::PerMacKnn => "per_mac_knn",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.replace('-', "_"))
            .ok_or_else(|| alloc::format!("unknown family {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RegressorSpec {
    GlobalMean,
    PerMacMean,
    Knn(KnnSpec),
    PerMacKnn(KnnSpec),
    Mlp(MlpSpec),
}

impl RegressorSpec {
    pub fn family(&self) -> Family {
        match self {
            RegressorSpec::GlobalMean => Family::GlobalMean,
            RegressorSpec::PerMacMean => Family::PerMacMean,
            RegressorSpec::Knn(_) => Family::Knn,
            RegressorSpec::PerMacKnn(_) => Family::PerMacKnn,
            RegressorSpec::Mlp(_) => Family::Mlp,
        }
    }

    /// The family with its default hyperparameters.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::GlobalMean => RegressorSpec::GlobalMean,
            Family::PerMacMean => RegressorSpec::PerMacMean,
            Family::Knn => RegressorSpec::Knn(KnnSpec::default()),
            Family::PerMacKnn => RegressorSpec::PerMacKnn(KnnSpec::default()),
            Family::Mlp => RegressorSpec::Mlp(MlpSpec::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("invalid regressor spec: {0}")]
    InvalidSpec(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredictError {
    #[error("query columns do not match the columns the model was trained on")]
    LayoutMismatch,
}

/// Learned state for each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    GlobalMean {
        mean: f64,
    },
    PerMacMean {
        means: BTreeMap<MacAddr, f64>,
        fallback: f64,
    },
    Knn {
        index: KnnIndex,
    },
    PerMacKnn {
        indexes: BTreeMap<MacAddr, KnnIndex>,
        fallback: f64,
    },
    Mlp {
        net: Mlp,
        history: TrainingHistory,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: RegressorSpec,
    pub layout: Layout,
    pub state: ModelState,
    pub trained_on: String,
}

/// Estimates per query row, plus the rows that needed a fallback (unknown
/// MAC for per-MAC families, or a MAC/channel outside the layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub flagged_rows: Vec<usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn check_knn(spec: &KnnSpec) -> Result<(), FitError> {
    if spec.k == 0 {
        return Err(FitError::InvalidSpec("k must be at least 1"));
    }
    if !(spec.mac_scale.is_finite() && spec.mac_scale >= 1.0) {
        return Err(FitError::InvalidSpec("mac_scale must be finite and >= 1"));
    }
    Ok(())
}

fn rows_by_mac(train: &FeatureMatrix) -> BTreeMap<MacAddr, Vec<usize>> {
    let mut groups: BTreeMap<MacAddr, Vec<usize>> = BTreeMap::new();
    for (i, mac) in train.macs().iter().enumerate() {
        groups.entry(*mac).or_default().push(i);
    }
    groups
}

/// Trains `spec` on `train`.
pub fn fit(spec: &RegressorSpec, train: &FeatureMatrix) -> Result<TrainedModel, FitError> {
    if train.is_empty() {
        return Err(FitError::EmptyTrain);
    }
    let targets = train.targets();
    let state = match spec {
        RegressorSpec::GlobalMean => ModelState::GlobalMean {
            mean: mean(targets.iter().copied()),
        },
        RegressorSpec::PerMacMean => ModelState::PerMacMean {
            means: rows_by_mac(train)
                .into_iter()
                .map(|(mac, rows)| (mac, mean(rows.iter().map(|&r| targets[r]))))
                .collect(),
            fallback: mean(targets.iter().copied()),
        },
        RegressorSpec::Knn(k) => {
            check_knn(k)?;
            ModelState::Knn {
                index: KnnIndex::build(train, None, true, k.mac_scale),
            }
        }
        RegressorSpec::PerMacKnn(k) => {
            check_knn(k)?;
            ModelState::PerMacKnn {
                indexes: rows_by_mac(train)
                    .into_iter()
                    .map(|(mac, rows)| (mac, KnnIndex::build(train, Some(&rows), false, 1.0)))
                    .collect(),
                fallback: mean(targets.iter().copied()),
            }
        }
        RegressorSpec::Mlp(m) => {
            let (net, history) = mlp_train(train, m)?;
            ModelState::Mlp { net, history }
        }
    };
    Ok(TrainedModel {
        spec: *spec,
        layout: train.layout().clone(),
        state,
        trained_on: train_label(train),
    })
}

fn train_label(train: &FeatureMatrix) -> String {
    alloc::format!("{} rows x {} columns", train.n_rows(), train.width())
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn columns(&self) -> Vec<String> {
        self.layout.columns()
    }

    fn compatible(&self, query: &FeatureMatrix) -> bool {
        let q = query.layout();
        q.spec == self.layout.spec && q.macs == self.layout.macs && q.channels == self.layout.channels
    }

    pub fn predict(&self, query: &FeatureMatrix) -> Result<Prediction, PredictError> {
        if !self.compatible(query) {
            return Err(PredictError::LayoutMismatch);
        }
        let n = query.n_rows();
        let mut flagged: Vec<usize> = query.unknown_rows().to_vec();
        let values = match &self.state {
            ModelState::GlobalMean { mean } => alloc::vec![*mean; n],
            ModelState::PerMacMean { means, fallback } => query
                .macs()
                .iter()
                .enumerate()
                .map(|(i, mac)| {
                    means.get(mac).copied().unwrap_or_else(|| {
                        flagged.push(i);
                        *fallback
                    })
                })
                .collect(),
            ModelState::Knn { index } => {
                let RegressorSpec::Knn(spec) = self.spec else {
                    unreachable!("state and spec families agree")
                };
                let projector = Projector::new(&self.layout, true);
                query
                    .rows()
                    .map(|row| index.predict(&projector.project(row), spec.k, spec.weighting))
                    .collect()
            }
            ModelState::PerMacKnn { indexes, fallback } => {
                let RegressorSpec::PerMacKnn(spec) = self.spec else {
                    unreachable!("state and spec families agree")
                };
                let projector = Projector::new(&self.layout, false);
                query
                    .rows()
                    .zip(query.macs())
                    .enumerate()
                    .map(|(i, (row, mac))| match indexes.get(mac) {
                        Some(index) => index.predict(&projector.project(row), spec.k, spec.weighting),
                        None => {
                            flagged.push(i);
                            *fallback
                        }
                    })
                    .collect()
            }
            ModelState::Mlp { net, .. } => query.rows().map(|row| net.forward(row)).collect(),
        };
        flagged.sort_unstable();
        flagged.dedup();
        Ok(Prediction {
            values,
            flagged_rows: flagged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeaconSample, Dataset, Position};
    use crate::preprocess::{encode, EncodingSpec, Layout};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mac(b: u8) -> MacAddr {
        MacAddr([2, 0, 0, 0, 0, b])
    }

    fn sample(m: u8, rssi: i32, p: [f64; 3]) -> BeaconSample {
        BeaconSample {
            timestamp: 0,
            position: Position::new(p[0], p[1], p[2]),
            ssid: "".into(),
            mac: mac(m),
            rssi,
            channel: 6,
        }
    }

    fn ds(rows: &[(u8, i32, [f64; 3])]) -> Dataset {
        Dataset::new(rows.iter().map(|&(m, r, p)| sample(m, r, p)).collect(), "t")
    }

    #[test]
    fn global_mean_of_targets() {
        let fm = encode(&ds(&[(1, -70, [0.0; 3]), (2, -80, [1.0; 3])]), EncodingSpec::default()).unwrap();
        let model = fit(&RegressorSpec::GlobalMean, &fm).unwrap();
        assert_eq!(model.state, ModelState::GlobalMean { mean: -75.0 });
        assert_eq!(model.predict(&fm).unwrap().values, vec![-75.0, -75.0]);
    }

    #[test]
    fn per_mac_mean_with_fallback() {
        let train = ds(&[(1, -60, [0.0; 3]), (1, -70, [1.0; 3]), (2, -90, [2.0; 3])]);
        let layout = Layout::fit(&train, EncodingSpec::default()).unwrap();
        let model = fit(&RegressorSpec::PerMacMean, &layout.transform(&train)).unwrap();
        let ModelState::PerMacMean { means, fallback } = &model.state else { panic!() };
        assert_eq!(means[&mac(1)], -65.0);
        assert_eq!(means[&mac(2)], -90.0);
        // (-60 - 70 - 90) / 3
        assert!((fallback - (-220.0 / 3.0)).abs() < 1e-12);

        let query = layout.transform(&ds(&[(2, -1, [0.5; 3]), (3, -1, [0.5; 3])]));
        let p = model.predict(&query).unwrap();
        assert_eq!(p.values[0], -90.0);
        assert!((p.values[1] + 73.333_333_333_333_33).abs() < 1e-9);
        assert_eq!(p.flagged_rows, vec![1]);
    }

    #[test]
    fn knn_exact_match_returns_its_target() {
        let train = ds(&[(1, -60, [0.0, 0.0, 0.0]), (1, -70, [1.0, 0.0, 0.0]), (2, -90, [0.0, 0.0, 0.0])]);
        let fm = encode(&train, EncodingSpec::default()).unwrap();
        let model = fit(&RegressorSpec::Knn(KnnSpec { k: 1, ..Default::default() }), &fm).unwrap();
        assert_eq!(model.predict(&fm).unwrap().values, vec![-60.0, -70.0, -90.0]);
    }

    #[test]
    fn per_mac_knn_uses_all_rows_when_fewer_than_k() {
        let train = ds(&[(1, -60, [0.0; 3]), (1, -66, [1.0; 3]), (1, -69, [2.0; 3]), (2, -90, [0.1; 3])]);
        let layout = Layout::fit(&train, EncodingSpec::default()).unwrap();
        let spec = KnnSpec { k: 16, weighting: Weighting::Uniform, mac_scale: 1.0 };
        let model = fit(&RegressorSpec::PerMacKnn(spec), &layout.transform(&train)).unwrap();
        let q = layout.transform(&ds(&[(1, 0, [0.1; 3]), (2, 0, [3.0; 3])]));
        let p = model.predict(&q).unwrap();
        assert_eq!(p.values, vec![-65.0, -90.0]);
        assert!(p.flagged_rows.is_empty());
    }

    #[test]
    fn per_mac_knn_on_one_mac_equals_coordinate_knn() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(u8, i32, [f64; 3])> = (0..50)
            .map(|_| (1, -rng.random_range(40..95), [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..2.0)]))
            .collect();
        let train = ds(&rows);
        let spec = KnnSpec { k: 5, weighting: Weighting::InverseDistance, mac_scale: 1.0 };
        let with_mac = encode(&train, EncodingSpec::default()).unwrap();
        let coords_only = encode(&train, EncodingSpec { use_mac_onehot: false, ..Default::default() }).unwrap();
        let a = fit(&RegressorSpec::PerMacKnn(spec), &with_mac).unwrap().predict(&with_mac).unwrap();
        let b = fit(&RegressorSpec::Knn(spec), &coords_only).unwrap().predict(&coords_only).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn mismatched_columns_are_rejected() {
        let a = encode(&ds(&[(1, -60, [0.0; 3])]), EncodingSpec::default()).unwrap();
        let b = encode(&ds(&[(2, -60, [0.0; 3])]), EncodingSpec::default()).unwrap();
        let model = fit(&RegressorSpec::GlobalMean, &a).unwrap();
        assert_eq!(model.predict(&b), Err(PredictError::LayoutMismatch));
    }

    #[test]
    fn fit_errors() {
        let fm = encode(&ds(&[(1, -60, [0.0; 3])]), EncodingSpec::default()).unwrap();
        let empty = fm.select(&[]);
        assert_eq!(fit(&RegressorSpec::GlobalMean, &empty).unwrap_err(), FitError::EmptyTrain);
        let bad = RegressorSpec::Knn(KnnSpec { k: 0, ..Default::default() });
        assert!(matches!(fit(&bad, &fm), Err(FitError::InvalidSpec(_))));
    }

    #[test]
    fn mlp_weight_shapes_follow_layout() {
        let train = ds(&[(1, -60, [0.0; 3]), (2, -70, [1.0; 3]), (3, -80, [2.0; 3])]);
        let fm = encode(&train, EncodingSpec::default()).unwrap();
        let spec = RegressorSpec::Mlp(MlpSpec { epochs: 1, validation_fraction: 0.0, ..Default::default() });
        let model = fit(&spec, &fm).unwrap();
        let ModelState::Mlp { net, .. } = &model.state else { panic!() };
        assert_eq!(net.shapes(), [(6, 16), (16, 1), (16, 1), (1, 1)]);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert_eq!("per-mac-knn".parse::<Family>().unwrap(), Family::PerMacKnn);
        assert!("forest".parse::<Family>().is_err());
    }

    proptest! {
        #[test]
        fn predictions_ignore_training_row_order(seed in any::<u64>(), k in 1usize..8, uniform in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<(u8, i32, [f64; 3])> = (0..40)
                .map(|_| (rng.random_range(0..4), -rng.random_range(40..95), [rng.random_range(0.0..3.7), rng.random_range(0.0..3.2), rng.random_range(0.0..2.1)]))
                .collect();
            let train = ds(&rows);
            let mut shuffled = train.clone();
            shuffled.samples.shuffle(&mut rng);
            let layout = Layout::fit(&train, EncodingSpec::default()).unwrap();
            let query = layout.transform(&ds(&[(0, 0, [1.0, 1.0, 1.0]), (3, 0, [2.0, 0.5, 1.5]), (9, 0, [0.2, 0.2, 0.2])]));
            let weighting = if uniform { Weighting::Uniform } else { Weighting::InverseDistance };
            let knn = KnnSpec { k, weighting, mac_scale: 3.0 };
            for spec in [RegressorSpec::GlobalMean, RegressorSpec::PerMacMean, RegressorSpec::Knn(knn), RegressorSpec::PerMacKnn(knn)] {
                let a = fit(&spec, &layout.transform(&train)).unwrap().predict(&query).unwrap();
                let b = fit(&spec, &layout.transform(&shuffled)).unwrap().predict(&query).unwrap();
                prop_assert_eq!(&a.flagged_rows, &b.flagged_rows);
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert!((x - y).abs() < 1e-9, "{:?}: {} vs {}", spec.family(), x, y);
                }
            }
        }
    }
}
