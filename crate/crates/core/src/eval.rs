//! RMSE loss, held-out evaluation and cross-validated grid search.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::MacAddr;
use crate::preprocess::FeatureMatrix;
use crate::regress::knn::{aggregate, KnnIndex, Projector};
use crate::regress::{fit, Family, FitError, KnnSpec, PredictError, RegressorSpec, TrainedModel, Weighting};
use crate::Warning;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty set")]
    Empty,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid grid: {0}")]
    Grid(&'static str),
    #[error("{folds} folds need at least {folds} training rows, got {rows}")]
    Folds { folds: usize, rows: usize },
}

/// Root mean square error, in the units of the inputs.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let sq: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(libm::sqrt(sq / predictions.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacScore {
    pub mac: MacAddr,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub family: Family,
    pub rmse: f64,
    pub n: usize,
    /// Sorted by MAC.
    pub per_mac: Vec<MacScore>,
    pub flagged_rows: usize,
}

/// Scores `model` on `test`: overall RMSE and its per-MAC breakdown.
pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let pred = model.predict(test)?;
    let overall = rmse(&pred.values, test.targets())?;
    let mut groups: BTreeMap<MacAddr, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((p, t), mac) in pred.values.iter().zip(test.targets()).zip(test.macs()) {
        let g = groups.entry(*mac).or_default();
        g.0.push(*p);
        g.1.push(*t);
    }
    let per_mac = groups
        .into_iter()
        .map(|(mac, (p, t))| {
            Ok(MacScore {
                mac,
                rmse: rmse(&p, &t)?,
                n: p.len(),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        family: model.family(),
        rmse: overall,
        n: test.n_rows(),
        per_mac,
        flagged_rows: pred.flagged_rows.len(),
    })
}

/// One named list of candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum GridAxis {
    K(Vec<usize>),
    Weighting(Vec<Weighting>),
    MacScale(Vec<f64>),
    HiddenUnits(Vec<usize>),
}

impl GridAxis {
    fn len(&self) -> usize {
        match self {
            GridAxis::K(v) | GridAxis::HiddenUnits(v) => v.len(),
            GridAxis::Weighting(v) => v.len(),
            GridAxis::MacScale(v) => v.len(),
        }
    }

    fn apply(&self, spec: &mut RegressorSpec, i: usize) -> Result<(), EvalError> {
        match (self, spec) {
            (GridAxis::K(v), RegressorSpec::Knn(s) | RegressorSpec::PerMacKnn(s)) => s.k = v[i],
            (GridAxis::Weighting(v), RegressorSpec::Knn(s) | RegressorSpec::PerMacKnn(s)) => s.weighting = v[i],
            (GridAxis::MacScale(v), RegressorSpec::Knn(s)) => s.mac_scale = v[i],
            (GridAxis::HiddenUnits(v), RegressorSpec::Mlp(s)) => s.hidden_units = v[i],
            _ => return Err(EvalError::Grid("axis does not apply to this family")),
        }
        Ok(())
    }
}

/// A base spec and the axes varied around it. Points enumerate the
/// Cartesian product with the first axis outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: RegressorSpec,
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    /// k in 1..=20, both weightings, MAC scale in 1..=20.
    pub fn knn_default() -> Self {
        GridSpec {
            base: RegressorSpec::Knn(KnnSpec::default()),
            axes: vec![
                GridAxis::K((1..=20).collect()),
                GridAxis::Weighting(vec![Weighting::Uniform, Weighting::InverseDistance]),
                GridAxis::MacScale((1..=20).map(f64::from).collect()),
            ],
        }
    }

    pub fn points(&self) -> Result<Vec<RegressorSpec>, EvalError> {
        if self.axes.iter().any(|a| a.len() == 0) {
            return Err(EvalError::Grid("every axis needs at least one value"));
        }
        let mut points = vec![self.base];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for i in 0..axis.len() {
                    let mut q = *p;
                    axis.apply(&mut q, i)?;
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, seed: 0 }
    }
}

/// Fold label per row. Rows are shuffled within each MAC and dealt
/// round-robin so every fold sees every MAC; if some MAC has fewer rows than
/// folds, rows are dealt unstratified and a warning is returned.
pub fn assign_folds(data: &FeatureMatrix, cv: &CvConfig) -> Result<(Vec<usize>, Vec<Warning>), EvalError> {
    let n = data.n_rows();
    if cv.folds < 2 || cv.folds > n {
        return Err(EvalError::Folds { folds: cv.folds, rows: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    let mut groups: BTreeMap<MacAddr, Vec<usize>> = BTreeMap::new();
    for (i, mac) in data.macs().iter().enumerate() {
        groups.entry(*mac).or_default().push(i);
    }
    let mut fold = vec![0; n];
    let mut warnings = Vec::new();
    if let Some((mac, rows)) = groups.iter().find(|(_, r)| r.len() < cv.folds) {
        warnings.push(Warning::UnstratifiedFolds {
            mac: *mac,
            samples: rows.len(),
            folds: cv.folds,
        });
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for (j, i) in all.into_iter().enumerate() {
            fold[i] = j % cv.folds;
        }
    } else {
        let mut dealt = 0;
        for rows in groups.values_mut() {
            rows.shuffle(&mut rng);
            for &i in rows.iter() {
                fold[i] = dealt % cv.folds;
                dealt += 1;
            }
        }
    }
    Ok((fold, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub spec: RegressorSpec,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// One row per grid point, in grid order.
    pub table: Vec<GridRow>,
    /// Index into `table` of the winner.
    pub best: usize,
    pub warnings: Vec<Warning>,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.table[self.best]
    }
}

fn tie_key(spec: &RegressorSpec) -> (usize, f64) {
    match spec {
        RegressorSpec::Knn(s) | RegressorSpec::PerMacKnn(s) => (s.k, s.mac_scale),
        RegressorSpec::Mlp(s) => (s.hidden_units, 1.0),
        _ => (0, 1.0),
    }
}

/// Scores every grid point by k-fold cross-validation on `train` and picks
/// the lowest mean fold RMSE. Ties go to the smaller k, then the smaller
/// MAC scale, then the earlier grid point.
pub fn grid_search(grid: &GridSpec, train: &FeatureMatrix, cv: &CvConfig) -> Result<GridResult, EvalError> {
    let points = grid.points()?;
    let (fold_of, warnings) = assign_folds(train, cv)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..cv.folds)
        .map(|f| {
            let (val, fit): (Vec<usize>, Vec<usize>) = (0..train.n_rows()).partition(|&i| fold_of[i] == f);
            (fit, val)
        })
        .collect();

    let mut scores = vec![Vec::with_capacity(cv.folds); points.len()];
    if grid.base.family() == Family::Knn {
        knn_fold_scores(&points, train, &folds, &mut scores)?;
    } else {
        for (spec, out) in points.iter().zip(scores.iter_mut()) {
            for (fit_rows, val_rows) in &folds {
                let model = fit(spec, &train.select(fit_rows))?;
                let val = train.select(val_rows);
                let pred = model.predict(&val)?;
                out.push(rmse(&pred.values, val.targets())?);
            }
        }
    }

    let table: Vec<GridRow> = points
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (spec, fold_rmse))| GridRow {
            index,
            spec,
            mean_rmse: fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64,
            fold_rmse,
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| {
            let (ka, sa) = tie_key(&a.spec);
            let (kb, sb) = tie_key(&b.spec);
            a.mean_rmse
                .total_cmp(&b.mean_rmse)
                .then(ka.cmp(&kb))
                .then(sa.total_cmp(&sb))
                .then(a.index.cmp(&b.index))
        })
        .map(|r| r.index)
        .unwrap_or(0);
    Ok(GridResult { table, best, warnings })
}

/// kNN points sharing a MAC scale share neighbour lists: each validation
/// row is searched once for the largest k, and every (k, weighting) point
/// reads a prefix of that list. Results equal fitting each point separately.
fn knn_fold_scores(
    points: &[RegressorSpec],
    train: &FeatureMatrix,
    folds: &[(Vec<usize>, Vec<usize>)],
    scores: &mut [Vec<f64>],
) -> Result<(), EvalError> {
    let specs: Vec<KnnSpec> = points
        .iter()
        .map(|p| match p {
            RegressorSpec::Knn(s) if s.k > 0 && s.mac_scale.is_finite() && s.mac_scale >= 1.0 => Ok(*s),
            RegressorSpec::Knn(_) => Err(EvalError::Fit(FitError::InvalidSpec("k >= 1 and mac_scale >= 1 required"))),
            _ => Err(EvalError::Grid("mixed families in one grid")),
        })
        .collect::<Result<_, _>>()?;
    let mut scales: Vec<f64> = specs.iter().map(|s| s.mac_scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let k_max = specs.iter().map(|s| s.k).max().unwrap_or(1);
    let projector = Projector::new(train.layout(), true);

    for (fit_rows, val_rows) in folds {
        let queries: Vec<_> = val_rows.iter().map(|&i| projector.project(train.row(i))).collect();
        let truths: Vec<f64> = val_rows.iter().map(|&i| train.targets()[i]).collect();
        for &scale in &scales {
            let index = KnnIndex::build(train, Some(fit_rows), true, scale);
            let lists: Vec<_> = queries.iter().map(|q| index.neighbors(q, k_max)).collect();
            for (spec, out) in specs.iter().zip(scores.iter_mut()) {
                if spec.mac_scale.to_bits() != scale.to_bits() {
                    continue;
                }
                let pred: Vec<f64> = lists
                    .iter()
                    .map(|l| aggregate(&l[..spec.k.min(l.len())], index.targets(), spec.weighting))
                    .collect();
                out.push(rmse(&pred, &truths)?);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeaconSample, Dataset, Position};
    use crate::preprocess::{encode, EncodingSpec};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // errors 3 and -4: sqrt(25 / 2)
        let r = rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap();
        assert!((r - 3.535_533_905_932_737_6).abs() < 1e-12);
        assert_eq!(rmse(&[5.0], &[0.0]).unwrap(), 5.0);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2)));
        assert_eq!(rmse(&[], &[]), Err(EvalError::Empty));
    }

    fn synthetic(n: usize, n_macs: u8, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let m = (i % n_macs as usize) as u8;
                let p = Position::new(rng.random_range(0.0..3.74), rng.random_range(0.0..3.2), rng.random_range(0.0..2.1));
                // smooth field per MAC plus noise
                let rssi = -50.0 - 8.0 * f64::from(m) - 4.0 * p.x + rng.random_range(-1.0..1.0);
                BeaconSample {
                    timestamp: 0,
                    position: p,
                    ssid: "".into(),
                    mac: MacAddr([0, 1, 2, 3, 4, m]),
                    rssi: libm::round(rssi).clamp(-100.0, 0.0) as i32,
                    channel: 1,
                }
            })
            .collect();
        encode(&Dataset::new(samples, "syn"), EncodingSpec::default()).unwrap()
    }

    #[test]
    fn constant_targets_give_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<_> = (0..10)
            .map(|_| BeaconSample {
                timestamp: 0,
                position: Position::new(rng.random_range(0.0..1.0), 0.0, 0.0),
                ssid: "".into(),
                mac: MacAddr([0; 6]),
                rssi: -64,
                channel: 1,
            })
            .collect();
        let fm = encode(&Dataset::new(samples, "c"), EncodingSpec::default()).unwrap();
        let model = fit(&RegressorSpec::GlobalMean, &fm).unwrap();
        let report = evaluate(&model, &fm).unwrap();
        assert_eq!(report.rmse, 0.0);
        assert_eq!(report.per_mac.len(), 1);
    }

    #[test]
    fn per_mac_mean_beats_global_mean_on_distinct_aps() {
        let data = synthetic(300, 4, 2);
        let train: Vec<usize> = (0..225).collect();
        let test: Vec<usize> = (225..300).collect();
        let (tr, te) = (data.select(&train), data.select(&test));
        let g = evaluate(&fit(&RegressorSpec::GlobalMean, &tr).unwrap(), &te).unwrap();
        let m = evaluate(&fit(&RegressorSpec::PerMacMean, &tr).unwrap(), &te).unwrap();
        assert!(m.rmse < g.rmse, "{} vs {}", m.rmse, g.rmse);
        assert_eq!(m.per_mac.iter().map(|s| s.n).sum::<usize>(), 75);
    }

    #[test]
    fn grid_points_enumerate_the_product() {
        let g = GridSpec::knn_default();
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 20 * 2 * 20);
        assert_eq!(pts[0], RegressorSpec::Knn(KnnSpec { k: 1, weighting: Weighting::Uniform, mac_scale: 1.0 }));
        assert_eq!(pts[1], RegressorSpec::Knn(KnnSpec { k: 1, weighting: Weighting::Uniform, mac_scale: 2.0 }));
        let bad = GridSpec { base: RegressorSpec::GlobalMean, axes: vec![GridAxis::K(vec![1])] };
        assert!(bad.points().is_err());
        let empty = GridSpec { base: RegressorSpec::Knn(KnnSpec::default()), axes: vec![GridAxis::K(vec![])] };
        assert!(empty.points().is_err());
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let data = synthetic(60, 2, 3);
        let grid = GridSpec { base: RegressorSpec::PerMacMean, axes: vec![] };
        let r = grid_search(&grid, &data, &CvConfig::default()).unwrap();
        assert_eq!(r.table.len(), 1);
        assert_eq!(r.best, 0);
        assert_eq!(r.table[0].fold_rmse.len(), 5);
    }

    #[test]
    fn fast_knn_scores_equal_separate_fits() {
        let data = synthetic(120, 3, 4);
        let grid = GridSpec {
            base: RegressorSpec::Knn(KnnSpec::default()),
            axes: vec![
                GridAxis::K(vec![1, 3, 7]),
                GridAxis::Weighting(vec![Weighting::Uniform, Weighting::InverseDistance]),
                GridAxis::MacScale(vec![1.0, 3.0]),
            ],
        };
        let cv = CvConfig { folds: 4, seed: 9 };
        let fast = grid_search(&grid, &data, &cv).unwrap();
        let (fold_of, _) = assign_folds(&data, &cv).unwrap();
        for row in &fast.table {
            for f in 0..cv.folds {
                let (val, fit_rows): (Vec<usize>, Vec<usize>) = (0..data.n_rows()).partition(|&i| fold_of[i] == f);
                let model = fit(&row.spec, &data.select(&fit_rows)).unwrap();
                let v = data.select(&val);
                let slow = rmse(&model.predict(&v).unwrap().values, v.targets()).unwrap();
                assert_eq!(slow, row.fold_rmse[f]);
            }
        }
    }

    #[test]
    fn winner_has_minimal_score_and_search_is_deterministic() {
        let data = synthetic(150, 3, 5);
        let grid = GridSpec {
            base: RegressorSpec::Knn(KnnSpec::default()),
            axes: vec![GridAxis::K((1..=6).collect()), GridAxis::MacScale(vec![1.0, 2.0, 5.0])],
        };
        let cv = CvConfig { folds: 5, seed: 1 };
        let a = grid_search(&grid, &data, &cv).unwrap();
        let b = grid_search(&grid, &data, &cv).unwrap();
        assert_eq!(a, b);
        let best = a.best_row().mean_rmse;
        assert!(a.table.iter().all(|r| best <= r.mean_rmse));
    }

    #[test]
    fn ties_prefer_smaller_k() {
        // constant targets make every point score zero
        let samples = (0..40)
            .map(|i| BeaconSample {
                timestamp: 0,
                position: Position::new(i as f64 * 0.05, 0.0, 0.0),
                ssid: "".into(),
                mac: MacAddr([0; 6]),
                rssi: -70,
                channel: 1,
            })
            .collect();
        let data = encode(&Dataset::new(samples, "flat"), EncodingSpec::default()).unwrap();
        let grid = GridSpec {
            base: RegressorSpec::Knn(KnnSpec::default()),
            axes: vec![GridAxis::MacScale(vec![4.0, 2.0]), GridAxis::K(vec![9, 3, 5])],
        };
        let r = grid_search(&grid, &data, &CvConfig::default()).unwrap();
        assert_eq!(r.best_row().spec, RegressorSpec::Knn(KnnSpec { k: 3, mac_scale: 2.0, ..KnnSpec::default() }));
    }

    #[test]
    fn folds_fall_back_when_a_mac_is_too_small() {
        let data = synthetic(22, 11, 7);
        let (folds, warnings) = assign_folds(&data, &CvConfig { folds: 3, seed: 0 }).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(folds.iter().all(|&f| f < 3));
        assert!(matches!(assign_folds(&data, &CvConfig { folds: 30, seed: 0 }), Err(EvalError::Folds { .. })));
        let (_, warnings) = assign_folds(&synthetic(60, 3, 7), &CvConfig::default()).unwrap();
        assert!(warnings.is_empty());
    }

    proptest! {
        #[test]
        fn rmse_is_invariant_to_paired_permutation_and_shift(
            pairs in proptest::collection::vec((-100.0f64..0.0, -100.0f64..0.0), 1..50),
            c in -50.0f64..50.0,
            seed in any::<u64>(),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let base = rmse(&p, &t).unwrap();
            prop_assert!(base >= 0.0);
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (sp, st): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            prop_assert!((rmse(&sp, &st).unwrap() - base).abs() < 1e-9);
            let shifted_p: Vec<f64> = p.iter().map(|v| v + c).collect();
            let shifted_t: Vec<f64> = t.iter().map(|v| v + c).collect();
            prop_assert!((rmse(&shifted_p, &shifted_t).unwrap() - base).abs() < 1e-9);
        }
    }
}
