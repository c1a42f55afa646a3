//! Rare-MAC filtering, numeric feature encoding and the train/test split.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, MacAddr, Position};
use crate::Warning;

/// Keeps the samples whose MAC occurs at least `min_count` times. Returns the
/// filtered dataset (order preserved) and the number of dropped samples.
pub fn filter_rare_macs(dataset: &Dataset, min_count: usize) -> (Dataset, usize) {
    let mut counts: BTreeMap<MacAddr, usize> = BTreeMap::new();
    for s in dataset {
        *counts.entry(s.mac).or_default() += 1;
    }
    let samples: Vec<_> = dataset
        .iter()
        .filter(|s| counts[&s.mac] >= min_count)
        .cloned()
        .collect();
    let dropped = dataset.len() - samples.len();
    (
        Dataset::new(samples, format!("{} | min_count={min_count}", dataset.provenance)),
        dropped,
    )
}

/// Which feature groups enter the matrix, and how far apart one-hot MAC
/// categories are pushed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingSpec {
    pub use_coords: bool,
    pub use_mac_onehot: bool,
    pub use_channel_onehot: bool,
    /// Value carried by the hot MAC column. 1 is plain one-hot.
    pub mac_scale: f64,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self {
            use_coords: true,
            use_mac_onehot: true,
            use_channel_onehot: false,
            mac_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("at least one feature group must be enabled")]
    NoFeatures,
    #[error("mac_scale must be finite and >= 1, got {0}")]
    MacScale(f64),
    #[error("cannot fit an encoding on an empty dataset")]
    EmptyDataset,
}

impl EncodingSpec {
    pub fn validate(&self) -> Result<(), EncodeError> {
        if !(self.use_coords || self.use_mac_onehot || self.use_channel_onehot) {
            return Err(EncodeError::NoFeatures);
        }
        if !(self.mac_scale.is_finite() && self.mac_scale >= 1.0) {
            return Err(EncodeError::MacScale(self.mac_scale));
        }
        Ok(())
    }
}

/// Column layout learned from a training dataset: `[x, y, z]`, then one
/// column per MAC (sorted), then one per channel (sorted), restricted to the
/// enabled groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub spec: EncodingSpec,
    pub macs: Vec<MacAddr>,
    pub channels: Vec<u8>,
    /// Most frequent channel per MAC in the fitting data; used when rows are
    /// synthesized for positions that were never observed.
    pub mac_channels: BTreeMap<MacAddr, u8>,
}

impl Layout {
    pub fn fit(dataset: &Dataset, spec: EncodingSpec) -> Result<Layout, EncodeError> {
        spec.validate()?;
        if dataset.is_empty() {
            return Err(EncodeError::EmptyDataset);
        }
        let mut per_mac: BTreeMap<MacAddr, BTreeMap<u8, usize>> = BTreeMap::new();
        for s in dataset {
            *per_mac.entry(s.mac).or_default().entry(s.channel).or_default() += 1;
        }
        let mut channels: Vec<u8> = dataset.iter().map(|s| s.channel).collect();
        channels.sort_unstable();
        channels.dedup();
        let mac_channels = per_mac
            .iter()
            .map(|(mac, counts)| {
                // ties resolve to the lowest channel
                let best = counts
                    .iter()
                    .fold((0u8, 0usize), |acc, (&ch, &n)| if n > acc.1 { (ch, n) } else { acc });
                (*mac, best.0)
            })
            .collect();
        Ok(Layout {
            spec,
            macs: per_mac.keys().copied().collect(),
            channels,
            mac_channels,
        })
    }

    pub fn coord_range(&self) -> Range<usize> {
        if self.spec.use_coords {
            0..3
        } else {
            0..0
        }
    }

    pub fn mac_range(&self) -> Range<usize> {
        let start = self.coord_range().end;
        let len = if self.spec.use_mac_onehot { self.macs.len() } else { 0 };
        start..start + len
    }

    pub fn channel_range(&self) -> Range<usize> {
        let start = self.mac_range().end;
        let len = if self.spec.use_channel_onehot { self.channels.len() } else { 0 };
        start..start + len
    }

    pub fn width(&self) -> usize {
        self.channel_range().end
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::with_capacity(self.width());
        if self.spec.use_coords {
            cols.extend(["x", "y", "z"].map(String::from));
        }
        if self.spec.use_mac_onehot {
            cols.extend(self.macs.iter().map(|m| format!("mac={m}")));
        }
        if self.spec.use_channel_onehot {
            cols.extend(self.channels.iter().map(|c| format!("channel={c}")));
        }
        cols
    }

    pub fn mac_index(&self, mac: &MacAddr) -> Option<usize> {
        self.macs.binary_search(mac).ok()
    }

    /// Appends one encoded row. Returns false when the MAC or channel is
    /// outside the vocabulary, in which case that group is all zeros.
    fn push_row(&self, out: &mut Vec<f64>, position: &Position, mac: &MacAddr, channel: u8) -> bool {
        let mut known = true;
        if self.spec.use_coords {
            out.extend_from_slice(&position.coords());
        }
        if self.spec.use_mac_onehot {
            let hot = self.mac_index(mac);
            known &= hot.is_some();
            out.extend((0..self.macs.len()).map(|i| if Some(i) == hot { self.spec.mac_scale } else { 0.0 }));
        }
        if self.spec.use_channel_onehot {
            let hot = self.channels.binary_search(&channel).ok();
            known &= hot.is_some();
            out.extend((0..self.channels.len()).map(|i| if Some(i) == hot { 1.0 } else { 0.0 }));
        }
        known
    }

    /// Encodes a dataset with this layout.
    pub fn transform(&self, dataset: &Dataset) -> FeatureMatrix {
        let mut data = Vec::with_capacity(dataset.len() * self.width());
        let mut unknown = Vec::new();
        for (i, s) in dataset.iter().enumerate() {
            if !self.push_row(&mut data, &s.position, &s.mac, s.channel) {
                unknown.push(i);
            }
        }
        FeatureMatrix {
            layout: self.clone(),
            data,
            targets: dataset.iter().map(|s| f64::from(s.rssi)).collect(),
            macs: dataset.iter().map(|s| s.mac).collect(),
            unknown_rows: unknown,
        }
    }

    /// Query rows for `mac` at arbitrary positions. Targets are NaN.
    pub fn query_rows(&self, positions: &[Position], mac: MacAddr) -> FeatureMatrix {
        let channel = self
            .mac_channels
            .get(&mac)
            .copied()
            .or_else(|| self.channels.first().copied())
            .unwrap_or(1);
        let mut data = Vec::with_capacity(positions.len() * self.width());
        let mut unknown = Vec::new();
        for (i, p) in positions.iter().enumerate() {
            if !self.push_row(&mut data, p, &mac, channel) {
                unknown.push(i);
            }
        }
        FeatureMatrix {
            layout: self.clone(),
            data,
            targets: alloc::vec![f64::NAN; positions.len()],
            macs: alloc::vec![mac; positions.len()],
            unknown_rows: unknown,
        }
    }
}

/// Dense row-major feature matrix with per-row targets (dBm) and MAC keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    layout: Layout,
    data: Vec<f64>,
    targets: Vec<f64>,
    macs: Vec<MacAddr>,
    unknown_rows: Vec<usize>,
}

impl FeatureMatrix {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn columns(&self) -> Vec<String> {
        self.layout.columns()
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn macs(&self) -> &[MacAddr] {
        &self.macs
    }

    /// Rows whose MAC or channel was not in the layout vocabulary.
    pub fn unknown_rows(&self) -> &[usize] {
        &self.unknown_rows
    }

    /// Rows at `indices`, in that order, sharing this matrix's layout.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let w = self.width();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let unknown = indices
            .iter()
            .enumerate()
            .filter(|(_, i)| self.unknown_rows.binary_search(i).is_ok())
            .map(|(j, _)| j)
            .collect();
        FeatureMatrix {
            layout: self.layout.clone(),
            data,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            macs: indices.iter().map(|&i| self.macs[i]).collect(),
            unknown_rows: unknown,
        }
    }
}

/// Fits a layout on `dataset` and encodes it.
pub fn encode(dataset: &Dataset, spec: EncodingSpec) -> Result<FeatureMatrix, EncodeError> {
    Ok(Layout::fit(dataset, spec)?.transform(dataset))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by_mac: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
            stratify_by_mac: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// Ascending indices into the input dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub warnings: Vec<Warning>,
}

/// Target train size: `round(fraction * n)`, kept within `1..=n-1`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (libm::round(fraction * n as f64) as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Seeded train/test partition.
///
/// In stratified mode every MAC keeps roughly `fraction` of its samples in
/// train (largest-remainder allocation to hit the exact total), and every MAC
/// with at least one sample has at least one train sample. A MAC with a
/// single sample goes to train and raises a warning.
pub fn split(dataset: &Dataset, config: &SplitConfig) -> Result<Split, SplitError> {
    let n = dataset.len();
    if n < 2 {
        return Err(SplitError::TooFewSamples(n));
    }
    let f = config.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(SplitError::Fraction(f));
    }
    let target = train_size(n, f);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut warnings = Vec::new();

    let mut train: Vec<usize> = if config.stratify_by_mac {
        let mut groups: BTreeMap<MacAddr, Vec<usize>> = BTreeMap::new();
        for (i, s) in dataset.iter().enumerate() {
            groups.entry(s.mac).or_default().push(i);
        }
        let mut groups: Vec<(MacAddr, Vec<usize>)> = groups.into_iter().collect();
        for (mac, idx) in groups.iter_mut() {
            idx.shuffle(&mut rng);
            if idx.len() == 1 {
                warnings.push(Warning::SingletonMac { mac: *mac });
            }
        }
        let sizes: Vec<usize> = groups.iter().map(|(_, g)| g.len()).collect();
        let quotas = allocate(&sizes, f, target);
        groups
            .iter()
            .zip(quotas)
            .flat_map(|((_, g), q)| g[..q].iter().copied())
            .collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(target);
        all
    };
    train.sort_unstable();

    let mut in_train = alloc::vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok(Split {
        train: dataset.select(&train, format!("{} | train", dataset.provenance)),
        test: dataset.select(&test, format!("{} | test", dataset.provenance)),
        train_indices: train,
        test_indices: test,
        warnings,
    })
}

/// Per-group train counts: floor of the proportional quota, at least one per
/// non-empty group, then nudged by remainder until the sum hits `target`.
fn allocate(sizes: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let quota: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut alloc: Vec<usize> = sizes
        .iter()
        .zip(&quota)
        .map(|(&s, &q)| (libm::floor(q) as usize).max(1).min(s))
        .collect();
    let remainder = |i: usize| quota[i] - libm::floor(quota[i]);

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let mut total: usize = alloc.iter().sum();
    if total < target {
        order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)));
        while total < target {
            let before = total;
            for &g in &order {
                if total == target {
                    break;
                }
                if alloc[g] < sizes[g] {
                    alloc[g] += 1;
                    total += 1;
                }
            }
            if total == before {
                break;
            }
        }
    } else if total > target {
        order.sort_by(|&a, &b| remainder(a).total_cmp(&remainder(b)));
        while total > target {
            let before = total;
            for &g in &order {
                if total == target {
                    break;
                }
                if alloc[g] > 1 {
                    alloc[g] -= 1;
                    total -= 1;
                }
            }
            if total == before {
                break;
            }
        }
    }
    alloc
}
