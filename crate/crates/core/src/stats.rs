//! Exploration statistics and histograms over a dataset.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{Dataset, MacAddr};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("bin width must be finite and positive")]
    BinWidth,
}

/// Headline characteristics of a sample collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_samples: usize,
    pub distinct_macs: usize,
    pub distinct_ssids: usize,
    pub distinct_channels: usize,
    pub mean_rssi: f64,
    /// Lower-middle element for even counts, so always an observed value.
    pub median_rssi: f64,
}

pub fn compute_stats(dataset: &Dataset) -> Result<StatsReport, StatsError> {
    if dataset.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let macs: BTreeSet<MacAddr> = dataset.iter().map(|s| s.mac).collect();
    let ssids: BTreeSet<&str> = dataset.iter().map(|s| s.ssid.as_str()).collect();
    let channels: BTreeSet<u8> = dataset.iter().map(|s| s.channel).collect();

    let mut rssi: Vec<i32> = dataset.iter().map(|s| s.rssi).collect();
    rssi.sort_unstable();
    // integer sum is exact and order independent
    let sum: i64 = rssi.iter().map(|&r| i64::from(r)).sum();
    let n = rssi.len();

    Ok(StatsReport {
        n_samples: n,
        distinct_macs: macs.len(),
        distinct_ssids: ssids.len(),
        distinct_channels: channels.len(),
        mean_rssi: sum as f64 / n as f64,
        median_rssi: f64::from(rssi[(n - 1) / 2]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// What a histogram groups samples by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistogramKey {
    Mac,
    Channel,
    AxisBin { axis: Axis, bin_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub key: HistogramKey,
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Counts samples per MAC, per channel, or per half-open coordinate bin.
///
/// MAC and channel histograms are sorted by descending count, ties by
/// ascending key. Axis histograms run contiguously from the bin holding 0
/// (or the lowest occupied bin, if lower) up to the highest occupied bin.
pub fn histogram(dataset: &Dataset, key: HistogramKey) -> Result<Histogram, StatsError> {
    if dataset.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let bins = match key {
        HistogramKey::Mac => ranked(dataset.iter().map(|s| s.mac)),
        HistogramKey::Channel => ranked(dataset.iter().map(|s| s.channel)),
        HistogramKey::AxisBin { axis, bin_width } => {
            if !(bin_width.is_finite() && bin_width > 0.0) {
                return Err(StatsError::BinWidth);
            }
            axis_bins(dataset, axis, bin_width)
        }
    };
    Ok(Histogram { key, bins })
}

fn ranked<K: Ord + ToString>(keys: impl Iterator<Item = K>) -> Vec<Bin> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    let mut pairs: Vec<(K, usize)> = counts.into_iter().collect();
    // stable sort keeps ascending key order among equal counts
    pairs.sort_by_key(|p| core::cmp::Reverse(p.1));
    pairs
        .into_iter()
        .map(|(k, count)| Bin {
            label: k.to_string(),
            count,
        })
        .collect()
}

fn axis_bins(dataset: &Dataset, axis: Axis, width: f64) -> Vec<Bin> {
    let idx: Vec<i64> = dataset
        .iter()
        .map(|s| libm::floor(s.position.coords()[axis.index()] / width) as i64)
        .collect();
    let lo = idx.iter().copied().min().unwrap_or(0).min(0);
    let hi = idx.iter().copied().max().unwrap_or(0);
    let mut counts = alloc::vec![0usize; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(j, count)| {
            let k = lo + j as i64;
            Bin {
                label: format!("[{},{})", k as f64 * width, (k + 1) as f64 * width),
                count,
            }
        })
        .collect()
}

/// Per-MAC sample count next to the number of distinct positions it was
/// heard at. The two differ when a scan reports an AP more than once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacCoverage {
    pub mac: MacAddr,
    pub samples: usize,
    pub distinct_positions: usize,
}

/// Coverage rows sorted like the MAC histogram (descending samples).
pub fn mac_coverage(dataset: &Dataset) -> Vec<MacCoverage> {
    let mut per_mac: BTreeMap<MacAddr, (usize, BTreeSet<[u64; 3]>)> = BTreeMap::new();
    for s in dataset {
        let entry = per_mac.entry(s.mac).or_default();
        entry.0 += 1;
        let p = s.position;
        entry.1.insert([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]);
    }
    let mut rows: Vec<MacCoverage> = per_mac
        .into_iter()
        .map(|(mac, (samples, positions))| MacCoverage {
            mac,
            samples,
            distinct_positions: positions.len(),
        })
        .collect();
    rows.sort_by_key(|r| core::cmp::Reverse(r.samples));
    rows
}

/// Number of distinct positions in the dataset (the scanned locations).
pub fn distinct_positions(dataset: &Dataset) -> usize {
    dataset
        .iter()
        .map(|s| {
            let p = s.position;
            [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
        })
        .collect::<BTreeSet<_>>()
        .len()
}
