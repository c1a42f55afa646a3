//! Brute-force k-nearest-neighbour regression over coordinates and a
//! scaled one-hot MAC group.
//!
//! Rows are projected into three parts that mirror the column layout:
//! the leading dense columns (coordinates), the MAC category, and the
//! trailing dense columns (channel one-hots). Squared distance accumulates
//! in column order, so it equals plain Euclidean distance over the full
//! rows with the MAC columns multiplied by the scale, bit for bit.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::preprocess::{FeatureMatrix, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::InverseDistance => "inverse_distance",
        }
    }
}

impl core::fmt::Display for Weighting {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Weighting {
    type Err = alloc::string::String;

    /// Also accepts `distance` and hyphens for underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "uniform" => Ok(Weighting::Uniform),
            "inverse_distance" | "distance" => Ok(Weighting::InverseDistance),
            _ => Err(alloc::format!("unknown weighting {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnSpec {
    pub k: usize,
    pub weighting: Weighting,
    /// Multiplies the hot MAC column on top of whatever value the encoding
    /// put there.
    pub mac_scale: f64,
}

impl Default for KnnSpec {
    fn default() -> Self {
        Self {
            k: 5,
            weighting: Weighting::InverseDistance,
            mac_scale: 1.0,
        }
    }
}

/// Euclidean distance between two encoded rows with the MAC columns
/// multiplied by `mac_scale`.
pub fn knn_distance(a: &[f64], b: &[f64], layout: &Layout, mac_scale: f64) -> f64 {
    libm::sqrt(knn_sq_distance(a, b, layout, mac_scale))
}

/// Square of [`knn_distance`], without the rounding of a square root.
pub fn knn_sq_distance(a: &[f64], b: &[f64], layout: &Layout, mac_scale: f64) -> f64 {
    let macs = layout.mac_range();
    let mut acc = 0.0;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        let d = if macs.contains(&j) {
            x * mac_scale - y * mac_scale
        } else {
            x - y
        };
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// Combines neighbour targets. `neighbors` must be sorted nearest first.
///
/// Inverse-distance weighting uses `w = 1/d`; when any neighbour sits at
/// distance zero the result is the plain mean of those exact matches.
pub fn aggregate(neighbors: &[Neighbor], targets: &[f64], weighting: Weighting) -> f64 {
    debug_assert!(!neighbors.is_empty());
    match weighting {
        Weighting::Uniform => {
            let sum: f64 = neighbors.iter().map(|n| targets[n.index]).sum();
            sum / neighbors.len() as f64
        }
        Weighting::InverseDistance => {
            let exact: Vec<f64> = neighbors
                .iter()
                .filter(|n| n.distance == 0.0)
                .map(|n| targets[n.index])
                .collect();
            if !exact.is_empty() {
                return exact.iter().sum::<f64>() / exact.len() as f64;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for n in neighbors {
                let w = 1.0 / n.distance;
                num += w * targets[n.index];
                den += w;
            }
            num / den
        }
    }
}

/// A row split into the parts the distance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub head: Vec<f64>,
    pub mac: Option<u32>,
    pub tail: Vec<f64>,
}

/// Stored training rows for brute-force neighbour search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnIndex {
    head_dim: usize,
    tail_dim: usize,
    head: Vec<f64>,
    tail: Vec<f64>,
    mac: Vec<Option<u32>>,
    /// Squared value of the scaled hot MAC column.
    mac_weight_sq: f64,
    targets: Vec<f64>,
}

/// Splits encoded rows of `layout` into [`Projected`] parts. With
/// `use_mac = false` the MAC group is ignored entirely.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    layout: &'a Layout,
    use_mac: bool,
}

impl<'a> Projector<'a> {
    pub fn new(layout: &'a Layout, use_mac: bool) -> Self {
        Self { layout, use_mac }
    }

    pub fn project(&self, row: &[f64]) -> Projected {
        let l = self.layout;
        let mac = if self.use_mac {
            row[l.mac_range()]
                .iter()
                .position(|v| *v != 0.0)
                .map(|i| i as u32)
        } else {
            None
        };
        Projected {
            head: row[l.coord_range()].to_vec(),
            mac,
            tail: row[l.channel_range()].to_vec(),
        }
    }

    /// Value of the hot MAC column after scaling, squared.
    pub fn mac_weight_sq(&self, mac_scale: f64) -> f64 {
        let w = self.layout.spec.mac_scale * mac_scale;
        w * w
    }
}

impl KnnIndex {
    /// Indexes the rows of `train` selected by `rows` (all rows when `None`).
    pub fn build(train: &FeatureMatrix, rows: Option<&[usize]>, use_mac: bool, mac_scale: f64) -> Self {
        let projector = Projector::new(train.layout(), use_mac);
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..train.n_rows()).collect();
                &all
            }
        };
        let layout = train.layout();
        let mut index = KnnIndex {
            head_dim: layout.coord_range().len(),
            tail_dim: layout.channel_range().len(),
            head: Vec::with_capacity(rows.len() * layout.coord_range().len()),
            tail: Vec::with_capacity(rows.len() * layout.channel_range().len()),
            mac: Vec::with_capacity(rows.len()),
            mac_weight_sq: projector.mac_weight_sq(mac_scale),
            targets: Vec::with_capacity(rows.len()),
        };
        for &i in rows {
            let p = projector.project(train.row(i));
            index.head.extend_from_slice(&p.head);
            index.tail.extend_from_slice(&p.tail);
            index.mac.push(p.mac);
            index.targets.push(train.targets()[i]);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn mean_target(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.targets.len() as f64
    }

    /// Squared distance from row `i` to `q`, accumulated in column order.
    pub fn sq_distance(&self, i: usize, q: &Projected) -> f64 {
        let head = &self.head[i * self.head_dim..(i + 1) * self.head_dim];
        let mut acc = 0.0;
        for (a, b) in head.iter().zip(&q.head) {
            let d = a - b;
            acc += d * d;
        }
        acc = add_mac_terms(acc, self.mac[i], q.mac, self.mac_weight_sq);
        let tail = &self.tail[i * self.tail_dim..(i + 1) * self.tail_dim];
        for (a, b) in tail.iter().zip(&q.tail) {
            let d = a - b;
            acc += d * d;
        }
        acc
    }

    /// The `k` nearest rows to `q`, nearest first, ties by lower row index.
    /// Returns every row when fewer than `k` exist.
    pub fn neighbors(&self, q: &Projected, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..self.len())
            .map(|i| Neighbor {
                distance: libm::sqrt(self.sq_distance(i, q)),
                index: i,
            })
            .collect();
        select_nearest(&mut all, k);
        all
    }

    pub fn predict(&self, q: &Projected, k: usize, weighting: Weighting) -> f64 {
        aggregate(&self.neighbors(q, k), &self.targets, weighting)
    }
}

/// Adds the one-hot MAC contribution: one `w^2` term per column that differs.
pub fn add_mac_terms(mut acc: f64, a: Option<u32>, b: Option<u32>, weight_sq: f64) -> f64 {
    let terms = match (a, b) {
        (Some(x), Some(y)) if x == y => 0,
        (Some(_), Some(_)) => 2,
        (Some(_), None) | (None, Some(_)) => 1,
        (None, None) => 0,
    };
    for _ in 0..terms {
        acc += weight_sq;
    }
    acc
}

/// Truncates `all` to its `k` smallest entries, sorted.
pub fn select_nearest(all: &mut Vec<Neighbor>, k: usize) {
    let k = k.min(all.len());
    if k == 0 {
        all.clear();
        return;
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_unstable_by(by_distance_then_index);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeaconSample, Dataset, MacAddr, Position};
    use crate::preprocess::{encode, EncodingSpec};
    use alloc::vec;

    fn n(distance: f64, index: usize) -> Neighbor {
        Neighbor { distance, index }
    }

    fn two_mac_layout() -> Layout {
        let ds = Dataset::new(
            [1u8, 2]
                .iter()
                .map(|&m| BeaconSample {
                    timestamp: 0,
                    position: Position::default(),
                    ssid: "".into(),
                    mac: MacAddr([0, 0, 0, 0, 0, m]),
                    rssi: -70,
                    channel: 6,
                })
                .collect(),
            "t",
        );
        encode(&ds, EncodingSpec::default()).unwrap().layout().clone()
    }

    #[test]
    fn distance_identity_and_mac_terms() {
        let l = two_mac_layout();
        let a = [1.0, 2.0, 0.5, 1.0, 0.0];
        let b = [1.0, 2.0, 0.5, 0.0, 1.0];
        assert_eq!(knn_distance(&a, &a, &l, 1.0), 0.0);
        let d = knn_distance(&a, &b, &l, 1.0);
        assert!((d * d - 2.0).abs() < 1e-12);
        let d3 = knn_distance(&a, &b, &l, 3.0);
        assert!((d3 * d3 - 18.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_mean_of_neighbours() {
        let t = [-70.0, -80.0];
        assert_eq!(aggregate(&[n(1.0, 0), n(2.0, 1)], &t, Weighting::Uniform), -75.0);
    }

    #[test]
    fn inverse_distance_weighted_mean() {
        // (-70*1 + -80/3) / (1 + 1/3) = -72.5
        let t = [-70.0, -80.0];
        let p = aggregate(&[n(1.0, 0), n(3.0, 1)], &t, Weighting::InverseDistance);
        assert!((p + 72.5).abs() < 1e-12, "{p}");
    }

    #[test]
    fn exact_matches_short_circuit_weighting() {
        let t = [-60.0, -64.0, -90.0];
        let p = aggregate(&[n(0.0, 0), n(0.0, 1), n(0.5, 2)], &t, Weighting::InverseDistance);
        assert_eq!(p, -62.0);
    }

    #[test]
    fn selection_breaks_ties_by_index() {
        let mut v = vec![n(1.0, 3), n(0.5, 7), n(1.0, 1), n(2.0, 0), n(1.0, 2)];
        select_nearest(&mut v, 3);
        assert_eq!(v, vec![n(0.5, 7), n(1.0, 1), n(1.0, 2)]);
        let mut v = vec![n(1.0, 0)];
        select_nearest(&mut v, 5);
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn mac_terms_count_differing_columns() {
        assert_eq!(add_mac_terms(1.0, Some(0), Some(0), 9.0), 1.0);
        assert_eq!(add_mac_terms(1.0, Some(0), Some(1), 9.0), 19.0);
        assert_eq!(add_mac_terms(1.0, None, Some(1), 9.0), 10.0);
        assert_eq!(add_mac_terms(1.0, None, None, 9.0), 1.0);
    }
}
