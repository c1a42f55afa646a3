//! Core of the indoor radio-environment-map toolkit.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (an allocator is required). File formats, the bundled
//! scenario and the command line live in the `rem` crate.
//!
//! Modules, roughly in pipeline order:
//!
//! - [`model`]: beacon samples, datasets, the scan volume and anchors
//! - [`stats`]: exploration statistics and histograms
//! - [`preprocess`]: rare-MAC filtering, feature encoding, train/test split
//! - [`regress`]: mean baselines, kNN (global and per MAC) and a one-hidden-layer MLP
//! - [`eval`]: RMSE, per-MAC evaluation and cross-validated grid search
//! - [`rf`]: synthetic access points and log-distance RSSI
//! - [`mission`]: waypoint lattice, route assignment, timing and flight simulation
//! - [`grid`]: dense predicted-RSSI lattices for one MAC
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

use core::fmt;

use serde::{Deserialize, Serialize};

pub mod eval;
pub mod grid;
pub mod mission;
pub mod model;
pub mod preprocess;
pub mod regress;
pub mod rf;
pub mod stats;

pub use model::{BeaconSample, Dataset, MacAddr, Position, VolumeSpec};

/// Non-fatal conditions surfaced by the pipeline. The core never logs;
/// callers decide how to report these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum Warning {
    /// A MAC with a single sample was placed in the training set.
    SingletonMac { mac: MacAddr },
    /// Some MAC has fewer samples than folds, so cross-validation fell back
    /// to unstratified folds.
    UnstratifiedFolds { mac: MacAddr, samples: usize, folds: usize },
    /// A route is expected to take longer than the drone's endurance.
    EnduranceExceeded { drone_id: u32, seconds: f64, limit: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SingletonMac { mac } => {
                write!(f, "mac {mac} has a single sample; placed in train")
            }
            Warning::UnstratifiedFolds { mac, samples, folds } => write!(
                f,
                "mac {mac} has {samples} samples for {folds} folds; using unstratified folds"
            ),
            Warning::EnduranceExceeded { drone_id, seconds, limit } => write!(
                f,
                "drone {drone_id} route takes {seconds:.0} s, over the {limit:.0} s endurance"
            ),
        }
    }
}
