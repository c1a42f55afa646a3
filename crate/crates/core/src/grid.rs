//! Dense predicted-RSSI lattices over the scan volume for one MAC.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{MacAddr, Position, VolumeSpec};
use crate::regress::{Family, PredictError, TrainedModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("resolution must be finite and > 0, got {0}")]
    Resolution(f64),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("model produced a non-finite value at lattice index {0}")]
    NonFinite(usize),
}

/// Predicted RSSI on the lattice `(ix, iy, iz) * resolution`, endpoints
/// included. Values are stored ix-major: index `(ix * ny + iy) * nz + iz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemGrid {
    pub volume: VolumeSpec,
    pub resolution: f64,
    pub mac: MacAddr,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
    pub family: Family,
    pub trained_on: String,
    /// True when the model had not seen `mac` and fell back.
    pub fallback: bool,
}

/// Points per axis: `floor(len / resolution) + 1`. The small slack keeps
/// exact multiples (3.0 / 0.5) from losing their last point to rounding.
pub fn lattice_dims(volume: &VolumeSpec, resolution: f64) -> Result<[usize; 3], GridError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(GridError::Resolution(resolution));
    }
    Ok(volume.extents().map(|len| libm::floor(len / resolution + 1e-9) as usize + 1))
}

impl RemGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> Position {
        let r = self.resolution;
        Position::new(ix as f64 * r, iy as f64 * r, iz as f64 * r)
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    /// Lattice positions in storage order.
    pub fn positions(&self) -> Vec<Position> {
        lattice_positions(self.dims, self.resolution)
    }
}

fn lattice_positions(dims: [usize; 3], resolution: f64) -> Vec<Position> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            for iz in 0..dims[2] {
                out.push(Position::new(ix as f64 * resolution, iy as f64 * resolution, iz as f64 * resolution));
            }
        }
    }
    out
}

/// Evaluates `model` for `mac` at every lattice point.
pub fn predict_grid(
    model: &TrainedModel,
    volume: &VolumeSpec,
    resolution: f64,
    mac: MacAddr,
) -> Result<RemGrid, GridError> {
    let dims = lattice_dims(volume, resolution)?;
    let positions = lattice_positions(dims, resolution);
    let query = model.layout.query_rows(&positions, mac);
    let prediction = model.predict(&query)?;
    if let Some(i) = prediction.values.iter().position(|v| !v.is_finite()) {
        return Err(GridError::NonFinite(i));
    }
    Ok(RemGrid {
        volume: *volume,
        resolution,
        mac,
        dims,
        values: prediction.values,
        family: model.family(),
        trained_on: model.trained_on.clone(),
        fallback: !prediction.flagged_rows.is_empty(),
    })
}
