//! Effective run configuration: defaults, then a TOML file, then `REM_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use rem_core::eval::{CvConfig, GridAxis, GridSpec};
use rem_core::mission::{HoverSimConfig, LatticeSpec, MissionOptions, TimingModel};
use rem_core::preprocess::{EncodingSpec, SplitConfig};
use rem_core::regress::{Family, KnnSpec, MlpSpec, RegressorSpec, Weighting};
use serde::{Deserialize, Serialize};

use crate::formats::Format;

/// Prefix of the environment variables that mirror the flags.
pub const ENV_PREFIX: &str = "REM_";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives the split, CV folds, MLP initialisation and mission noise.
    pub seed: u64,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub mission: MissionConfig,
    pub map: MapConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_count: usize,
    pub train_fraction: f64,
    pub stratify_by_mac: bool,
    pub encoding: EncodingSpec,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_count: 16,
            train_fraction: 0.75,
            stratify_by_mac: true,
            encoding: EncodingSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub knn: KnnSpec,
    pub mlp: MlpSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::Knn,
            knn: KnnSpec::default(),
            mlp: MlpSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub k: Vec<usize>,
    pub weighting: Vec<Weighting>,
    pub mac_scale: Vec<f64>,
    pub hidden_units: Vec<usize>,
    pub folds: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            k: (1..=20).collect(),
            weighting: vec![Weighting::Uniform, Weighting::InverseDistance],
            mac_scale: (1..=20).map(f64::from).collect(),
            hidden_units: vec![8, 16, 32],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub drones: usize,
    pub lattice: LatticeSpec,
    pub timing: TimingModel,
    pub hover: HoverSimConfig,
    pub options: MissionOptions,
    /// Environment JSON; the bundled default scenario when absent.
    pub scenario: Option<PathBuf>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            drones: 2,
            lattice: LatticeSpec::default(),
            timing: TimingModel::default(),
            hover: HoverSimConfig::default(),
            options: MissionOptions::default(),
            scenario: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub resolution: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { resolution: 0.25 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|source| ConfigError::Toml { path: path.to_path_buf(), source })
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            train_fraction: self.preprocess.train_fraction,
            seed: self.seed,
            stratify_by_mac: self.preprocess.stratify_by_mac,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            folds: self.grid.folds,
            seed: self.seed,
        }
    }

    /// The configured family with its hyperparameters; the MLP seed follows
    /// the run seed.
    pub fn regressor(&self, family: Family) -> RegressorSpec {
        match family {
            Family::GlobalMean => RegressorSpec::GlobalMean,
            Family::PerMacMean => RegressorSpec::PerMacMean,
            Family::Knn => RegressorSpec::Knn(self.model.knn),
            Family::PerMacKnn => RegressorSpec::PerMacKnn(KnnSpec {
                mac_scale: 1.0,
                ..self.model.knn
            }),
            Family::Mlp => RegressorSpec::Mlp(MlpSpec {
                seed: self.seed,
                ..self.model.mlp
            }),
        }
    }

    /// Grid over the axes that apply to `family`.
    pub fn grid_spec(&self, family: Family) -> GridSpec {
        let g = &self.grid;
        let axes = match family {
            Family::Knn => vec![
                GridAxis::K(g.k.clone()),
                GridAxis::Weighting(g.weighting.clone()),
                GridAxis::MacScale(g.mac_scale.clone()),
            ],
            Family::PerMacKnn => vec![GridAxis::K(g.k.clone()), GridAxis::Weighting(g.weighting.clone())],
            Family::Mlp => vec![GridAxis::HiddenUnits(g.hidden_units.clone())],
            Family::GlobalMean | Family::PerMacMean => Vec::new(),
        };
        GridSpec {
            base: self.regressor(family),
            axes,
        }
    }

    pub fn mission_options(&self) -> MissionOptions {
        self.mission.options
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml_str(
            "seed = 7\n[preprocess]\nmin_count = 10\n[model.knn]\nk = 16\nweighting = \"uniform\"\n[mission.timing]\ntakeoff_seconds = 0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.preprocess.min_count, 10);
        assert_eq!(cfg.preprocess.train_fraction, 0.75);
        assert_eq!(cfg.model.knn, KnnSpec { k: 16, weighting: Weighting::Uniform, mac_scale: 1.0 });
        assert_eq!(cfg.mission.timing.takeoff_seconds, 0.0);
        assert_eq!(cfg.mission.timing.land_seconds, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("sed = 7\n").is_err());
    }

    #[test]
    fn default_knn_grid_has_800_points() {
        assert_eq!(RunConfig::default().grid_spec(Family::Knn).points().unwrap().len(), 800);
        assert_eq!(RunConfig::default().grid_spec(Family::PerMacKnn).points().unwrap().len(), 40);
    }
}
