//! The bundled synthetic building and loading of other environments.

use std::path::Path;

use rem_core::rf::{generate_environment, EnvironmentParams, RfEnvironment};

use crate::artifacts::{read_json, ArtifactError};

/// Seed the bundled scenario was generated from.
pub const DEFAULT_SCENARIO_SEED: u64 = 0;

/// 73 access points around the default volume, stored as reviewable JSON.
pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../fixtures/default_scenario.json");

pub fn default_scenario() -> RfEnvironment {
    serde_json::from_str(DEFAULT_SCENARIO_JSON).expect("bundled scenario is valid json")
}

/// Regenerates the bundled scenario from its seed and parameters.
pub fn generate_default_scenario() -> RfEnvironment {
    generate_environment(DEFAULT_SCENARIO_SEED, &EnvironmentParams::default())
}

/// Loads an environment file, or the bundled scenario when `path` is `None`.
pub fn load_scenario(path: Option<&Path>) -> Result<RfEnvironment, ArtifactError> {
    let env = match path {
        None => return Ok(default_scenario()),
        Some(p) => {
            let env: RfEnvironment = read_json(p)?;
            env.validate().map_err(|e| ArtifactError::Invalid {
                path: p.to_path_buf(),
                message: e.to_string(),
            })?;
            env
        }
    };
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn fixture_matches_its_seed() {
        assert_eq!(default_scenario(), generate_default_scenario());
    }

    #[test]
    fn fixture_has_reference_scale() {
        let env = default_scenario();
        env.validate().unwrap();
        assert_eq!(env.aps.len(), 73);
        let channels: BTreeSet<u8> = env.aps.iter().map(|a| a.channel).collect();
        assert_eq!(channels.len(), 5);
        let ssids: BTreeSet<&str> = env.aps.iter().map(|a| a.ssid.as_str()).collect();
        assert!(ssids.len() < 73);
        assert!(env.shadow_sigma <= 2.0);
    }
}
