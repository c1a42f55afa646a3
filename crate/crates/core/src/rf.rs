//! Synthetic access points and log-distance path loss with lognormal
//! shadowing, used to generate datasets when no capture is available.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{MacAddr, Position, VolumeSpec, CHANNEL_RANGE, RSSI_MAX, RSSI_MIN};

/// Distances below this are clamped before taking the logarithm.
pub const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub mac: MacAddr,
    pub ssid: String,
    pub channel: u8,
    pub position: Position,
    /// Received power at 1 m, dBm.
    pub tx_power_ref: f64,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfEnvironment {
    pub aps: Vec<AccessPoint>,
    /// Standard deviation of the per-observation shadowing term, dB.
    pub shadow_sigma: f64,
    /// Readings below this level are not reported, dBm.
    pub detection_threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RfError {
    #[error("duplicate access point mac {0}")]
    DuplicateMac(MacAddr),
    #[error("access point {0}: channel {1} out of range")]
    Channel(MacAddr, u8),
    #[error("access point {0}: tx_power_ref {1} outside [-60, -20] dBm")]
    TxPower(MacAddr, f64),
    #[error("access point {0}: invalid position or path-loss exponent")]
    Geometry(MacAddr),
    #[error("shadow_sigma must be finite and >= 0, got {0}")]
    Sigma(f64),
}

impl RfEnvironment {
    pub fn validate(&self) -> Result<(), RfError> {
        if !(self.shadow_sigma.is_finite() && self.shadow_sigma >= 0.0) {
            return Err(RfError::Sigma(self.shadow_sigma));
        }
        let mut seen = BTreeSet::new();
        for ap in &self.aps {
            if !seen.insert(ap.mac) {
                return Err(RfError::DuplicateMac(ap.mac));
            }
            if !CHANNEL_RANGE.contains(&ap.channel) {
                return Err(RfError::Channel(ap.mac, ap.channel));
            }
            if !(-60.0..=-20.0).contains(&ap.tx_power_ref) {
                return Err(RfError::TxPower(ap.mac, ap.tx_power_ref));
            }
            if !ap.position.is_finite() || !(ap.path_loss_exponent.is_finite() && ap.path_loss_exponent > 0.0) {
                return Err(RfError::Geometry(ap.mac));
            }
        }
        Ok(())
    }
}

/// Mean received power at `position`, before shadowing and rounding.
pub fn mean_rssi(ap: &AccessPoint, position: &Position) -> f64 {
    let d = ap.position.distance(position).max(MIN_DISTANCE_M);
    ap.tx_power_ref - 10.0 * ap.path_loss_exponent * libm::log10(d)
}

/// One observation of `ap` at `position`: path loss plus a Gaussian
/// shadowing draw, rounded to whole dBm and clamped to the valid range.
/// `None` when the rounded reading falls below `threshold`.
///
/// Always consumes exactly one normal draw from `rng`, detected or not.
pub fn rssi_at<R: Rng + ?Sized>(
    ap: &AccessPoint,
    position: &Position,
    shadow_sigma: f64,
    threshold: f64,
    rng: &mut R,
) -> Option<i32> {
    let z: f64 = StandardNormal.sample(rng);
    let value = libm::round(mean_rssi(ap, position) + shadow_sigma * z);
    if value < threshold {
        return None;
    }
    Some(value.clamp(f64::from(RSSI_MIN), f64::from(RSSI_MAX)) as i32)
}

/// Knobs for [`generate_environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentParams {
    pub n_aps: usize,
    pub volume: VolumeSpec,
    /// APs are placed uniformly in a ball of this radius around the volume
    /// center, m.
    pub placement_radius: f64,
    /// APs are kept at least this far from the volume center, m.
    pub min_distance: f64,
    pub tx_power_range: (f64, f64),
    pub exponent_range: (f64, f64),
    /// Probability that an AP advertises one of the shared provider SSIDs.
    pub shared_ssid_fraction: f64,
    pub shadow_sigma: f64,
    pub detection_threshold: f64,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self {
            n_aps: 73,
            volume: VolumeSpec::default(),
            placement_radius: 20.0,
            min_distance: 1.5,
            tx_power_range: (-60.0, -53.0),
            exponent_range: (3.0, 3.5),
            shared_ssid_fraction: 0.4,
            shadow_sigma: 2.0,
            detection_threshold: -95.0,
        }
    }
}

/// Provider networks broadcast by many devices in a building.
pub const SHARED_SSIDS: [&str; 4] = ["TelenetWiFree", "telenethomespot", "Proximus Public Wi-Fi", "Proximus Fon"];

/// Channel draw weights in percent. Most of the mass sits on the three
/// non-overlapping channels.
pub const CHANNEL_WEIGHTS: [(u8, u32); 6] = [(1, 31), (6, 32), (11, 31), (3, 2), (9, 2), (13, 2)];

fn draw_channel<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    let total: u32 = CHANNEL_WEIGHTS.iter().map(|w| w.1).sum();
    let mut pick = rng.random_range(0..total);
    for &(ch, w) in &CHANNEL_WEIGHTS {
        if pick < w {
            return ch;
        }
        pick -= w;
    }
    CHANNEL_WEIGHTS[0].0
}

/// Seeded synthetic building: APs scattered around the scan volume with
/// varied power and wall attenuation, channels concentrated on 1/6/11 and
/// some SSIDs shared across MACs.
pub fn generate_environment(seed: u64, params: &EnvironmentParams) -> RfEnvironment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = params.volume.center();
    let r = params.placement_radius.max(params.min_distance);
    let mut macs = BTreeSet::new();
    let mut aps = Vec::with_capacity(params.n_aps);
    while aps.len() < params.n_aps {
        let mut octets: [u8; 6] = rng.random();
        octets[0] &= 0xfe;
        let mac = MacAddr(octets);
        if !macs.insert(mac) {
            continue;
        }
        let position = loop {
            let d = [
                rng.random_range(-r..=r),
                rng.random_range(-r..=r),
                rng.random_range(-r..=r),
            ];
            let norm = libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            if norm <= r && norm >= params.min_distance {
                break center.offset(d);
            }
        };
        let ssid = if rng.random_bool(params.shared_ssid_fraction) {
            String::from(SHARED_SSIDS[rng.random_range(0..SHARED_SSIDS.len())])
        } else {
            format!("WiFi-{:02X}{:02X}", octets[4], octets[5])
        };
        aps.push(AccessPoint {
            mac,
            ssid,
            channel: draw_channel(&mut rng),
            position,
            tx_power_ref: rng.random_range(params.tx_power_range.0..=params.tx_power_range.1),
            path_loss_exponent: rng.random_range(params.exponent_range.0..=params.exponent_range.1),
        });
    }
    RfEnvironment {
        aps,
        shadow_sigma: params.shadow_sigma,
        detection_threshold: params.detection_threshold,
        seed,
    }
}
