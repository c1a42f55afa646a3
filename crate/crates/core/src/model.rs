//! Domain types shared by every stage: positions, beacon samples, datasets,
//! the scan volume and the positioning anchor layout.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Lowest RSSI accepted for a sample, in dBm.
pub const RSSI_MIN: i32 = -100;
/// Highest RSSI accepted for a sample, in dBm.
pub const RSSI_MAX: i32 = 0;
/// Valid 2.4 GHz channel numbers.
pub const CHANNEL_RANGE: core::ops::RangeInclusive<u8> = 1..=14;

/// A point in the scan-volume frame, in meters. Anchor 0 is the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        libm::sqrt(dx * dx + dy * dy + dz * dz)
    }

    pub fn offset(&self, d: [f64; 3]) -> Position {
        Position::new(self.x + d[0], self.y + d[1], self.z + d[2])
    }

    /// True when the point lies inside the closed box `[0, len]` on every axis.
    pub fn in_volume(&self, volume: &VolumeSpec) -> bool {
        (0.0..=volume.x_len).contains(&self.x)
            && (0.0..=volume.y_len).contains(&self.y)
            && (0.0..=volume.z_len).contains(&self.z)
    }
}

/// Hardware address of a radio. Ordering is byte order, which equals the
/// ordering of the canonical lowercase text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed mac address {0:?}")]
pub struct MacParseError(pub String);

impl FromStr for MacAddr {
    type Err = MacParseError;

    /// Accepts six two-digit hex octets separated by `:` or `-`, any case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MacParseError(s.to_string());
        let sep = if s.contains('-') { '-' } else { ':' };
        let mut out = [0u8; 6];
        let mut parts = s.split(sep);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(err)?;
            if part.len() != 2 || !part.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(err());
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| err())?;
        }
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(MacAddr(out))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = MacAddr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a mac address like aa:bb:cc:dd:ee:ff")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<MacAddr, E> {
                v.parse().map_err(E::custom)
            }
        }
        deserializer.deserialize_str(Visitor)
    }
}

/// One received beacon: where the drone was, what it heard, and how loud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconSample {
    /// Milliseconds since the Unix epoch, stamped by the base station.
    pub timestamp: u64,
    pub position: Position,
    pub ssid: String,
    pub mac: MacAddr,
    /// dBm
    pub rssi: i32,
    pub channel: u8,
}

/// Unchecked field values as they come out of an input record.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample<'a> {
    pub timestamp: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ssid: &'a str,
    pub rssi: i64,
    pub mac: &'a str,
    pub channel: i64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("timestamp out of range: {0}")]
    Timestamp(i64),
    #[error("non-finite coordinate {axis}: {value}")]
    Coordinate { axis: char, value: f64 },
    #[error("rssi out of range: {0} dBm (expected -100..=0)")]
    Rssi(i64),
    #[error("channel out of range: {0} (expected 1..=14)")]
    Channel(i64),
    #[error("malformed mac address {0:?}")]
    Mac(String),
}

impl ValidationError {
    /// Name of the offending input field.
    pub fn field(&self) -> &'static str {
        match self {
            ValidationError::Timestamp(_) => "timestamp",
            ValidationError::Coordinate { axis: 'x', .. } => "x",
            ValidationError::Coordinate { axis: 'y', .. } => "y",
            ValidationError::Coordinate { .. } => "z",
            ValidationError::Rssi(_) => "rssi",
            ValidationError::Channel(_) => "channel",
            ValidationError::Mac(_) => "mac",
        }
    }
}

/// Checks raw field values and returns a canonical sample (lowercase MAC).
pub fn validate_sample(raw: &RawSample<'_>) -> Result<BeaconSample, ValidationError> {
    if raw.timestamp < 0 {
        return Err(ValidationError::Timestamp(raw.timestamp));
    }
    for (axis, value) in [('x', raw.x), ('y', raw.y), ('z', raw.z)] {
        if !value.is_finite() {
            return Err(ValidationError::Coordinate { axis, value });
        }
    }
    if !(i64::from(RSSI_MIN)..=i64::from(RSSI_MAX)).contains(&raw.rssi) {
        return Err(ValidationError::Rssi(raw.rssi));
    }
    let channel = u8::try_from(raw.channel)
        .ok()
        .filter(|c| CHANNEL_RANGE.contains(c))
        .ok_or(ValidationError::Channel(raw.channel))?;
    let mac = raw
        .mac
        .parse::<MacAddr>()
        .map_err(|_| ValidationError::Mac(raw.mac.to_string()))?;
    Ok(BeaconSample {
        timestamp: raw.timestamp as u64,
        position: Position::new(raw.x, raw.y, raw.z),
        ssid: raw.ssid.to_string(),
        mac,
        rssi: raw.rssi as i32,
        channel,
    })
}

impl BeaconSample {
    /// Re-runs validation on this sample's own fields.
    pub fn revalidate(&self) -> Result<BeaconSample, ValidationError> {
        let mac = self.mac.to_string();
        validate_sample(&RawSample {
            timestamp: self.timestamp as i64,
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            ssid: &self.ssid,
            rssi: i64::from(self.rssi),
            mac: &mac,
            channel: i64::from(self.channel),
        })
    }
}

/// An ordered collection of validated samples plus a label saying where
/// they came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<BeaconSample>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(samples: Vec<BeaconSample>, provenance: impl Into<String>) -> Self {
        Self {
            samples,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, BeaconSample> {
        self.samples.iter()
    }

    /// Sub-dataset made of the samples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize], provenance: impl Into<String>) -> Dataset {
        Dataset::new(
            indices.iter().map(|&i| self.samples[i].clone()).collect(),
            provenance,
        )
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a BeaconSample;
    type IntoIter = core::slice::Iter<'a, BeaconSample>;
    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("volume extents must be finite and positive, got ({0}, {1}, {2})")]
pub struct VolumeError(pub f64, pub f64, pub f64);

/// Axis-aligned scan volume anchored at the origin, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub x_len: f64,
    pub y_len: f64,
    pub z_len: f64,
}

impl VolumeSpec {
    pub fn new(x_len: f64, y_len: f64, z_len: f64) -> Result<Self, VolumeError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(x_len) && ok(y_len) && ok(z_len) {
            Ok(Self { x_len, y_len, z_len })
        } else {
            Err(VolumeError(x_len, y_len, z_len))
        }
    }

    pub fn extents(&self) -> [f64; 3] {
        [self.x_len, self.y_len, self.z_len]
    }

    pub fn center(&self) -> Position {
        Position::new(self.x_len / 2.0, self.y_len / 2.0, self.z_len / 2.0)
    }
}

impl Default for VolumeSpec {
    /// The living-room cuboid: 3.74 m x 3.20 m x 2.10 m.
    fn default() -> Self {
        Self {
            x_len: 3.74,
            y_len: 3.20,
            z_len: 2.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u8,
    pub position: Position,
}

/// The eight UWB anchors of the positioning system. Carried as metadata;
/// ranging itself is not modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLayout {
    pub anchors: Vec<Anchor>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnchorLayoutError {
    #[error("expected 8 anchors, got {0}")]
    Count(usize),
    #[error("anchor ids must be 0..=7 each exactly once")]
    Ids,
    #[error("anchor {0} has a non-finite position")]
    Position(u8),
}

impl AnchorLayout {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, AnchorLayoutError> {
        if anchors.len() != 8 {
            return Err(AnchorLayoutError::Count(anchors.len()));
        }
        let mut seen = [false; 8];
        for a in &anchors {
            let slot = seen.get_mut(a.id as usize).ok_or(AnchorLayoutError::Ids)?;
            if *slot {
                return Err(AnchorLayoutError::Ids);
            }
            *slot = true;
            if !a.position.is_finite() {
                return Err(AnchorLayoutError::Position(a.id));
            }
        }
        Ok(Self { anchors })
    }

    pub fn get(&self, id: u8) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }
}

/// Anchor positions as surveyed in the test room.
pub fn default_anchor_layout() -> AnchorLayout {
    const TABLE: [(u8, f64, f64, f64); 8] = [
        (0, 0.00, 0.00, 0.00),
        (1, 0.00, 2.30, 2.10),
        (2, 3.74, 2.31, 0.00),
        (3, 3.74, 0.00, 2.09),
        (4, 0.00, 0.00, 2.10),
        (5, 0.00, 2.33, 0.00),
        (6, 3.74, 2.30, 2.09),
        (7, 3.74, 0.00, 0.00),
    ];
    AnchorLayout {
        anchors: TABLE
            .iter()
            .map(|&(id, x, y, z)| Anchor {
                id,
                position: Position::new(x, y, z),
            })
            .collect(),
    }
}
