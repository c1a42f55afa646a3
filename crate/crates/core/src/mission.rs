//! Waypoint lattices, route assignment, flight-time budgets and a seeded
//! simulation of the scan missions that produce beacon datasets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{BeaconSample, Dataset, Position, VolumeSpec};
use crate::rf::{rssi_at, RfEnvironment};
use crate::Warning;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Position,
    /// Seconds spent scanning at this waypoint.
    pub scan_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Clearance from every face, m.
    pub margin: f64,
    pub scan_seconds: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            nx: 6,
            ny: 4,
            nz: 3,
            margin: 0.2,
            scan_seconds: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MissionError {
    #[error("lattice needs at least one point per axis")]
    EmptyLattice,
    #[error("margin {margin} leaves no interior along an axis of length {len}")]
    Margin { margin: f64, len: f64 },
    #[error("scan duration must be finite and >= 0")]
    ScanDuration,
    #[error("route for drone {0} has no waypoints")]
    EmptyRoute(u32),
    #[error("drone {drone_id} route takes {seconds} s, over the {limit} s endurance")]
    Endurance { drone_id: u32, seconds: f64, limit: f64 },
    #[error("timing values must be finite and >= 0")]
    Timing,
    #[error("invalid hover configuration: {0}")]
    Hover(&'static str),
    #[error("invalid rf environment: {0}")]
    Environment(#[from] crate::rf::RfError),
}

fn axis_points(len: f64, n: usize, margin: f64) -> Vec<f64> {
    if n == 1 {
        return vec![len / 2.0];
    }
    let lo = margin;
    let step = (len - 2.0 * margin) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Evenly spaced tensor lattice inside the volume, `margin` away from every
/// face. A single point on an axis sits at the middle of that axis.
/// Ordered x-major, then y, then z.
pub fn generate_lattice(volume: &VolumeSpec, spec: &LatticeSpec) -> Result<Vec<Waypoint>, MissionError> {
    if spec.nx == 0 || spec.ny == 0 || spec.nz == 0 {
        return Err(MissionError::EmptyLattice);
    }
    if !(spec.scan_seconds.is_finite() && spec.scan_seconds >= 0.0) {
        return Err(MissionError::ScanDuration);
    }
    for len in volume.extents() {
        if !(spec.margin.is_finite() && spec.margin >= 0.0 && 2.0 * spec.margin < len) {
            return Err(MissionError::Margin { margin: spec.margin, len });
        }
    }
    let xs = axis_points(volume.x_len, spec.nx, spec.margin);
    let ys = axis_points(volume.y_len, spec.ny, spec.margin);
    let zs = axis_points(volume.z_len, spec.nz, spec.margin);
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push(Waypoint {
                    position: Position::new(x, y, z),
                    scan_duration: spec.scan_seconds,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub drone_id: u32,
    /// Ground position under the first waypoint.
    pub start_position: Position,
    /// Degrees.
    pub yaw: f64,
    pub waypoints: Vec<Waypoint>,
}

fn sorted_levels(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Splits `levels` (with per-level counts) into `n` contiguous groups,
/// placing each cut where the running total is closest to its share.
/// Returns group-of-level and the max minus min group size.
fn cut_levels(counts: &[usize], n: usize) -> (Vec<usize>, usize) {
    let total: usize = counts.iter().sum();
    let mut cum = Vec::with_capacity(counts.len() + 1);
    cum.push(0usize);
    for c in counts {
        cum.push(cum.last().unwrap() + c);
    }
    // cuts[j] = number of levels in groups 0..=j
    let mut cuts = Vec::with_capacity(n);
    let mut prev = 0usize;
    for j in 1..n {
        let target = (total * j) as f64 / n as f64;
        let lo = prev + 1;
        let hi = counts.len() - (n - j);
        let mut best = lo;
        for b in lo..=hi {
            if (cum[b] as f64 - target).abs() < (cum[best] as f64 - target).abs() {
                best = b;
            }
        }
        cuts.push(best);
        prev = best;
    }
    cuts.push(counts.len());
    let mut group_of = vec![0usize; counts.len()];
    let mut start = 0;
    let mut sizes = Vec::with_capacity(n);
    for (g, &end) in cuts.iter().enumerate() {
        for slot in &mut group_of[start..end] {
            *slot = g;
        }
        sizes.push(cum[end] - cum[start]);
        start = end;
    }
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    (group_of, spread)
}

/// Serpentine order: z layers bottom-up, rows along y alternating per
/// layer, x alternating per row, so consecutive hops are between lattice
/// neighbours.
fn serpentine(mut wps: Vec<Waypoint>) -> Vec<Waypoint> {
    let zs = sorted_levels(wps.iter().map(|w| w.position.z));
    let mut out = Vec::with_capacity(wps.len());
    let mut row_counter = 0usize;
    for (li, &z) in zs.iter().enumerate() {
        let (layer, rest): (Vec<Waypoint>, Vec<Waypoint>) = wps.into_iter().partition(|w| w.position.z == z);
        wps = rest;
        let mut ys = sorted_levels(layer.iter().map(|w| w.position.y));
        if li % 2 == 1 {
            ys.reverse();
        }
        for &y in &ys {
            let mut row: Vec<Waypoint> = layer.iter().filter(|w| w.position.y == y).copied().collect();
            row.sort_by(|a, b| a.position.x.total_cmp(&b.position.x));
            if row_counter % 2 == 1 {
                row.reverse();
            }
            row_counter += 1;
            out.extend(row);
        }
    }
    out
}

/// Partitions waypoints into per-drone routes: contiguous slabs along the
/// axis whose cut best equalizes counts (ties go to x, then y), each slab
/// swept in serpentine order. When no axis has enough distinct levels the
/// waypoints are chunked in lexicographic order instead. Returns
/// `min(n_drones, waypoints.len())` routes; empty input gives no routes.
pub fn assign(waypoints: &[Waypoint], n_drones: usize) -> Vec<Route> {
    let n = n_drones.max(1).min(waypoints.len());
    if n == 0 {
        return Vec::new();
    }
    let mut groups: Vec<Vec<Waypoint>> = vec![Vec::new(); n];
    let mut best: Option<(usize, usize, Vec<f64>, Vec<usize>)> = None;
    for axis in 0..3 {
        let levels = sorted_levels(waypoints.iter().map(|w| w.position.coords()[axis]));
        if levels.len() < n {
            continue;
        }
        let counts: Vec<usize> = levels
            .iter()
            .map(|&l| waypoints.iter().filter(|w| w.position.coords()[axis] == l).count())
            .collect();
        let (group_of, spread) = cut_levels(&counts, n);
        if best.as_ref().is_none_or(|b| spread < b.1) {
            best = Some((axis, spread, levels, group_of));
        }
    }
    match best {
        Some((axis, _, levels, group_of)) => {
            for w in waypoints {
                let c = w.position.coords()[axis];
                let li = levels.binary_search_by(|l| l.total_cmp(&c)).unwrap();
                groups[group_of[li]].push(*w);
            }
        }
        None => {
            let mut sorted = waypoints.to_vec();
            sorted.sort_by(|a, b| {
                let (a, b) = (a.position.coords(), b.position.coords());
                a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
            });
            let base = sorted.len() / n;
            let extra = sorted.len() % n;
            let mut it = sorted.into_iter();
            for (g, group) in groups.iter_mut().enumerate() {
                let take = base + usize::from(g < extra);
                group.extend(it.by_ref().take(take));
            }
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let waypoints = serpentine(g);
            let first = waypoints[0].position;
            Route {
                drone_id: i as u32,
                start_position: Position::new(first.x, first.y, 0.0),
                yaw: 0.0,
                waypoints,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    pub fly_seconds: f64,
    pub scan_seconds: f64,
    pub takeoff_seconds: f64,
    pub land_seconds: f64,
    /// Pause between one drone landing and the next taking off.
    pub handover_seconds: f64,
    pub endurance_seconds: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            fly_seconds: 4.0,
            scan_seconds: 3.0,
            takeoff_seconds: 10.0,
            land_seconds: 10.0,
            handover_seconds: 5.0,
            endurance_seconds: 372.0,
        }
    }
}

impl TimingModel {
    /// No takeoff, landing or handover time.
    pub fn without_overheads(self) -> Self {
        Self {
            takeoff_seconds: 0.0,
            land_seconds: 0.0,
            handover_seconds: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        let all = [
            self.fly_seconds,
            self.scan_seconds,
            self.takeoff_seconds,
            self.land_seconds,
            self.handover_seconds,
            self.endurance_seconds,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(MissionError::Timing)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEstimate {
    pub seconds: f64,
    pub warning: Option<Warning>,
}

/// Takeoff, one fly leg plus scan per waypoint, landing. Each waypoint's own
/// scan duration is used.
pub fn estimate_time(route: &Route, timing: &TimingModel) -> TimeEstimate {
    let legs: f64 = route.waypoints.iter().map(|w| timing.fly_seconds + w.scan_duration).sum();
    let seconds = timing.takeoff_seconds + legs + timing.land_seconds;
    let warning = (seconds > timing.endurance_seconds).then_some(Warning::EnduranceExceeded {
        drone_id: route.drone_id,
        seconds,
        limit: timing.endurance_seconds,
    });
    TimeEstimate { seconds, warning }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// The scan position is re-sent as a setpoint every period.
    On,
    /// No setpoints during the scan; the commander falls back to level
    /// attitude once they go stale.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoverSimConfig {
    pub setpoint_period: f64,
    pub stale_timeout: f64,
    /// Proportional gain from position error to velocity command, 1/s.
    pub controller_gain: f64,
    /// Std. dev. of the random velocity impulse, m/s per sqrt(s).
    pub drift_velocity_sigma: f64,
    /// First-order lag of velocity behind the command, s.
    pub velocity_time_constant: f64,
    /// Velocity decay time constant in level-attitude mode, s.
    pub attitude_zero_decay: f64,
    pub seed: u64,
}

impl Default for HoverSimConfig {
    fn default() -> Self {
        Self {
            setpoint_period: 0.1,
            stale_timeout: 0.5,
            controller_gain: 2.0,
            drift_velocity_sigma: 0.02,
            velocity_time_constant: 0.3,
            attitude_zero_decay: 0.8,
            seed: 0,
        }
    }
}

impl HoverSimConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.setpoint_period) || !pos(self.stale_timeout) {
            return Err(MissionError::Hover("setpoint_period and stale_timeout must be positive"));
        }
        if self.setpoint_period >= self.stale_timeout {
            return Err(MissionError::Hover("setpoint_period must be below stale_timeout"));
        }
        if !pos(self.velocity_time_constant) || !pos(self.attitude_zero_decay) {
            return Err(MissionError::Hover("time constants must be positive"));
        }
        if !(self.controller_gain.is_finite() && self.controller_gain >= 0.0) {
            return Err(MissionError::Hover("controller_gain must be >= 0"));
        }
        if !(self.drift_velocity_sigma.is_finite() && self.drift_velocity_sigma >= 0.0) {
            return Err(MissionError::Hover("drift_velocity_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Physics step of the hover simulation, s.
pub const HOVER_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverTrajectory {
    /// Offsets from the scan position sampled at 10 Hz, starting at t = 0.
    pub offsets: Vec<[f64; 3]>,
    pub final_offset: [f64; 3],
    /// Largest distance from the scan position over every physics step.
    pub max_displacement: f64,
}

fn norm(v: [f64; 3]) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Point-mass hover around a scan position that starts with
/// `initial_velocity` (m/s). Non-positive durations give a single sample.
pub fn simulate_hover(
    initial_velocity: [f64; 3],
    config: &HoverSimConfig,
    feedback: Feedback,
    duration: f64,
) -> HoverTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps = if duration > 0.0 { libm::round(duration / HOVER_DT) as usize } else { 0 };
    let period_steps = (libm::round(config.setpoint_period / HOVER_DT) as usize).max(1);
    let stale_steps = libm::round(config.stale_timeout / HOVER_DT) as usize;
    let lag = (HOVER_DT / config.velocity_time_constant).min(1.0);
    let decay = libm::exp(-HOVER_DT / config.attitude_zero_decay);
    let noise = config.drift_velocity_sigma * libm::sqrt(HOVER_DT);

    let mut x = [0.0f64; 3];
    let mut v = initial_velocity;
    let mut command = [0.0f64; 3];
    let mut offsets = vec![x];
    let mut max_displacement = 0.0f64;
    for step in 0..steps {
        match feedback {
            Feedback::On => {
                if step % period_steps == 0 {
                    for a in 0..3 {
                        command[a] = -config.controller_gain * x[a];
                    }
                }
                for a in 0..3 {
                    v[a] += (command[a] - v[a]) * lag;
                }
            }
            Feedback::Off => {
                if step >= stale_steps {
                    for va in &mut v {
                        *va *= decay;
                    }
                }
            }
        }
        if noise > 0.0 {
            for va in &mut v {
                let z: f64 = StandardNormal.sample(&mut rng);
                *va += noise * z;
            }
        }
        for a in 0..3 {
            x[a] += v[a] * HOVER_DT;
        }
        max_displacement = max_displacement.max(norm(x));
        if (step + 1) % 10 == 0 {
            offsets.push(x);
        }
    }
    HoverTrajectory {
        offsets,
        final_offset: x,
        max_displacement,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Takeoff,
    Goto,
    ScanStart,
    ScanEnd,
    Land,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub time_ms: u64,
    pub kind: EventKind,
    /// Index into the route's waypoints for goto and scan events.
    pub waypoint: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time_ms: u64,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneLog {
    pub drone_id: u32,
    pub events: Vec<MissionEvent>,
    /// 10 Hz samples from takeoff to touchdown.
    pub trajectory: Vec<TrajectoryPoint>,
    /// Recorded (jittered) position of each scan, in route order.
    pub scan_positions: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionLog {
    pub drones: Vec<DroneLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionOptions {
    /// Unix time of the first takeoff, ms.
    pub start_epoch_ms: u64,
    /// Std. dev. of the per-axis velocity with which the drone arrives at a
    /// waypoint, m/s.
    pub arrival_speed_sigma: f64,
    pub feedback: Feedback,
    /// Fly routes that exceed the endurance budget instead of failing.
    pub force: bool,
}

impl Default for MissionOptions {
    fn default() -> Self {
        Self {
            start_epoch_ms: 1_625_097_600_000,
            arrival_speed_sigma: 0.05,
            feedback: Feedback::On,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionOutput {
    pub dataset: Dataset,
    pub log: MissionLog,
    pub warnings: Vec<Warning>,
}

fn to_ms(seconds: f64) -> u64 {
    libm::round(seconds * 1000.0) as u64
}

fn round_mm(v: f64) -> f64 {
    libm::round(v * 1000.0) / 1000.0
}

fn lerp(a: Position, b: Position, f: f64) -> Position {
    Position::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, a.z + (b.z - a.z) * f)
}

struct Timeline {
    t: f64,
    start_ms: u64,
    trajectory: Vec<TrajectoryPoint>,
}

impl Timeline {
    fn stamp(&self, t: f64) -> u64 {
        self.start_ms + to_ms(t)
    }

    /// 10 Hz samples along a straight leg, excluding its endpoint.
    fn leg(&mut self, from: Position, to: Position, seconds: f64) {
        let n = libm::round(seconds * 10.0) as usize;
        for i in 0..n {
            let f = i as f64 / n as f64;
            self.trajectory.push(TrajectoryPoint {
                time_ms: self.stamp(self.t + i as f64 * 0.1),
                position: lerp(from, to, f),
            });
        }
        self.t += seconds;
    }
}

/// Flies every route in order, one drone at a time. At each waypoint the
/// drone hovers for the scan window; the scan is recorded at the waypoint
/// plus the hover residual at the end of the window (rounded to mm) and
/// yields at most one reading per access point, stamped at scan end.
pub fn simulate_mission(
    routes: &[Route],
    timing: &TimingModel,
    environment: &RfEnvironment,
    hover: &HoverSimConfig,
    seed: u64,
    options: &MissionOptions,
) -> Result<MissionOutput, MissionError> {
    timing.validate()?;
    hover.validate()?;
    environment.validate()?;
    let mut warnings = Vec::new();
    for route in routes {
        if route.waypoints.is_empty() {
            return Err(MissionError::EmptyRoute(route.drone_id));
        }
        if let Some(w) = estimate_time(route, timing).warning {
            if !options.force {
                if let Warning::EnduranceExceeded { drone_id, seconds, limit } = w {
                    return Err(MissionError::Endurance { drone_id, seconds, limit });
                }
            }
            warnings.push(w);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut drones = Vec::with_capacity(routes.len());
    let mut clock = Timeline {
        t: 0.0,
        start_ms: options.start_epoch_ms,
        trajectory: Vec::new(),
    };
    for (ri, route) in routes.iter().enumerate() {
        if ri > 0 {
            clock.t += timing.handover_seconds;
        }
        clock.trajectory.clear();
        let mut events = Vec::new();
        let mut scan_positions = Vec::with_capacity(route.waypoints.len());
        let first = route.waypoints[0].position;
        let mut here = route.start_position;
        events.push(MissionEvent { time_ms: clock.stamp(clock.t), kind: EventKind::Takeoff, waypoint: None });
        let above_start = Position::new(here.x, here.y, first.z);
        clock.leg(here, above_start, timing.takeoff_seconds);
        here = above_start;

        for (wi, wp) in route.waypoints.iter().enumerate() {
            events.push(MissionEvent { time_ms: clock.stamp(clock.t), kind: EventKind::Goto, waypoint: Some(wi) });
            clock.leg(here, wp.position, timing.fly_seconds);
            events.push(MissionEvent { time_ms: clock.stamp(clock.t), kind: EventKind::ScanStart, waypoint: Some(wi) });

            let mut arrival = [0.0f64; 3];
            for a in &mut arrival {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a = options.arrival_speed_sigma * z;
            }
            let cfg = HoverSimConfig { seed: rng.next_u64(), ..*hover };
            let hover_traj = simulate_hover(arrival, &cfg, options.feedback, wp.scan_duration);
            let scan_ticks = libm::round(wp.scan_duration * 10.0) as usize;
            for (i, off) in hover_traj.offsets.iter().take(scan_ticks).enumerate() {
                clock.trajectory.push(TrajectoryPoint {
                    time_ms: clock.stamp(clock.t + i as f64 * 0.1),
                    position: wp.position.offset(*off),
                });
            }
            clock.t += wp.scan_duration;
            let end_ms = clock.stamp(clock.t);
            events.push(MissionEvent { time_ms: end_ms, kind: EventKind::ScanEnd, waypoint: Some(wi) });

            let r = hover_traj.final_offset;
            let at = Position::new(
                round_mm(wp.position.x + r[0]),
                round_mm(wp.position.y + r[1]),
                round_mm(wp.position.z + r[2]),
            );
            scan_positions.push(at);
            for ap in &environment.aps {
                if let Some(rssi) = rssi_at(ap, &at, environment.shadow_sigma, environment.detection_threshold, &mut rng) {
                    samples.push(BeaconSample {
                        timestamp: end_ms,
                        position: at,
                        ssid: ap.ssid.clone(),
                        mac: ap.mac,
                        rssi,
                        channel: ap.channel,
                    });
                }
            }
            here = wp.position.offset(r);
        }

        events.push(MissionEvent { time_ms: clock.stamp(clock.t), kind: EventKind::Land, waypoint: None });
        let ground = Position::new(here.x, here.y, 0.0);
        clock.leg(here, ground, timing.land_seconds);
        clock.trajectory.push(TrajectoryPoint { time_ms: clock.stamp(clock.t), position: ground });
        drones.push(DroneLog {
            drone_id: route.drone_id,
            events,
            trajectory: core::mem::take(&mut clock.trajectory),
            scan_positions,
        });
    }
    let provenance = alloc::format!(
        "simulated mission: seed {seed}, {} routes, {} access points, rf seed {}",
        routes.len(),
        environment.aps.len(),
        environment.seed
    );
    Ok(MissionOutput {
        dataset: Dataset::new(samples, provenance),
        log: MissionLog { drones },
        warnings,
    })
}

/// Label for a route in human-facing output: A, B, C, ...
pub fn drone_label(drone_id: u32) -> String {
    let mut s = String::new();
    let mut n = drone_id as usize;
    loop {
        s.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MacAddr;
    use crate::rf::AccessPoint;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    fn lattice() -> Vec<Waypoint> {
        generate_lattice(&VolumeSpec::default(), &LatticeSpec::default()).unwrap()
    }

    fn route_of(n: usize, scan: f64) -> Route {
        Route {
            drone_id: 0,
            start_position: Position::default(),
            yaw: 0.0,
            waypoints: vec![Waypoint { position: Position::new(1.0, 1.0, 1.0), scan_duration: scan }; n],
        }
    }

    #[test]
    fn default_lattice_has_72_points_in_margin() {
        let wps = lattice();
        assert_eq!(wps.len(), 72);
        let v = VolumeSpec::default();
        for w in &wps {
            let c = w.position.coords();
            for (a, len) in v.extents().iter().enumerate() {
                assert!(c[a] >= 0.2 - 1e-12 && c[a] <= len - 0.2 + 1e-12, "{c:?}");
            }
        }
        // x: 0.2 .. 3.54 in 5 steps of 0.668
        let xs = sorted_levels(wps.iter().map(|w| w.position.x));
        assert_eq!(xs.len(), 6);
        assert!((xs[1] - (0.2 + 3.34 / 5.0)).abs() < 1e-12);
        assert!((xs[5] - 3.54).abs() < 1e-12);
        let zs = sorted_levels(wps.iter().map(|w| w.position.z));
        assert_eq!(zs.len(), 3);
        assert!((zs[1] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn single_point_lattice_is_centered() {
        let spec = LatticeSpec { nx: 1, ny: 1, nz: 1, ..Default::default() };
        let wps = generate_lattice(&VolumeSpec::default(), &spec).unwrap();
        assert_eq!(wps.len(), 1);
        assert_eq!(wps[0].position, VolumeSpec::default().center());
    }

    #[test]
    fn oversized_margin_is_rejected() {
        let spec = LatticeSpec { margin: 1.05, ..Default::default() };
        assert!(matches!(
            generate_lattice(&VolumeSpec::default(), &spec),
            Err(MissionError::Margin { .. })
        ));
        let spec = LatticeSpec { nx: 0, ..Default::default() };
        assert_eq!(generate_lattice(&VolumeSpec::default(), &spec), Err(MissionError::EmptyLattice));
    }

    #[test]
    fn two_drones_split_evenly() {
        let routes = assign(&lattice(), 2);
        assert_eq!(routes.len(), 2);
        assert_eq!(routes[0].waypoints.len(), 36);
        assert_eq!(routes[1].waypoints.len(), 36);
        // slabs along x: drone 0 covers the lower half
        let max0 = routes[0].waypoints.iter().map(|w| w.position.x).fold(f64::MIN, f64::max);
        let min1 = routes[1].waypoints.iter().map(|w| w.position.x).fold(f64::MAX, f64::min);
        assert!(max0 < min1);
        assert_eq!(routes[1].drone_id, 1);
    }

    #[test]
    fn three_drones_and_one_drone() {
        let routes = assign(&lattice(), 3);
        assert_eq!(routes.iter().map(|r| r.waypoints.len()).collect::<Vec<_>>(), vec![24, 24, 24]);
        let one = assign(&lattice(), 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].waypoints.len(), 72);
        let first = one[0].waypoints[0].position;
        assert_eq!(one[0].start_position, Position::new(first.x, first.y, 0.0));
    }

    #[test]
    fn more_drones_than_levels_falls_back_to_chunks() {
        let wps = generate_lattice(&VolumeSpec::default(), &LatticeSpec { nx: 2, ny: 2, nz: 2, ..Default::default() }).unwrap();
        let routes = assign(&wps, 3);
        assert_eq!(routes.iter().map(|r| r.waypoints.len()).collect::<Vec<_>>(), vec![3, 3, 2]);
        assert_eq!(assign(&wps[..2], 5).len(), 2);
        assert!(assign(&[], 2).is_empty());
    }

    #[test]
    fn serpentine_hops_are_single_steps() {
        let wps = lattice();
        let steps = [3.34 / 5.0, 2.8 / 3.0, 1.7 / 2.0];
        for route in assign(&wps, 2) {
            for pair in route.waypoints.windows(2) {
                let a = pair[0].position.coords();
                let b = pair[1].position.coords();
                let moved: Vec<usize> = (0..3).filter(|&i| (a[i] - b[i]).abs() > 1e-9).collect();
                assert_eq!(moved.len(), 1, "{a:?} -> {b:?}");
                let i = moved[0];
                assert!(((a[i] - b[i]).abs() - steps[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn budget_for_36_waypoints() {
        let t = TimingModel::default();
        let r = route_of(36, 3.0);
        let bare = estimate_time(&r, &t.without_overheads());
        assert_eq!(bare.seconds, 252.0);
        assert!(bare.warning.is_none());
        let with = estimate_time(&r, &t);
        assert_eq!(with.seconds, 272.0);
    }

    #[test]
    fn sixty_waypoints_exceed_endurance() {
        let est = estimate_time(&route_of(60, 3.0), &TimingModel::default().without_overheads());
        assert_eq!(est.seconds, 420.0);
        assert_eq!(
            est.warning,
            Some(Warning::EnduranceExceeded { drone_id: 0, seconds: 420.0, limit: 372.0 })
        );
        // 53 * 7 = 371 fits, 54 * 7 = 378 does not
        assert!(estimate_time(&route_of(53, 3.0), &TimingModel::default().without_overheads()).warning.is_none());
        assert!(estimate_time(&route_of(54, 3.0), &TimingModel::default().without_overheads()).warning.is_some());
    }

    fn still() -> HoverSimConfig {
        HoverSimConfig { drift_velocity_sigma: 0.0, ..Default::default() }
    }

    #[test]
    fn zero_velocity_without_noise_stays_put() {
        for fb in [Feedback::On, Feedback::Off] {
            let t = simulate_hover([0.0; 3], &still(), fb, 3.0);
            assert_eq!(t.max_displacement, 0.0);
            assert_eq!(t.offsets.len(), 31);
        }
    }

    #[test]
    fn feedback_off_drifts_freely_until_stale() {
        let t = simulate_hover([0.2, 0.0, 0.0], &still(), Feedback::Off, 3.0);
        // 0.5 s at 0.2 m/s before any decay
        assert!(t.offsets[5][0] >= 0.1 - 1e-12, "{:?}", t.offsets[5]);
        // then 0.2 * tau * (1 - exp(-2.5 / tau)) more, approximately
        let tau = still().attitude_zero_decay;
        let expected = 0.1 + 0.2 * tau * (1.0 - libm::exp(-2.5 / tau));
        assert!((t.max_displacement - expected).abs() < 2e-3, "{} vs {expected}", t.max_displacement);
    }

    #[test]
    fn feedback_on_beats_off() {
        let off = simulate_hover([0.2, 0.0, 0.0], &still(), Feedback::Off, 3.0);
        let on = simulate_hover([0.2, 0.0, 0.0], &still(), Feedback::On, 3.0);
        assert!(on.max_displacement < 0.5 * off.max_displacement);
        assert!(on.final_offset[0].abs() < 0.01);
    }

    #[test]
    fn hover_noise_is_seeded() {
        let cfg = HoverSimConfig { seed: 4, ..Default::default() };
        let a = simulate_hover([0.0; 3], &cfg, Feedback::On, 3.0);
        assert_eq!(a, simulate_hover([0.0; 3], &cfg, Feedback::On, 3.0));
        assert!(a.max_displacement > 0.0);
    }

    #[test]
    fn hover_config_validation() {
        let bad = HoverSimConfig { setpoint_period: 0.5, stale_timeout: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        HoverSimConfig::default().validate().unwrap();
    }

    fn near_env(n: usize) -> RfEnvironment {
        RfEnvironment {
            aps: (0..n)
                .map(|i| AccessPoint {
                    mac: MacAddr([2, 0, 0, 0, 0, i as u8]),
                    ssid: alloc::format!("ap{i}"),
                    channel: 6,
                    position: Position::new(1.8, 1.6, 1.0),
                    tx_power_ref: -30.0,
                    path_loss_exponent: 2.0,
                })
                .collect(),
            shadow_sigma: 0.0,
            detection_threshold: -95.0,
            seed: 0,
        }
    }

    fn mission(seed: u64, n_drones: usize) -> MissionOutput {
        let routes = assign(&lattice(), n_drones);
        simulate_mission(&routes, &TimingModel::default(), &near_env(20), &HoverSimConfig::default(), seed, &MissionOptions::default()).unwrap()
    }

    #[test]
    fn always_detectable_aps_give_one_sample_per_scan() {
        let out = mission(1, 2);
        assert_eq!(out.dataset.len(), 72 * 20);
        let per_mac: BTreeSet<usize> = near_env(20)
            .aps
            .iter()
            .map(|ap| out.dataset.iter().filter(|s| s.mac == ap.mac).count())
            .collect();
        assert_eq!(per_mac.into_iter().collect::<Vec<_>>(), vec![72]);
    }

    #[test]
    fn drones_fly_in_sequence() {
        let out = mission(2, 2);
        let a_last = out.log.drones[0].events.last().unwrap().time_ms;
        let b_first = out.log.drones[1].events[0].time_ms;
        assert_eq!(b_first - a_last, 10_000 + 5_000);
        let a_pos: BTreeSet<u64> = out.log.drones[0].scan_positions.iter().map(|p| p.x.to_bits()).collect();
        let split = out.dataset.samples.iter().position(|s| !a_pos.contains(&s.position.x.to_bits())).unwrap();
        let max_a = out.dataset.samples[..split].iter().map(|s| s.timestamp).max().unwrap();
        let min_b = out.dataset.samples[split..].iter().map(|s| s.timestamp).min().unwrap();
        assert!(max_a < min_b);
    }

    #[test]
    fn mission_is_deterministic_and_valid() {
        let a = mission(3, 2);
        assert_eq!(a, mission(3, 2));
        assert_ne!(a.dataset, mission(4, 2).dataset);
        for s in &a.dataset {
            assert_eq!(s.revalidate().as_ref(), Ok(s));
        }
    }

    #[test]
    fn timeline_matches_budget_and_is_ordered() {
        let out = mission(5, 2);
        let t = TimingModel::default();
        for d in &out.log.drones {
            let ev = &d.events;
            assert_eq!(ev.first().unwrap().kind, EventKind::Takeoff);
            assert_eq!(ev.last().unwrap().kind, EventKind::Land);
            assert!(ev.windows(2).all(|w| w[0].time_ms <= w[1].time_ms));
            let airborne = ev.last().unwrap().time_ms - ev[0].time_ms + to_ms(t.land_seconds);
            assert_eq!(airborne, to_ms(272.0));
            for chunk in ev[1..ev.len() - 1].chunks(3) {
                assert_eq!(chunk[0].kind, EventKind::Goto);
                assert!(chunk[0].time_ms < chunk[1].time_ms && chunk[1].time_ms < chunk[2].time_ms);
            }
            assert!(d.trajectory.windows(2).all(|w| w[1].time_ms - w[0].time_ms == 100));
        }
        let scan_ends: BTreeSet<u64> = out
            .log
            .drones
            .iter()
            .flat_map(|d| d.events.iter().filter(|e| e.kind == EventKind::ScanEnd).map(|e| e.time_ms))
            .collect();
        assert!(out.dataset.iter().all(|s| scan_ends.contains(&s.timestamp)));
    }

    #[test]
    fn infeasible_route_needs_force() {
        let routes = assign(&lattice(), 1);
        let env = near_env(2);
        let err = simulate_mission(&routes, &TimingModel::default(), &env, &HoverSimConfig::default(), 0, &MissionOptions::default());
        assert!(matches!(err, Err(MissionError::Endurance { drone_id: 0, .. })));
        let forced = simulate_mission(
            &routes,
            &TimingModel::default(),
            &env,
            &HoverSimConfig::default(),
            0,
            &MissionOptions { force: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(forced.warnings.len(), 1);
        assert_eq!(forced.dataset.len(), 144);
    }

    #[test]
    fn drone_labels() {
        assert_eq!(drone_label(0), "A");
        assert_eq!(drone_label(1), "B");
        assert_eq!(drone_label(26), "AA");
    }

    proptest! {
        #[test]
        fn assign_partitions_the_lattice(nx in 1usize..6, ny in 1usize..5, nz in 1usize..4, drones in 1usize..6) {
            let spec = LatticeSpec { nx, ny, nz, ..Default::default() };
            let wps = generate_lattice(&VolumeSpec::default(), &spec).unwrap();
            let routes = assign(&wps, drones);
            prop_assert_eq!(routes.len(), drones.min(wps.len()));
            let mut seen: Vec<[u64; 3]> = routes
                .iter()
                .flat_map(|r| r.waypoints.iter().map(|w| w.position.coords().map(f64::to_bits)))
                .collect();
            let mut want: Vec<[u64; 3]> = wps.iter().map(|w| w.position.coords().map(f64::to_bits)).collect();
            seen.sort();
            want.sort();
            prop_assert_eq!(seen, want);
            prop_assert!(routes.iter().all(|r| !r.waypoints.is_empty()));
        }

        #[test]
        fn estimate_is_additive(a in 1usize..40, b in 1usize..40, fly in 0.0f64..10.0, scan in 0.0f64..10.0, to in 0.0f64..20.0, land in 0.0f64..20.0) {
            let t = TimingModel { fly_seconds: fly, takeoff_seconds: to, land_seconds: land, ..Default::default() };
            let ra = route_of(a, scan);
            let rb = route_of(b, scan);
            let mut joined = ra.clone();
            joined.waypoints.extend(rb.waypoints.iter().copied());
            let lhs = estimate_time(&joined, &t).seconds;
            let rhs = estimate_time(&ra, &t).seconds + estimate_time(&rb, &t).seconds - to - land;
            prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.max(1.0));
        }

        #[test]
        fn feedback_displacement_non_increasing_in_gain(vx in -0.5f64..0.5, vy in -0.5f64..0.5, vz in -0.3f64..0.3) {
            let mut prev = f64::INFINITY;
            for gain in [0.5, 1.0, 2.0, 4.0] {
                let cfg = HoverSimConfig { controller_gain: gain, ..still() };
                let d = simulate_hover([vx, vy, vz], &cfg, Feedback::On, 3.0).max_displacement;
                prop_assert!(d <= prev + 1e-12, "gain {gain}: {d} > {prev}");
                prev = d;
            }
        }
    }
}
