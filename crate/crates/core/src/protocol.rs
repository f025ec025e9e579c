//! Per-node state machine: duty cycling, sensor-triggered escalation to the
//! control unit, tracking rounds and energy accounting.
//!
//! A tracking round works as follows. A sponsor (the control unit for the
//! first round of a track, the current cluster head afterwards) wakes every
//! node around the predicted target position. Woken nodes radar-sample on
//! the shared tick grid and send their first fix of the round back to the
//! sponsor as a `DetectionReport`. When the collection window closes the
//! sponsor elects the strongest reporter as head and hands it the reports
//! and the track in a `HeadClaim`. The new head fuses the reports, predicts
//! the next position and becomes the sponsor of the following round.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::fusion::{
    elect_cluster_head, fuse_round, select_wake_set, Cluster, ClusterId, Fix, Round, TargetTrack,
};
use crate::sensing::{Modality, SensorReading};
use crate::world::{DeploymentField, NodeId, Position, RADAR_RANGE_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeMode {
    Sleep,
    Active,
    ClusterMember,
    ClusterHead,
}

impl NodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeMode::Sleep => "Sleep",
            NodeMode::Active => "Active",
            NodeMode::ClusterMember => "ClusterMember",
            NodeMode::ClusterHead => "ClusterHead",
        }
    }

    pub fn is_awake(self) -> bool {
        self != NodeMode::Sleep
    }
}

impl fmt::Display for NodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            NodeMode::Sleep,
            NodeMode::Active,
            NodeMode::ClusterMember,
            NodeMode::ClusterHead,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown node mode `{s}`"))
    }
}

/// Power draw per mode in watts and per-action costs in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyRates {
    pub sleep_w: f64,
    pub active_w: f64,
    pub head_w: f64,
    pub tx_j: f64,
    pub sample_j: f64,
}

impl Default for EnergyRates {
    fn default() -> Self {
        EnergyRates {
            sleep_w: 0.03e-3,
            active_w: 24e-3,
            head_w: 36e-3,
            tx_j: 50e-6,
            sample_j: 10e-6,
        }
    }
}

impl EnergyRates {
    pub fn rate(&self, mode: NodeMode) -> f64 {
        match mode {
            NodeMode::Sleep => self.sleep_w,
            NodeMode::Active | NodeMode::ClusterMember => self.active_w,
            NodeMode::ClusterHead => self.head_w,
        }
    }

    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        for (field, v) in [
            ("sleep_w", self.sleep_w),
            ("active_w", self.active_w),
            ("head_w", self.head_w),
            ("tx_j", self.tx_j),
            ("sample_j", self.sample_j),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((field, "must be finite and >= 0"));
            }
        }
        if self.sleep_w >= self.active_w {
            return Err(("sleep_w", "must be below active_w"));
        }
        if self.active_w >= self.head_w {
            return Err(("active_w", "must be below head_w"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    consumed: f64,
    rates: EnergyRates,
}

impl EnergyLedger {
    pub fn new(rates: EnergyRates) -> Self {
        EnergyLedger {
            consumed: 0.0,
            rates,
        }
    }

    pub fn consumed(&self) -> f64 {
        self.consumed
    }

    pub fn rates(&self) -> &EnergyRates {
        &self.rates
    }

    /// Charges `duration` seconds in `mode` plus per-message and per-sample
    /// costs. Returns the increment.
    pub fn accrue(&mut self, mode: NodeMode, duration: f64, messages: u32, samples: u32) -> f64 {
        debug_assert!(duration >= 0.0);
        let delta = self.rates.rate(mode) * duration.max(0.0)
            + self.rates.tx_j * messages as f64
            + self.rates.sample_j * samples as f64;
        self.consumed += delta;
        delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub up_bps: f64,
    pub down_bps: f64,
    pub propagation: f64,
    pub drop_probability: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            up_bps: 50e6,
            down_bps: 100e6,
            propagation: 1e-3,
            drop_probability: 0.0,
        }
    }
}

/// Serialization time for `bytes` at the directional rate plus propagation.
pub fn link_delay(bytes: usize, direction: Direction, link: &LinkParams) -> f64 {
    let bps = match direction {
        Direction::Up => link.up_bps,
        Direction::Down => link.down_bps,
    };
    (bytes as f64) * 8.0 / bps + link.propagation
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node(NodeId),
    CommandCenter,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(id) => write!(f, "node:{id}"),
            Endpoint::CommandCenter => f.write_str("cc"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    DetectionReport,
    WakeCommand,
    TrackUpdate,
    HeadClaim,
    CuNotify,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::DetectionReport => "DetectionReport",
            MessageKind::WakeCommand => "WakeCommand",
            MessageKind::TrackUpdate => "TrackUpdate",
            MessageKind::HeadClaim => "HeadClaim",
            MessageKind::CuNotify => "CuNotify",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    DetectionReport {
        cluster: ClusterId,
        reading: SensorReading,
    },
    WakeCommand {
        cluster: ClusterId,
        sponsor: Endpoint,
        predicted: Position,
    },
    TrackUpdate {
        cluster: ClusterId,
        track: u32,
        fix: Option<Fix>,
        predicted: Option<(SimTime, Position)>,
        lost: bool,
    },
    HeadClaim {
        cluster: ClusterId,
        members: Vec<NodeId>,
        reports: Vec<SensorReading>,
        track: TargetTrack,
    },
    CuNotify {
        reading: SensorReading,
        position: Position,
    },
}

const HEADER_BYTES: usize = 16;
const READING_BYTES: usize = 40;
const FIX_BYTES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: Endpoint,
    pub to: Endpoint,
    pub sent_at: SimTime,
    pub body: MessageBody,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::DetectionReport { .. } => MessageKind::DetectionReport,
            MessageBody::WakeCommand { .. } => MessageKind::WakeCommand,
            MessageBody::TrackUpdate { .. } => MessageKind::TrackUpdate,
            MessageBody::HeadClaim { .. } => MessageKind::HeadClaim,
            MessageBody::CuNotify { .. } => MessageKind::CuNotify,
        }
    }

    /// Nominal wire size used for link-delay computation.
    pub fn size_bytes(&self) -> usize {
        let reading = |r: &SensorReading| READING_BYTES + 8 * r.features().map_or(0, <[f64]>::len);
        HEADER_BYTES
            + match &self.body {
                MessageBody::DetectionReport { reading: r, .. } => 8 + reading(r),
                MessageBody::WakeCommand { .. } => 8 + 8 + 16,
                MessageBody::TrackUpdate { .. } => 8 + 4 + 2 * FIX_BYTES + 1,
                MessageBody::HeadClaim {
                    members,
                    reports,
                    track,
                    ..
                } => {
                    8 + 4 * members.len()
                        + reports.iter().map(reading).sum::<usize>()
                        + FIX_BYTES * track.fixes.len()
                }
                MessageBody::CuNotify { reading: r, .. } => reading(r) + 16,
            }
    }

    /// Node-originated traffic uses the uplink rate, control-unit traffic the downlink.
    pub fn direction(&self) -> Direction {
        match self.from {
            Endpoint::CommandCenter => Direction::Down,
            Endpoint::Node(_) => Direction::Up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub guard_period: f64,
    pub idle_timeout: f64,
    pub gas_interval: f64,
    pub gas_window: f64,
    pub round_window: f64,
    pub max_empty_windows: u32,
    pub wake_radius: f64,
    pub association_radius: f64,
    /// Keeps every node awake for the whole run (energy baseline).
    pub force_active: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            guard_period: 5.0,
            idle_timeout: 30.0,
            gas_interval: 10.0,
            gas_window: 300.0,
            round_window: 1.5,
            max_empty_windows: 10,
            wake_radius: RADAR_RANGE_M,
            association_radius: 30.0,
            force_active: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        for (field, v) in [
            ("guard_period", self.guard_period),
            ("idle_timeout", self.idle_timeout),
            ("gas_interval", self.gas_interval),
            ("round_window", self.round_window),
            ("wake_radius", self.wake_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err((field, "must be finite and > 0"));
            }
        }
        for (field, v) in [
            ("gas_window", self.gas_window),
            ("association_radius", self.association_radius),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((field, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Produces readings for a node. The simulator backs this with ground
/// truth; tests substitute scripted readings.
pub trait SensorSuite {
    fn sample(
        &mut self,
        node: NodeId,
        pos: Position,
        modality: Modality,
        t: SimTime,
    ) -> Option<SensorReading>;
}

/// Shared read-only context for node handlers.
pub struct NodeEnv<'a> {
    pub field: &'a DeploymentField,
    pub protocol: &'a ProtocolConfig,
    pub radar_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    SensorTick {
        generation: u64,
    },
    GasSample,
    RoundClose {
        cluster: ClusterId,
    },
    Deliver(Message),
    /// Charges idle power up to the current instant.
    Settle,
}

impl NodeEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeEvent::SensorTick { .. } => "sensor-tick",
            NodeEvent::GasSample => "gas-sample",
            NodeEvent::RoundClose { .. } => "round-close",
            NodeEvent::Deliver(_) => "deliver",
            NodeEvent::Settle => "settle",
        }
    }
}

/// Everything one handler invocation produced.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct NodeOutput {
    pub sends: Vec<Message>,
    pub timers: Vec<(SimTime, NodeEvent)>,
    pub energy_delta: f64,
    pub positives: Vec<SensorReading>,
    pub fields: Vec<(&'static str, String)>,
}

impl NodeOutput {
    fn note(&mut self, key: &'static str, value: impl ToString) {
        self.fields.push((key, value.to_string()));
    }
}

/// Outcome of closing a collection window.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    /// No reports yet; keep listening for another window.
    Extend,
    /// Too many empty windows in a row.
    Lost,
    Elected {
        head: NodeId,
        members: Vec<NodeId>,
    },
}

pub fn close_round(round: &mut Round, max_empty_windows: u32) -> RoundOutcome {
    match elect_cluster_head(&round.reports) {
        Ok(head) => {
            let mut members: Vec<NodeId> = round.reports.iter().map(|r| r.node).collect();
            members.sort_unstable();
            RoundOutcome::Elected { head, members }
        }
        Err(_) => {
            round.empty_windows += 1;
            if round.empty_windows >= max_empty_windows {
                RoundOutcome::Lost
            } else {
                RoundOutcome::Extend
            }
        }
    }
}

/// First multiple of `period` at or after `now` (strictly after when `strict`).
pub fn next_aligned(now: SimTime, period: f64, strict: bool) -> SimTime {
    let mut t = (now.secs() / period).ceil() * period;
    if t < now.secs() || (strict && t <= now.secs()) {
        t += period;
    }
    SimTime::from_secs(t)
}

#[derive(Debug, Clone, PartialEq)]
struct RoundMembership {
    cluster: ClusterId,
    sponsor: Endpoint,
    reported: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Position,
    mode: NodeMode,
    ledger: EnergyLedger,
    last_accrual: SimTime,
    generation: u64,
    last_activity: SimTime,
    magnetic_latched: bool,
    chemical_latched: bool,
    gas_session: Option<SimTime>,
    membership: Option<RoundMembership>,
    cluster: Option<Cluster>,
    sponsoring: BTreeMap<ClusterId, Round>,
}

impl Node {
    pub fn new(id: NodeId, pos: Position, rates: EnergyRates, mode: NodeMode) -> Self {
        Node {
            id,
            pos,
            mode,
            ledger: EnergyLedger::new(rates),
            last_accrual: SimTime::ZERO,
            generation: 0,
            last_activity: SimTime::ZERO,
            magnetic_latched: false,
            chemical_latched: false,
            gas_session: None,
            membership: None,
            cluster: None,
            sponsoring: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> NodeMode {
        self.mode
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn cluster(&self) -> Option<&Cluster> {
        self.cluster.as_ref()
    }

    pub fn gas_session_active(&self) -> bool {
        self.gas_session.is_some()
    }

    fn endpoint(&self) -> Endpoint {
        Endpoint::Node(self.id)
    }

    fn message(&self, to: Endpoint, now: SimTime, body: MessageBody) -> Message {
        Message {
            from: self.endpoint(),
            to,
            sent_at: now,
            body,
        }
    }

    fn cu_notify(&self, reading: SensorReading, now: SimTime) -> Message {
        self.message(
            Endpoint::CommandCenter,
            now,
            MessageBody::CuNotify {
                reading,
                position: self.pos,
            },
        )
    }

    /// Moves to an awake mode, restarting the tick chain on the radar grid.
    fn wake(&mut self, now: SimTime, env: &NodeEnv<'_>, out: &mut NodeOutput, strict: bool) {
        if self.mode == NodeMode::Sleep {
            self.mode = NodeMode::Active;
            self.generation += 1;
            out.timers.push((
                next_aligned(now, env.radar_period, strict),
                NodeEvent::SensorTick {
                    generation: self.generation,
                },
            ));
            out.note("woke", 1);
        }
    }

    fn fall_asleep(&mut self, now: SimTime, env: &NodeEnv<'_>, out: &mut NodeOutput) {
        self.mode = NodeMode::Sleep;
        self.generation += 1;
        self.membership = None;
        self.magnetic_latched = false;
        self.chemical_latched = false;
        out.timers.push((
            next_aligned(now, env.protocol.guard_period, true),
            NodeEvent::SensorTick {
                generation: self.generation,
            },
        ));
        out.note("slept", 1);
    }

    fn dissolve_cluster(&mut self, out: &mut NodeOutput) {
        if let Some(c) = self.cluster.take() {
            out.note("dissolved", c.id);
            if self.mode == NodeMode::ClusterHead {
                self.mode = NodeMode::Active;
            }
        }
    }

    fn may_sleep(&self, now: SimTime, env: &NodeEnv<'_>) -> bool {
        !env.protocol.force_active
            && matches!(self.mode, NodeMode::Active | NodeMode::ClusterMember)
            && self.cluster.is_none()
            && self.sponsoring.is_empty()
            && self.gas_session.is_none()
            && now.since(self.last_activity) >= env.protocol.idle_timeout
    }

    pub fn handle_event(
        &mut self,
        event: NodeEvent,
        now: SimTime,
        sensors: &mut dyn SensorSuite,
        env: &NodeEnv<'_>,
    ) -> Result<NodeOutput, SimError> {
        debug_assert!(
            now >= self.last_accrual,
            "clock regression at node {}",
            self.id
        );
        let before = self.ledger.consumed();
        self.ledger
            .accrue(self.mode, now.since(self.last_accrual), 0, 0);
        self.last_accrual = now;

        let mut out = NodeOutput::default();
        let mut samples = 0;
        match event {
            NodeEvent::SensorTick { generation } => {
                samples = self.on_tick(generation, now, sensors, env, &mut out);
            }
            NodeEvent::GasSample => {
                samples = self.on_gas_sample(now, sensors, env, &mut out);
            }
            NodeEvent::RoundClose { cluster } => self.on_round_close(cluster, now, env, &mut out),
            NodeEvent::Deliver(msg) => self.on_message(msg, now, env, &mut out)?,
            NodeEvent::Settle => {}
        }
        self.ledger
            .accrue(self.mode, 0.0, out.sends.len() as u32, samples);
        out.energy_delta = self.ledger.consumed() - before;
        Ok(out)
    }

    fn on_tick(
        &mut self,
        generation: u64,
        now: SimTime,
        sensors: &mut dyn SensorSuite,
        env: &NodeEnv<'_>,
        out: &mut NodeOutput,
    ) -> u32 {
        if generation != self.generation {
            out.note("stale", 1);
            return 0;
        }
        let was_asleep = self.mode == NodeMode::Sleep;
        let modalities: &[Modality] = if was_asleep {
            &[Modality::Magnetic, Modality::Chemical]
        } else {
            &[Modality::Magnetic, Modality::Chemical, Modality::Radar]
        };
        let readings: Vec<_> = modalities
            .iter()
            .filter_map(|&m| sensors.sample(self.id, self.pos, m, now))
            .collect();
        let samples = modalities.len() as u32;

        let magnetic = readings.iter().find(|r| r.modality == Modality::Magnetic);
        let chemical = readings.iter().find(|r| r.modality == Modality::Chemical);
        let radar = readings.iter().find(|r| r.modality == Modality::Radar);

        if !readings.is_empty() {
            self.last_activity = now;
            self.wake(now, env, out, true);
        }

        // Edge-triggered notifications: one CuNotify per rising edge.
        match magnetic {
            Some(r) if !self.magnetic_latched => {
                self.magnetic_latched = true;
                out.sends.push(self.cu_notify(r.clone(), now));
            }
            Some(_) => {}
            None => self.magnetic_latched = false,
        }
        match chemical {
            Some(r) if !self.chemical_latched => {
                self.chemical_latched = true;
                out.sends.push(self.cu_notify(r.clone(), now));
                if self.gas_session.is_none() {
                    self.gas_session = Some(now);
                    out.timers
                        .push((now.after(env.protocol.gas_interval), NodeEvent::GasSample));
                    out.note("gas_session", "start");
                }
            }
            Some(_) => {}
            None => self.chemical_latched = false,
        }
        if let (Some(r), Some(m)) = (radar, self.membership.as_mut()) {
            if !m.reported {
                m.reported = true;
                let body = MessageBody::DetectionReport {
                    cluster: m.cluster,
                    reading: r.clone(),
                };
                let sponsor = m.sponsor;
                out.sends.push(self.message(sponsor, now, body));
                if self.mode == NodeMode::Active {
                    self.mode = NodeMode::ClusterMember;
                }
            }
        }
        out.positives = readings;

        if was_asleep && self.mode == NodeMode::Sleep {
            out.timers.push((
                now.after(env.protocol.guard_period),
                NodeEvent::SensorTick {
                    generation: self.generation,
                },
            ));
        } else if !was_asleep {
            if self.may_sleep(now, env) {
                self.fall_asleep(now, env, out);
            } else {
                out.timers.push((
                    now.after(env.radar_period),
                    NodeEvent::SensorTick {
                        generation: self.generation,
                    },
                ));
            }
        }
        samples
    }

    fn on_gas_sample(
        &mut self,
        now: SimTime,
        sensors: &mut dyn SensorSuite,
        env: &NodeEnv<'_>,
        out: &mut NodeOutput,
    ) -> u32 {
        let Some(started) = self.gas_session else {
            out.note("stale", 1);
            return 0;
        };
        match sensors.sample(self.id, self.pos, Modality::Gas, now) {
            Some(r) => {
                self.last_activity = now;
                self.gas_session = None;
                out.sends.push(self.cu_notify(r.clone(), now));
                out.positives.push(r);
                out.note("gas_session", "confirmed");
            }
            None => {
                let next = now.after(env.protocol.gas_interval);
                if next.since(started) <= env.protocol.gas_window {
                    out.timers.push((next, NodeEvent::GasSample));
                } else {
                    self.gas_session = None;
                    out.note("gas_session", "expired");
                }
            }
        }
        1
    }

    fn on_round_close(
        &mut self,
        cluster: ClusterId,
        now: SimTime,
        env: &NodeEnv<'_>,
        out: &mut NodeOutput,
    ) {
        let Some(round) = self.sponsoring.get_mut(&cluster) else {
            out.note("stale", 1);
            return;
        };
        out.note("round", cluster);
        match close_round(round, env.protocol.max_empty_windows) {
            RoundOutcome::Extend => {
                out.note("reports", 0);
                out.timers.push((
                    now.after(env.protocol.round_window),
                    NodeEvent::RoundClose { cluster },
                ));
            }
            RoundOutcome::Lost => {
                let round = self.sponsoring.remove(&cluster).expect("round present");
                out.note("track_loss", 1);
                out.note("track", round.track.id);
                self.dissolve_own_cluster_of(cluster, out);
                out.sends.push(self.message(
                    Endpoint::CommandCenter,
                    now,
                    MessageBody::TrackUpdate {
                        cluster,
                        track: round.track.id,
                        fix: None,
                        predicted: None,
                        lost: true,
                    },
                ));
            }
            RoundOutcome::Elected { head, members } => {
                let round = self.sponsoring.remove(&cluster).expect("round present");
                out.note("reports", round.reports.len());
                out.note("elected", head);
                self.dissolve_own_cluster_of(cluster, out);
                out.sends.push(self.message(
                    Endpoint::Node(head),
                    now,
                    MessageBody::HeadClaim {
                        cluster,
                        members,
                        reports: round.reports,
                        track: round.track,
                    },
                ));
            }
        }
    }

    /// The sponsor of round `r + 1` is the head of cluster `r`, which ends
    /// when the round it sponsors concludes.
    fn dissolve_own_cluster_of(&mut self, next: ClusterId, out: &mut NodeOutput) {
        if self
            .cluster
            .as_ref()
            .is_some_and(|c| c.id.track == next.track)
        {
            self.dissolve_cluster(out);
        }
    }

    fn on_message(
        &mut self,
        msg: Message,
        now: SimTime,
        env: &NodeEnv<'_>,
        out: &mut NodeOutput,
    ) -> Result<(), SimError> {
        out.note("msg", msg.kind());
        out.note("from", msg.from);
        match msg.body {
            MessageBody::WakeCommand {
                cluster, sponsor, ..
            } => {
                out.note("round", cluster);
                if self
                    .cluster
                    .as_ref()
                    .is_some_and(|c| c.id.track != cluster.track)
                {
                    out.note("ignored", "busy-head");
                    return Ok(());
                }
                self.last_activity = now;
                self.membership = Some(RoundMembership {
                    cluster,
                    sponsor,
                    reported: false,
                });
                self.wake(now, env, out, false);
            }
            MessageBody::DetectionReport { cluster, reading } => {
                out.note("round", cluster);
                match self.sponsoring.get_mut(&cluster) {
                    Some(round) => {
                        round.add_report(reading);
                    }
                    None => out.note("ignored", "late"),
                }
            }
            MessageBody::HeadClaim {
                cluster,
                members,
                reports,
                mut track,
            } => {
                self.last_activity = now;
                self.wake(now, env, out, false);
                self.dissolve_cluster(out);
                let formed = Cluster::new(cluster, self.id, members, now);
                self.mode = NodeMode::ClusterHead;
                out.note("formed", cluster);
                out.note("head", self.id);
                out.note(
                    "members",
                    formed
                        .members
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join("|"),
                );
                self.cluster = Some(formed);
                out.note("track", track.id);

                let fix = fuse_round(&reports).ok();
                let fix = fix.filter(|f| track.push_fix(*f).is_ok());
                if let Some(f) = fix {
                    out.note("fix_t", f.time.secs());
                    out.note("fix_x", f.pos.x);
                    out.note("fix_y", f.pos.y);
                    out.note("fix_src", f.source.as_str());
                }
                let predicted = track.predict(env.protocol.round_window);
                let wake =
                    predicted.map(|(_, p)| select_wake_set(p, env.field, env.protocol.wake_radius));
                if let Some((pt, pp)) = predicted {
                    out.note("pred_t", pt.secs());
                    out.note("pred_x", pp.x);
                    out.note("pred_y", pp.y);
                }
                match wake {
                    Some(ws) if !ws.track_loss => {
                        let next = cluster.next();
                        out.note(
                            "wake",
                            ws.nodes
                                .iter()
                                .map(u32::to_string)
                                .collect::<Vec<_>>()
                                .join("|"),
                        );
                        let predicted_pos = predicted.map(|p| p.1).unwrap_or(self.pos);
                        for n in &ws.nodes {
                            out.sends.push(self.message(
                                Endpoint::Node(*n),
                                now,
                                MessageBody::WakeCommand {
                                    cluster: next,
                                    sponsor: self.endpoint(),
                                    predicted: predicted_pos,
                                },
                            ));
                        }
                        out.sends.push(self.message(
                            Endpoint::CommandCenter,
                            now,
                            MessageBody::TrackUpdate {
                                cluster,
                                track: track.id,
                                fix,
                                predicted,
                                lost: false,
                            },
                        ));
                        self.sponsoring.insert(next, Round::new(next, track));
                        out.timers.push((
                            now.after(env.protocol.round_window),
                            NodeEvent::RoundClose { cluster: next },
                        ));
                    }
                    _ => {
                        out.note("track_loss", 1);
                        out.sends.push(self.message(
                            Endpoint::CommandCenter,
                            now,
                            MessageBody::TrackUpdate {
                                cluster,
                                track: track.id,
                                fix,
                                predicted,
                                lost: true,
                            },
                        ));
                        self.dissolve_cluster(out);
                    }
                }
            }
            MessageBody::TrackUpdate { .. } | MessageBody::CuNotify { .. } => {
                return Err(SimError::UnknownEventKind {
                    actor: self.endpoint().to_string(),
                    kind: msg_kind_str(&msg.body),
                });
            }
        }
        Ok(())
    }
}

fn msg_kind_str(body: &MessageBody) -> &'static str {
    match body {
        MessageBody::TrackUpdate { .. } => "TrackUpdate",
        MessageBody::CuNotify { .. } => "CuNotify",
        MessageBody::DetectionReport { .. } => "DetectionReport",
        MessageBody::WakeCommand { .. } => "WakeCommand",
        MessageBody::HeadClaim { .. } => "HeadClaim",
    }
}
