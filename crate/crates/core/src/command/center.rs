//! The control unit as an event-loop actor. It owns the signature database
//! and watchlist, opens the first tracking round of every track, and
//! escalates once per chemically confirmed track.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    escalate, lookup_identity, mark_brown, Alert, Confirmation, ConfirmedCompound, MatchResult,
    SignatureDb, Tolerance, Watchlist,
};
use crate::engine::SimTime;
use crate::error::SimError;
use crate::fusion::{select_wake_set, ClusterId, Round, TargetTrack};
use crate::protocol::{close_round, Endpoint, Message, MessageBody, ProtocolConfig, RoundOutcome};
use crate::sensing::{Modality, SensorReading};
use crate::world::{distance, DeploymentField, NodeId, Position};

/// Identity capture near a position. Stands in for camera imagery plus
/// recognition.
pub trait Camera {
    fn capture(&self, near: Position, t: SimTime) -> Option<String>;
}

pub struct CenterEnv<'a> {
    pub field: &'a DeploymentField,
    pub protocol: &'a ProtocolConfig,
    pub camera: &'a dyn Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CenterEvent {
    Deliver(Message),
    RoundClose { cluster: ClusterId },
    AlertIssued(Alert),
}

impl CenterEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            CenterEvent::Deliver(_) => "deliver",
            CenterEvent::RoundClose { .. } => "round-close",
            CenterEvent::AlertIssued(_) => "alert",
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CenterOutput {
    pub sends: Vec<Message>,
    pub timers: Vec<(SimTime, CenterEvent)>,
    /// Alerts to issue at the current instant, in order.
    pub alerts: Vec<Alert>,
    pub fields: Vec<(&'static str, String)>,
}

impl CenterOutput {
    fn note(&mut self, key: &'static str, value: impl ToString) {
        self.fields.push((key, value.to_string()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub id: u32,
    pub last_pos: Position,
    pub last_time: SimTime,
    pub cluster: Option<ClusterId>,
    pub live: bool,
    pub compound: Option<ConfirmedCompound>,
    pub escalated: bool,
}

#[derive(Debug, Clone)]
pub struct CommandCenter {
    db: SignatureDb,
    tolerance: Tolerance,
    watchlist: Watchlist,
    tracks: BTreeMap<u32, TrackRecord>,
    rounds: BTreeMap<ClusterId, Round>,
    woken: BTreeMap<ClusterId, BTreeSet<NodeId>>,
    readings: Vec<SensorReading>,
    issued: Vec<Alert>,
}

impl CommandCenter {
    pub fn new(db: SignatureDb, tolerance: Tolerance, watchlist: Watchlist) -> Self {
        CommandCenter {
            db,
            tolerance,
            watchlist,
            tracks: BTreeMap::new(),
            rounds: BTreeMap::new(),
            woken: BTreeMap::new(),
            readings: Vec::new(),
            issued: Vec::new(),
        }
    }

    pub fn database(&self) -> &SignatureDb {
        &self.db
    }

    pub fn watchlist(&self) -> &Watchlist {
        &self.watchlist
    }

    pub fn tracks(&self) -> &BTreeMap<u32, TrackRecord> {
        &self.tracks
    }

    /// Every reading the control unit has stored, in arrival order.
    pub fn readings(&self) -> &[SensorReading] {
        &self.readings
    }

    pub fn issued_alerts(&self) -> &[Alert] {
        &self.issued
    }

    pub fn handle_event(
        &mut self,
        event: CenterEvent,
        now: SimTime,
        env: &CenterEnv<'_>,
    ) -> Result<CenterOutput, SimError> {
        let mut out = CenterOutput::default();
        match event {
            CenterEvent::Deliver(msg) => self.on_message(msg, now, env, &mut out)?,
            CenterEvent::RoundClose { cluster } => self.on_round_close(cluster, now, env, &mut out),
            CenterEvent::AlertIssued(alert) => {
                out.note("kind", alert.kind);
                out.note("zone", alert.zone);
                out.note("details", &alert.details);
                self.issued.push(alert);
            }
        }
        Ok(out)
    }

    fn nearest_live_track(&self, p: Position, radius: f64) -> Option<u32> {
        self.tracks
            .values()
            .filter(|t| t.live)
            .map(|t| (distance(t.last_pos, p), t.id))
            .filter(|(d, _)| *d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// Returns the live track near `p`, opening a new one (and waking its
    /// first cluster) when none exists. Detections that join a track whose
    /// first round is still collecting also wake the nodes around them.
    fn ensure_track(
        &mut self,
        p: Position,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) -> u32 {
        if let Some(id) = self.nearest_live_track(p, env.protocol.association_radius) {
            let cluster = ClusterId {
                track: id,
                round: 1,
            };
            if self.rounds.contains_key(&cluster) {
                self.wake_round(cluster, p, now, env, out);
            }
            return id;
        }
        let id = self.tracks.keys().next_back().map_or(1, |k| k + 1);
        self.tracks.insert(
            id,
            TrackRecord {
                id,
                last_pos: p,
                last_time: now,
                cluster: None,
                live: true,
                compound: None,
                escalated: false,
            },
        );
        let cluster = ClusterId {
            track: id,
            round: 1,
        };
        out.note("track_opened", id);
        self.rounds
            .insert(cluster, Round::new(cluster, TargetTrack::new(id)));
        self.wake_round(cluster, p, now, env, out);
        out.timers.push((
            now.after(env.protocol.round_window),
            CenterEvent::RoundClose { cluster },
        ));
        id
    }

    fn wake_round(
        &mut self,
        cluster: ClusterId,
        p: Position,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) {
        let woken = self.woken.entry(cluster).or_default();
        let fresh: Vec<NodeId> = select_wake_set(p, env.field, env.protocol.wake_radius)
            .nodes
            .into_iter()
            .filter(|n| woken.insert(*n))
            .collect();
        if fresh.is_empty() {
            return;
        }
        out.note(
            "wake",
            fresh
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join("|"),
        );
        for n in fresh {
            out.sends.push(Message {
                from: Endpoint::CommandCenter,
                to: Endpoint::Node(n),
                sent_at: now,
                body: MessageBody::WakeCommand {
                    cluster,
                    sponsor: Endpoint::CommandCenter,
                    predicted: p,
                },
            });
        }
    }

    fn on_message(
        &mut self,
        msg: Message,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) -> Result<(), SimError> {
        out.note("msg", msg.kind());
        out.note("from", msg.from);
        match msg.body {
            MessageBody::CuNotify { reading, position } => {
                out.note("modality", reading.modality);
                out.note("strength", reading.strength);
                self.readings.push(reading.clone());
                match reading.modality {
                    Modality::Magnetic => {
                        let track = self.ensure_track(position, now, env, out);
                        out.note("track", track);
                    }
                    Modality::Chemical => {
                        let track = self.ensure_track(position, now, env, out);
                        out.note("track", track);
                        self.confirm(track, &reading, now, env, out);
                    }
                    Modality::Gas | Modality::Radar => {}
                }
            }
            MessageBody::DetectionReport { cluster, reading } => {
                out.note("round", cluster);
                match self.rounds.get_mut(&cluster) {
                    Some(round) => {
                        round.add_report(reading);
                    }
                    None => out.note("ignored", "late"),
                }
            }
            MessageBody::TrackUpdate {
                cluster,
                track,
                fix,
                lost,
                ..
            } => {
                out.note("track", track);
                out.note("cluster", cluster);
                if let Some(rec) = self.tracks.get_mut(&track) {
                    if let Some(f) = fix {
                        rec.last_pos = f.pos;
                        rec.last_time = f.time;
                    }
                    if lost {
                        rec.live = false;
                        out.note("track_closed", track);
                    } else {
                        rec.cluster = Some(cluster);
                    }
                }
                self.try_escalate(track, now, env, out);
            }
            MessageBody::WakeCommand { .. } | MessageBody::HeadClaim { .. } => {
                return Err(SimError::UnknownEventKind {
                    actor: "cc".into(),
                    kind: msg_kind(&msg.body),
                });
            }
        }
        Ok(())
    }

    fn confirm(
        &mut self,
        track: u32,
        reading: &SensorReading,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) {
        let Some(features) = reading.features() else {
            return;
        };
        let record = match self.db.match_signature(features, self.tolerance) {
            Ok(MatchResult::Known(id)) => {
                out.note("match", format!("known:{id}"));
                id
            }
            Ok(MatchResult::Unknown) => match self.db.register_unknown(features, self.tolerance) {
                Ok(id) => {
                    out.note("match", format!("registered:{id}"));
                    id
                }
                Err(e) => {
                    out.note("match_error", e.to_string().replace(' ', "_"));
                    return;
                }
            },
            Err(e) => {
                out.note("match_error", e.to_string().replace(' ', "_"));
                return;
            }
        };
        let rec = self.db.get(record).expect("matched record exists").clone();
        let entry = self.tracks.get_mut(&track).expect("track exists");
        if entry.compound.is_none() {
            entry.compound = Some(ConfirmedCompound {
                record,
                name: rec.name.clone(),
                class: rec.class,
                amount: reading.strength,
            });
            out.note("class", rec.class.as_str());
        }
        self.try_escalate(track, now, env, out);
    }

    fn try_escalate(
        &mut self,
        track: u32,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) {
        let Some(rec) = self.tracks.get_mut(&track) else {
            return;
        };
        let (Some(zone), Some(compound)) = (rec.cluster, rec.compound.clone()) else {
            return;
        };
        if rec.escalated {
            return;
        }
        rec.escalated = true;
        let identity_key = env.camera.capture(rec.last_pos, now);
        let identity = lookup_identity(identity_key.as_deref(), &self.watchlist);
        let confirmation = Confirmation {
            track,
            compound: Some(compound.clone()),
            identity_key: identity_key.clone(),
            identity,
            location: rec.last_pos,
        };
        let alerts = escalate(&confirmation, now, zone).expect("confirmed track escalates");
        if let Some(key) = &identity_key {
            mark_brown(key, &compound.name, &mut self.watchlist);
        }
        out.note("escalated", track);
        out.note("identity", identity);
        out.alerts = alerts;
    }

    fn on_round_close(
        &mut self,
        cluster: ClusterId,
        now: SimTime,
        env: &CenterEnv<'_>,
        out: &mut CenterOutput,
    ) {
        let Some(round) = self.rounds.get_mut(&cluster) else {
            out.note("stale", 1);
            return;
        };
        out.note("round", cluster);
        match close_round(round, env.protocol.max_empty_windows) {
            RoundOutcome::Extend => {
                out.note("reports", 0);
                out.timers.push((
                    now.after(env.protocol.round_window),
                    CenterEvent::RoundClose { cluster },
                ));
            }
            RoundOutcome::Lost => {
                self.rounds.remove(&cluster);
                self.woken.remove(&cluster);
                out.note("track_loss", 1);
                out.note("track", cluster.track);
                if let Some(rec) = self.tracks.get_mut(&cluster.track) {
                    rec.live = false;
                }
            }
            RoundOutcome::Elected { head, members } => {
                let round = self.rounds.remove(&cluster).expect("round present");
                self.woken.remove(&cluster);
                out.note("reports", round.reports.len());
                out.note("elected", head);
                out.sends.push(Message {
                    from: Endpoint::CommandCenter,
                    to: Endpoint::Node(head),
                    sent_at: now,
                    body: MessageBody::HeadClaim {
                        cluster,
                        members,
                        reports: round.reports,
                        track: round.track,
                    },
                });
            }
        }
    }
}

fn msg_kind(body: &MessageBody) -> &'static str {
    match body {
        MessageBody::WakeCommand { .. } => "WakeCommand",
        MessageBody::HeadClaim { .. } => "HeadClaim",
        MessageBody::TrackUpdate { .. } => "TrackUpdate",
        MessageBody::CuNotify { .. } => "CuNotify",
        MessageBody::DetectionReport { .. } => "DetectionReport",
    }
}
