//! Wires the world, the nodes and the control unit into one event loop and
//! records every dispatched event as a trace line.

use std::collections::BTreeMap;

use crate::command::{
    Alert, Camera, CenterEnv, CenterEvent, CommandCenter, TrackRecord, Watchlist,
};
use crate::engine::{ActorId, Context, Event, Handler, RandomSource, SimTime, Simulation};
use crate::error::SimError;
use crate::protocol::{
    link_delay, Endpoint, Message, Node, NodeEnv, NodeEvent, NodeMode, SensorSuite,
};
use crate::scenario::Scenario;
use crate::sensing::{
    sample_chemical, sample_gas, sample_magnetic, sample_radar, Modality, SensorConfig,
    SensorReading,
};
use crate::trace::{trace_time, Trace, TraceHeader, TraceLine};
use crate::world::{distance, NodeId, PlumeField, Position, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Node(NodeEvent),
    Center(CenterEvent),
    TargetMotion,
}

/// Samples ground truth. With several targets in range the strongest
/// reading wins.
pub struct GroundTruthSensors<'a> {
    pub targets: &'a [Target],
    pub plume: &'a PlumeField,
    pub config: &'a SensorConfig,
    pub rng: &'a mut RandomSource,
}

impl SensorSuite for GroundTruthSensors<'_> {
    fn sample(
        &mut self,
        node: NodeId,
        pos: Position,
        modality: Modality,
        t: SimTime,
    ) -> Option<SensorReading> {
        let cfg = self.config;
        if modality == Modality::Gas {
            return sample_gas(node, pos, self.plume, t, &cfg.gas, self.rng)
                .ok()
                .flatten();
        }
        let mut best: Option<SensorReading> = None;
        for target in self.targets {
            let reading = match modality {
                Modality::Magnetic => sample_magnetic(node, pos, target, t, &cfg.magnetic),
                Modality::Chemical => {
                    sample_chemical(node, pos, target, t, &cfg.chemical, self.rng)
                }
                Modality::Radar => sample_radar(node, pos, target, t, &cfg.radar, self.rng),
                Modality::Gas => unreachable!(),
            };
            if let Some(r) = reading {
                if best.as_ref().is_none_or(|b| r.strength > b.strength) {
                    best = Some(r);
                }
            }
        }
        best
    }
}

/// Returns the identity of the nearest target within `radius`.
pub struct GroundTruthCamera<'a> {
    pub targets: &'a [Target],
    pub radius: f64,
}

impl Camera for GroundTruthCamera<'_> {
    fn capture(&self, near: Position, t: SimTime) -> Option<String> {
        self.targets
            .iter()
            .filter_map(|target| Some((distance(target.position_at(t).ok()?, near), target)))
            .filter(|(d, _)| *d <= self.radius)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .and_then(|(_, target)| target.cargo.identity.clone())
    }
}

pub struct EdassWorld {
    scenario: Scenario,
    plume: PlumeField,
    nodes: Vec<Node>,
    index: BTreeMap<NodeId, usize>,
    center: CommandCenter,
    error: Option<SimError>,
}

fn actor_of(endpoint: Endpoint) -> ActorId {
    match endpoint {
        Endpoint::Node(id) => ActorId::Node(id),
        Endpoint::CommandCenter => ActorId::CommandCenter,
    }
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

impl EdassWorld {
    pub fn new(scenario: Scenario) -> Self {
        let mode = if scenario.protocol.force_active {
            NodeMode::Active
        } else {
            NodeMode::Sleep
        };
        let nodes: Vec<Node> = scenario
            .field
            .nodes
            .iter()
            .map(|&(id, pos)| Node::new(id, pos, scenario.energy.clone(), mode))
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let watchlist: Watchlist = scenario
            .watchlist
            .iter()
            .map(|w| (w.key.clone(), w.clone()))
            .collect();
        let center = CommandCenter::new(scenario.signature_db(), scenario.tolerance, watchlist);
        let plume = PlumeField::new(
            scenario.field.width,
            scenario.field.height,
            scenario.cell_size,
        );
        EdassWorld {
            scenario,
            plume,
            nodes,
            index,
            center,
            error: None,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn center(&self) -> &CommandCenter {
        &self.center
    }

    pub fn plume(&self) -> &PlumeField {
        &self.plume
    }

    /// Seeds the initial sensor ticks, target motion and the end-of-run settle.
    pub fn prime(&self, sim: &mut Simulation<Payload>) -> Result<(), SimError> {
        let t_end = SimTime::from_secs(self.scenario.t_end);
        for node in &self.nodes {
            let tick = NodeEvent::SensorTick {
                generation: node.generation(),
            };
            sim.scheduler
                .schedule(SimTime::ZERO, ActorId::Node(node.id), Payload::Node(tick))?;
        }
        for target in &self.scenario.targets {
            sim.scheduler.schedule(
                target.start_time(),
                ActorId::Target(target.id),
                Payload::TargetMotion,
            )?;
        }
        for node in &self.nodes {
            sim.scheduler.schedule(
                t_end,
                ActorId::Node(node.id),
                Payload::Node(NodeEvent::Settle),
            )?;
        }
        Ok(())
    }

    fn send(
        &self,
        msg: Message,
        ctx: &mut Context<'_, Payload>,
        sent: &mut Vec<String>,
        dropped: &mut usize,
    ) -> Result<(), SimError> {
        if ctx.rng.chance(self.scenario.link.drop_probability) {
            *dropped += 1;
            return Ok(());
        }
        sent.push(format!("{}@{}", msg.kind(), msg.to));
        let delay = link_delay(msg.size_bytes(), msg.direction(), &self.scenario.link);
        let actor = actor_of(msg.to);
        let payload = match msg.to {
            Endpoint::Node(_) => Payload::Node(NodeEvent::Deliver(msg)),
            Endpoint::CommandCenter => Payload::Center(CenterEvent::Deliver(msg)),
        };
        ctx.scheduler.schedule_in(delay, actor, payload)?;
        Ok(())
    }

    fn on_node(
        &mut self,
        id: NodeId,
        event: NodeEvent,
        ctx: &mut Context<'_, Payload>,
        fields: &mut Vec<(String, String)>,
    ) -> Result<(), SimError> {
        let now = ctx.now();
        let &i = self
            .index
            .get(&id)
            .ok_or_else(|| SimError::UnknownEventKind {
                actor: ActorId::Node(id).to_string(),
                kind: event.kind(),
            })?;
        let env = NodeEnv {
            field: &self.scenario.field,
            protocol: &self.scenario.protocol,
            radar_period: self.scenario.sensors.radar.period,
        };
        let mut sensors = GroundTruthSensors {
            targets: &self.scenario.targets,
            plume: &self.plume,
            config: &self.scenario.sensors,
            rng: ctx.rng,
        };
        let out = self.nodes[i].handle_event(event, now, &mut sensors, &env)?;
        fields.extend(out.fields.iter().map(|(k, v)| (k.to_string(), v.clone())));
        if !out.positives.is_empty() {
            fields.push((
                "detect".into(),
                join(out.positives.iter().map(|r| r.modality)),
            ));
        }
        for (t, ev) in out.timers {
            ctx.scheduler
                .schedule(t, ActorId::Node(id), Payload::Node(ev))?;
        }
        let (mut sent, mut dropped) = (Vec::new(), 0);
        for msg in out.sends {
            self.send(msg, ctx, &mut sent, &mut dropped)?;
        }
        if !sent.is_empty() {
            fields.push(("sent".into(), sent.join("|")));
        }
        if dropped > 0 {
            fields.push(("dropped".into(), dropped.to_string()));
        }
        let node = &self.nodes[i];
        fields.push(("mode".into(), node.mode().to_string()));
        fields.push(("energy".into(), node.ledger().consumed().to_string()));
        Ok(())
    }

    fn on_center(
        &mut self,
        event: CenterEvent,
        ctx: &mut Context<'_, Payload>,
        fields: &mut Vec<(String, String)>,
    ) -> Result<(), SimError> {
        let now = ctx.now();
        let camera = GroundTruthCamera {
            targets: &self.scenario.targets,
            radius: self.scenario.protocol.association_radius,
        };
        let env = CenterEnv {
            field: &self.scenario.field,
            protocol: &self.scenario.protocol,
            camera: &camera,
        };
        let out = self.center.handle_event(event, now, &env)?;
        fields.extend(out.fields.iter().map(|(k, v)| (k.to_string(), v.clone())));
        for (t, ev) in out.timers {
            ctx.scheduler
                .schedule(t, ActorId::CommandCenter, Payload::Center(ev))?;
        }
        for alert in out.alerts {
            ctx.scheduler.schedule(
                now,
                ActorId::CommandCenter,
                Payload::Center(CenterEvent::AlertIssued(alert)),
            )?;
        }
        let (mut sent, mut dropped) = (Vec::new(), 0);
        for msg in out.sends {
            self.send(msg, ctx, &mut sent, &mut dropped)?;
        }
        if !sent.is_empty() {
            fields.push(("sent".into(), sent.join("|")));
        }
        if dropped > 0 {
            fields.push(("dropped".into(), dropped.to_string()));
        }
        Ok(())
    }

    fn on_motion(
        &mut self,
        id: u32,
        ctx: &mut Context<'_, Payload>,
        fields: &mut Vec<(String, String)>,
    ) -> Result<(), SimError> {
        let now = ctx.now();
        let tick = self.scenario.motion_tick;
        let Some(target) = self.scenario.targets.iter().find(|t| t.id == id) else {
            return Err(SimError::UnknownEventKind {
                actor: ActorId::Target(id).to_string(),
                kind: "motion",
            });
        };
        self.plume.feed(target, now, tick);
        if let Ok(p) = target.position_at(now) {
            fields.push(("x".into(), p.x.to_string()));
            fields.push(("y".into(), p.y.to_string()));
        }
        ctx.scheduler
            .schedule_in(tick, ActorId::Target(id), Payload::TargetMotion)?;
        Ok(())
    }
}

impl Handler<Payload> for EdassWorld {
    type Record = TraceLine;

    fn handle(&mut self, event: Event<Payload>, ctx: &mut Context<'_, Payload>) -> TraceLine {
        let mut fields = vec![("seq".to_string(), event.seq.to_string())];
        if let Payload::Node(NodeEvent::Deliver(msg)) | Payload::Center(CenterEvent::Deliver(msg)) =
            &event.payload
        {
            fields.push(("sent_at".into(), msg.sent_at.secs().to_string()));
        }
        let (kind, result) = match (event.actor, event.payload) {
            (ActorId::Node(id), Payload::Node(ev)) => {
                (ev.kind(), self.on_node(id, ev, ctx, &mut fields))
            }
            (ActorId::CommandCenter, Payload::Center(ev)) => {
                (ev.kind(), self.on_center(ev, ctx, &mut fields))
            }
            (ActorId::Target(id), Payload::TargetMotion) => {
                ("motion", self.on_motion(id, ctx, &mut fields))
            }
            (actor, payload) => {
                let kind = match payload {
                    Payload::Node(ev) => ev.kind(),
                    Payload::Center(ev) => ev.kind(),
                    Payload::TargetMotion => "motion",
                };
                let err = SimError::UnknownEventKind {
                    actor: actor.to_string(),
                    kind,
                };
                (kind, Err(err))
            }
        };
        if let Err(e) = result {
            fields.push(("error".into(), e.to_string()));
            self.error.get_or_insert(e);
        }
        TraceLine {
            time: trace_time(event.time),
            actor: event.actor,
            kind: kind.to_string(),
            fields,
        }
    }
}

/// Result of one simulated run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    /// Final consumed energy per node in joules.
    pub energy: BTreeMap<NodeId, f64>,
    pub alerts: Vec<Alert>,
    pub tracks: BTreeMap<u32, TrackRecord>,
}

impl RunOutput {
    pub fn total_energy(&self) -> f64 {
        self.energy.values().sum()
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario.seed);
    let mut world = EdassWorld::new(scenario.clone());
    world.prime(&mut sim)?;
    let dispatched = sim.run_until(&mut world, SimTime::from_secs(scenario.t_end))?;
    if let Some(e) = world.error.take() {
        return Err(e);
    }
    let trace = Trace {
        header: Some(TraceHeader {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            nodes: scenario.field.nodes.len(),
        }),
        lines: dispatched.into_iter().map(|d| d.record).collect(),
    };
    Ok(RunOutput {
        trace,
        energy: world
            .nodes
            .iter()
            .map(|n| (n.id, n.ledger().consumed()))
            .collect(),
        alerts: world.center.issued_alerts().to_vec(),
        tracks: world.center.tracks().clone(),
    })
}
