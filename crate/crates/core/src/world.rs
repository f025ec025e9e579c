//! Ground truth: the deployment field, target trajectories and the residual
//! gas plume left behind by emitting targets.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::WorldError;

/// 30 ft in meters.
pub const RADAR_RANGE_M: f64 = 9.144;

/// Seconds that airborne particles remain detectable after the last feeding.
pub const PLUME_PERSISTENCE_S: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentField {
    pub width: f64,
    pub height: f64,
    pub nodes: Vec<(NodeId, Position)>,
}

impl DeploymentField {
    pub fn contains(&self, p: Position) -> bool {
        p.x.is_finite()
            && p.y.is_finite()
            && (0.0..=self.width).contains(&p.x)
            && (0.0..=self.height).contains(&p.y)
    }

    pub fn position_of(&self, id: NodeId) -> Option<Position> {
        self.nodes.iter().find(|(n, _)| *n == id).map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: SimTime,
    pub pos: Position,
}

/// What the target carries. Any subset of the signals may be absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cargo {
    pub ferrous_mass: f64,
    pub chemical: Option<Vec<f64>>,
    pub gas_rate: f64,
    pub identity: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: u32,
    pub trajectory: Vec<Waypoint>,
    pub cargo: Cargo,
}

impl Target {
    pub fn start_time(&self) -> SimTime {
        self.trajectory[0].t
    }

    /// Piecewise-linear ground truth; holds the final waypoint afterwards.
    pub fn position_at(&self, t: SimTime) -> Result<Position, WorldError> {
        let first = self.trajectory.first().ok_or(WorldError::BeforeStart {
            target: self.id,
            t: t.secs(),
        })?;
        if t < first.t {
            return Err(WorldError::BeforeStart {
                target: self.id,
                t: t.secs(),
            });
        }
        // Index of the first waypoint strictly after t.
        let next = self.trajectory.partition_point(|w| w.t <= t);
        if next == self.trajectory.len() {
            return Ok(self.trajectory[next - 1].pos);
        }
        let (a, b) = (self.trajectory[next - 1], self.trajectory[next]);
        if t == a.t {
            return Ok(a.pos);
        }
        let frac = t.since(a.t) / b.t.since(a.t);
        Ok(Position::new(
            a.pos.x + (b.pos.x - a.pos.x) * frac,
            a.pos.y + (b.pos.y - a.pos.y) * frac,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeCell {
    pub concentration: f64,
    pub last_fed: SimTime,
}

/// Grid of per-cell particle concentrations with a hold-then-clear lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct PlumeField {
    width: f64,
    height: f64,
    cell_size: f64,
    persistence: f64,
    cells: BTreeMap<(u32, u32), PlumeCell>,
}

impl PlumeField {
    pub fn new(width: f64, height: f64, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "plume cell size must be positive");
        PlumeField {
            width,
            height,
            cell_size,
            persistence: PLUME_PERSISTENCE_S,
            cells: BTreeMap::new(),
        }
    }

    pub fn persistence(&self) -> f64 {
        self.persistence
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn cell_index(&self, p: Position) -> Option<(u32, u32)> {
        if !(p.x.is_finite() && p.y.is_finite())
            || !(0.0..=self.width).contains(&p.x)
            || !(0.0..=self.height).contains(&p.y)
        {
            return None;
        }
        let max_col = ((self.width / self.cell_size).ceil() as u32).saturating_sub(1);
        let max_row = ((self.height / self.cell_size).ceil() as u32).saturating_sub(1);
        let col = ((p.x / self.cell_size) as u32).min(max_col);
        let row = ((p.y / self.cell_size) as u32).min(max_row);
        Some((col, row))
    }

    fn is_live(&self, cell: &PlumeCell, t: SimTime) -> bool {
        t.since(cell.last_fed) <= self.persistence
    }

    /// Deposits `rate * tick` into the cell under `p`. Points outside the
    /// field are dropped.
    pub fn deposit(&mut self, p: Position, rate: f64, tick: f64, t: SimTime) {
        if rate <= 0.0 {
            return;
        }
        let Some(idx) = self.cell_index(p) else {
            return;
        };
        let persistence = self.persistence;
        let cell = self.cells.entry(idx).or_insert(PlumeCell {
            concentration: 0.0,
            last_fed: t,
        });
        if t.since(cell.last_fed) > persistence {
            cell.concentration = 0.0;
        }
        cell.concentration += rate * tick;
        cell.last_fed = cell.last_fed.max(t);
    }

    /// Feeds the plume from `target`'s position at `t` for one tick of `tick` seconds.
    pub fn feed(&mut self, target: &Target, t: SimTime, tick: f64) {
        if target.cargo.gas_rate <= 0.0 {
            return;
        }
        if let Ok(p) = target.position_at(t) {
            self.deposit(p, target.cargo.gas_rate, tick, t);
        }
    }

    pub fn concentration(&self, p: Position, t: SimTime) -> Result<f64, WorldError> {
        let idx = self
            .cell_index(p)
            .ok_or(WorldError::OutOfField { x: p.x, y: p.y })?;
        Ok(match self.cells.get(&idx) {
            Some(cell) if self.is_live(cell, t) => cell.concentration,
            _ => 0.0,
        })
    }

    /// Sum of all live cell concentrations at `t`.
    pub fn total_mass(&self, t: SimTime) -> f64 {
        self.cells
            .values()
            .filter(|c| self.is_live(c, t))
            .map(|c| c.concentration)
            .sum()
    }
}
