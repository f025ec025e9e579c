//! Cluster mechanics: head election, weighted-centroid localization,
//! constant-velocity prediction and successor wake-set selection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::error::FusionError;
use crate::sensing::SensorReading;
use crate::world::{distance, DeploymentField, NodeId, Position};

/// Cluster `round` of track `track`. Each tracking round forms one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId {
    pub track: u32,
    pub round: u32,
}

impl ClusterId {
    pub fn next(self) -> ClusterId {
        ClusterId {
            track: self.track,
            round: self.round + 1,
        }
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.track, self.round)
    }
}

impl FromStr for ClusterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (track, round) = s
            .split_once('.')
            .ok_or_else(|| format!("bad cluster id `{s}`"))?;
        Ok(ClusterId {
            track: track.parse().map_err(|_| format!("bad cluster id `{s}`"))?,
            round: round.parse().map_err(|_| format!("bad cluster id `{s}`"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    pub head: NodeId,
    pub members: BTreeSet<NodeId>,
    pub formed_at: SimTime,
}

impl Cluster {
    /// The head is always counted as a member.
    pub fn new(
        id: ClusterId,
        head: NodeId,
        members: impl IntoIterator<Item = NodeId>,
        formed_at: SimTime,
    ) -> Self {
        let mut members: BTreeSet<NodeId> = members.into_iter().collect();
        members.insert(head);
        Cluster {
            id,
            head,
            members,
            formed_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixSource {
    Fused,
    Radar,
}

impl FixSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FixSource::Fused => "fused",
            FixSource::Radar => "radar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub time: SimTime,
    pub pos: Position,
    pub source: FixSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub id: u32,
    pub fixes: Vec<Fix>,
    pub predicted: Option<(SimTime, Position)>,
}

impl TargetTrack {
    pub fn new(id: u32) -> Self {
        TargetTrack {
            id,
            fixes: Vec::new(),
            predicted: None,
        }
    }

    pub fn last_fix(&self) -> Option<&Fix> {
        self.fixes.last()
    }

    pub fn push_fix(&mut self, fix: Fix) -> Result<(), FusionError> {
        if let Some(last) = self.fixes.last() {
            if fix.time <= last.time {
                return Err(FusionError::NonIncreasingTimes);
            }
        }
        self.fixes.push(fix);
        Ok(())
    }

    /// Predicts from the last two fixes, or holds the single fix for
    /// `horizon` seconds when only one exists.
    pub fn predict(&mut self, horizon: f64) -> Option<(SimTime, Position)> {
        let prediction = match self.fixes.as_slice() {
            [] => return None,
            [only] => (only.time.after(horizon), only.pos),
            [.., prev, cur] => predict_next((prev.time, prev.pos), (cur.time, cur.pos)).ok()?,
        };
        self.predicted = Some(prediction);
        Some(prediction)
    }
}

/// Strongest reporter wins; equal strengths go to the smallest node id.
pub fn elect_cluster_head(reports: &[SensorReading]) -> Result<NodeId, FusionError> {
    reports
        .iter()
        .min_by(|a, b| b.strength.total_cmp(&a.strength).then(a.node.cmp(&b.node)))
        .map(|r| r.node)
        .ok_or(FusionError::EmptyReports)
}

/// Strength-weighted centroid of the reported positions.
pub fn fuse_location(reports: &[(Position, f64)]) -> Result<Position, FusionError> {
    if reports.is_empty() {
        return Err(FusionError::EmptyReports);
    }
    let total: f64 = reports.iter().map(|(_, w)| w).sum();
    if total.is_nan() || total <= 0.0 || reports.iter().any(|(_, w)| *w < 0.0) {
        return Err(FusionError::ZeroWeightSum);
    }
    let (sx, sy) = reports
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (p, w)| (sx + w * p.x, sy + w * p.y));
    Ok(Position::new(sx / total, sy / total))
}

/// Constant-velocity extrapolation over the same interval as the inputs.
pub fn predict_next(
    prev: (SimTime, Position),
    cur: (SimTime, Position),
) -> Result<(SimTime, Position), FusionError> {
    if cur.0 <= prev.0 {
        return Err(FusionError::NonIncreasingTimes);
    }
    let dt = cur.0.since(prev.0);
    Ok((
        cur.0.after(dt),
        Position::new(
            cur.1.x + (cur.1.x - prev.1.x),
            cur.1.y + (cur.1.y - prev.1.y),
        ),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WakeSet {
    pub nodes: Vec<NodeId>,
    pub track_loss: bool,
}

/// Every node within `wake_radius` (inclusive) of `predicted`, ascending id.
pub fn select_wake_set(predicted: Position, field: &DeploymentField, wake_radius: f64) -> WakeSet {
    let mut nodes: Vec<NodeId> = field
        .nodes
        .iter()
        .filter(|(_, p)| distance(*p, predicted) <= wake_radius)
        .map(|(id, _)| *id)
        .collect();
    nodes.sort_unstable();
    WakeSet {
        track_loss: nodes.is_empty(),
        nodes,
    }
}

/// Fuses the radar reports of one round into a fix. Only reports taken at
/// the latest sample instant contribute, so members that ticked earlier do
/// not drag the estimate backwards in time.
pub fn fuse_round(reports: &[SensorReading]) -> Result<Fix, FusionError> {
    let latest = reports
        .iter()
        .filter(|r| r.fix().is_some())
        .map(|r| r.time)
        .max()
        .ok_or(FusionError::EmptyReports)?;
    let current: Vec<(Position, f64)> = reports
        .iter()
        .filter(|r| r.time == latest)
        .filter_map(|r| r.fix().map(|p| (p, r.strength)))
        .collect();
    let pos = match fuse_location(&current) {
        // Every reporter sat exactly on the range boundary.
        Err(FusionError::ZeroWeightSum) => {
            let equal: Vec<_> = current.iter().map(|(p, _)| (*p, 1.0)).collect();
            fuse_location(&equal)?
        }
        other => other?,
    };
    Ok(Fix {
        time: latest,
        pos,
        source: if current.len() > 1 {
            FixSource::Fused
        } else {
            FixSource::Radar
        },
    })
}

/// Reports gathered by a round sponsor before it elects the next head.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub cluster: ClusterId,
    pub track: TargetTrack,
    pub reports: Vec<SensorReading>,
    pub empty_windows: u32,
}

impl Round {
    pub fn new(cluster: ClusterId, track: TargetTrack) -> Self {
        Round {
            cluster,
            track,
            reports: Vec::new(),
            empty_windows: 0,
        }
    }

    /// Keeps only the first report from each node.
    pub fn add_report(&mut self, reading: SensorReading) -> bool {
        if self.reports.iter().any(|r| r.node == reading.node) {
            return false;
        }
        self.reports.push(reading);
        true
    }
}
