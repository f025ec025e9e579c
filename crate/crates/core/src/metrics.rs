//! Summary statistics recomputed from a trace and the scenario it came from.

use std::collections::BTreeMap;
use std::fmt;

use crate::command::AlertKind;
use crate::engine::{ActorId, SimTime};
use crate::error::TraceError;
use crate::scenario::Scenario;
use crate::trace::Trace;
use crate::world::{distance, NodeId, Position};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// Seconds from the first target appearing to the first positive reading.
    pub first_detection_latency: Option<f64>,
    /// Seconds from the first target appearing to the first chemical reading
    /// matched to a known record.
    pub confirmation_latency: Option<f64>,
    /// Root-mean-square distance between fused fixes and the nearest target.
    pub tracking_rmse: Option<f64>,
    pub fix_count: usize,
    pub clusters_formed: usize,
    pub track_loss_count: usize,
    pub messages_sent: usize,
    pub energy_total: f64,
    pub energy_per_node: BTreeMap<NodeId, f64>,
    pub alert_sequence: Vec<AlertKind>,
}

fn mismatch(reason: impl Into<String>) -> TraceError {
    TraceError::MismatchedTrace(reason.into())
}

pub fn compute_metrics(trace: &Trace, scenario: &Scenario) -> Result<MetricsSummary, TraceError> {
    if let Some(h) = &trace.header {
        if h.seed != scenario.seed {
            return Err(mismatch(format!(
                "trace seed {} but scenario seed {}",
                h.seed, scenario.seed
            )));
        }
        if h.nodes != scenario.field.nodes.len() {
            return Err(mismatch(format!(
                "trace has {} nodes but scenario has {}",
                h.nodes,
                scenario.field.nodes.len()
            )));
        }
        let name: String = scenario
            .name
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        if h.scenario != name {
            return Err(mismatch(format!(
                "trace scenario `{}` but scenario `{name}`",
                h.scenario
            )));
        }
    }

    let origin = scenario.first_target_start().unwrap_or(0.0);
    let mut m = MetricsSummary {
        first_detection_latency: None,
        confirmation_latency: None,
        tracking_rmse: None,
        fix_count: 0,
        clusters_formed: 0,
        track_loss_count: 0,
        messages_sent: 0,
        energy_total: 0.0,
        energy_per_node: scenario
            .field
            .nodes
            .iter()
            .map(|(id, _)| (*id, 0.0))
            .collect(),
        alert_sequence: Vec::new(),
    };
    let mut sq_err = 0.0;
    for (i, line) in trace.lines.iter().enumerate() {
        let t = line.time.secs();
        match line.actor {
            ActorId::Node(id) => {
                if !m.energy_per_node.contains_key(&id) {
                    return Err(mismatch(format!(
                        "line {}: node {id} is not in the scenario",
                        i + 1
                    )));
                }
                if let Some(e) = line.get_f64("energy") {
                    m.energy_per_node.insert(id, e);
                }
                if line.has("detect") && m.first_detection_latency.is_none() {
                    m.first_detection_latency = Some(t - origin);
                }
                if line.has("formed") {
                    m.clusters_formed += 1;
                }
                if let (Some(ft), Some(x), Some(y)) = (
                    line.get_f64("fix_t"),
                    line.get_f64("fix_x"),
                    line.get_f64("fix_y"),
                ) {
                    let fix = Position::new(x, y);
                    let at = SimTime::from_secs(ft);
                    let err = scenario
                        .targets
                        .iter()
                        .filter_map(|target| target.position_at(at).ok())
                        .map(|p| distance(p, fix))
                        .min_by(f64::total_cmp);
                    if let Some(e) = err {
                        sq_err += e * e;
                        m.fix_count += 1;
                    }
                }
            }
            ActorId::CommandCenter => {
                let known = line.get("match").is_some_and(|v| v.starts_with("known:"));
                if known && m.confirmation_latency.is_none() {
                    m.confirmation_latency = Some(t - origin);
                }
                if line.kind == "alert" {
                    let kind = line
                        .get("kind")
                        .ok_or_else(|| TraceError::Malformed {
                            line: i + 1,
                            reason: "alert without kind".into(),
                        })?
                        .parse()
                        .map_err(|reason| TraceError::Malformed {
                            line: i + 1,
                            reason,
                        })?;
                    m.alert_sequence.push(kind);
                }
            }
            ActorId::Target(id) => {
                if !scenario.targets.iter().any(|t| t.id == id) {
                    return Err(mismatch(format!(
                        "line {}: target {id} is not in the scenario",
                        i + 1
                    )));
                }
            }
        }
        if line.get("track_loss") == Some("1") {
            m.track_loss_count += 1;
        }
        if let Some(sent) = line.get("sent") {
            m.messages_sent += sent.split('|').count();
        }
    }
    if m.fix_count > 0 {
        m.tracking_rmse = Some((sq_err / m.fix_count as f64).sqrt());
    }
    m.energy_total = m.energy_per_node.values().sum();
    Ok(m)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.6}"))
}

impl fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "first_detection_latency: {}",
            opt(self.first_detection_latency)
        )?;
        writeln!(
            f,
            "confirmation_latency: {}",
            opt(self.confirmation_latency)
        )?;
        writeln!(f, "tracking_rmse: {}", opt(self.tracking_rmse))?;
        writeln!(f, "fix_count: {}", self.fix_count)?;
        writeln!(f, "clusters_formed: {}", self.clusters_formed)?;
        writeln!(f, "track_loss_count: {}", self.track_loss_count)?;
        writeln!(f, "messages_sent: {}", self.messages_sent)?;
        writeln!(f, "energy_total: {:.6}", self.energy_total)?;
        let alerts: Vec<_> = self.alert_sequence.iter().map(|k| k.as_str()).collect();
        writeln!(
            f,
            "alert_sequence: {}",
            if alerts.is_empty() {
                "none".to_string()
            } else {
                alerts.join(",")
            }
        )?;
        for (id, e) in &self.energy_per_node {
            writeln!(f, "energy.node:{id}: {e:.6}")?;
        }
        Ok(())
    }
}
