//! Scenario files: a `e-dass-scenario v1` header line followed by TOML
//! sections. Anything not given takes the documented default.
//!
//! ```text
//! e-dass-scenario v1
//! [run]
//! seed = 42
//! t_end = 600.0
//!
//! [[grid]]
//! cols = 10
//! rows = 10
//! spacing = 10.0
//! x0 = 5.0
//! y0 = 5.0
//!
//! [[target]]
//! id = 1
//! ferrous_mass = 100.0
//! waypoints = [[0.0, 5.0, 45.0], [60.0, 95.0, 45.0]]
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::command::{
    RateClass, SignatureDb, SignatureRecord, Tolerance, WatchStatus, WatchlistEntry,
};
use crate::engine::SimTime;
use crate::error::ScenarioError;
use crate::protocol::{EnergyRates, LinkParams, ProtocolConfig};
use crate::sensing::SensorConfig;
use crate::world::{Cargo, DeploymentField, NodeId, Position, Target, Waypoint};

pub const SCENARIO_MAGIC: &str = "e-dass-scenario v1";

/// The bundled reference scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.edass");

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub t_end: f64,
    /// Seconds between target-motion events (plume feeding).
    pub motion_tick: f64,
    pub field: DeploymentField,
    pub cell_size: f64,
    pub sensors: SensorConfig,
    pub energy: EnergyRates,
    pub link: LinkParams,
    pub protocol: ProtocolConfig,
    pub signatures: Vec<SignatureRecord>,
    pub tolerance: Tolerance,
    pub watchlist: Vec<WatchlistEntry>,
    pub targets: Vec<Target>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    field: FieldSection,
    #[serde(default)]
    sensors: SensorConfig,
    #[serde(default)]
    energy: EnergyRates,
    #[serde(default)]
    link: LinkParams,
    #[serde(default)]
    protocol: ProtocolConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    grid: Vec<GridSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    node: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    signature: Vec<SignatureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    watch: Vec<WatchSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    target: Vec<TargetSpec>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    motion_tick: Option<f64>,
    /// Absent means automatic (scaled to the signature database).
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FieldSection {
    width: f64,
    height: f64,
    cell_size: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            width: 100.0,
            height: 100.0,
            cell_size: 2.0,
        }
    }
}

/// `cols x rows` nodes, row-major from `(x0, y0)`, ids counting up from
/// `first_id` (default: one past the largest id so far).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    cols: u32,
    rows: u32,
    spacing: f64,
    #[serde(default)]
    x0: f64,
    #[serde(default)]
    y0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    first_id: Option<NodeId>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: NodeId,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignatureSpec {
    id: u32,
    name: String,
    class: String,
    features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WatchSpec {
    key: String,
    status: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    address: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    explosives: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSpec {
    id: u32,
    #[serde(default)]
    ferrous_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chemical: Option<Vec<f64>>,
    #[serde(default)]
    gas_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    identity: Option<String>,
    /// `[t, x, y]` triples.
    waypoints: Vec<[f64; 3]>,
}

fn syntax_error(body: &str, err: toml::de::Error) -> ScenarioError {
    let line = err.span().map_or(1, |span| {
        body[..span.start.min(body.len())].matches('\n').count() + 1
    });
    ScenarioError::Syntax {
        line: line + 1,
        message: err.message().trim().to_string(),
    }
}

fn check(
    cond: bool,
    field: impl Into<String>,
    reason: impl Into<String>,
) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(ScenarioError::invariant(field, reason))
    }
}

fn finite_positive(v: f64, field: &str) -> Result<(), ScenarioError> {
    check(v.is_finite() && v > 0.0, field, "must be finite and > 0")
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        if first.trim() != SCENARIO_MAGIC {
            return Err(ScenarioError::Syntax {
                line: 1,
                message: format!("expected header `{SCENARIO_MAGIC}`"),
            });
        }
        let file: ScenarioFile = toml::from_str(body).map_err(|e| syntax_error(body, e))?;
        Scenario::from_file(file)
    }

    /// The bundled default scenario.
    pub fn default_scenario() -> Scenario {
        Scenario::parse(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let run = file.run;
        let seed = run
            .seed
            .ok_or_else(|| ScenarioError::invariant("run.seed", "a seed is required"))?;
        let t_end = run.t_end.unwrap_or(600.0);
        finite_positive(t_end, "run.t_end")?;
        let motion_tick = run.motion_tick.unwrap_or(1.0);
        finite_positive(motion_tick, "run.motion_tick")?;
        let tolerance = match run.tolerance {
            None => Tolerance::Auto,
            Some(v) => {
                check(
                    v.is_finite() && v >= 0.0,
                    "run.tolerance",
                    "must be finite and >= 0",
                )?;
                Tolerance::Fixed(v)
            }
        };

        finite_positive(file.field.width, "field.width")?;
        finite_positive(file.field.height, "field.height")?;
        finite_positive(file.field.cell_size, "field.cell_size")?;
        let mut field = DeploymentField {
            width: file.field.width,
            height: file.field.height,
            nodes: Vec::new(),
        };

        for g in &file.grid {
            finite_positive(g.spacing, "grid.spacing")?;
            let mut id = g
                .first_id
                .unwrap_or_else(|| field.nodes.iter().map(|(n, _)| n + 1).max().unwrap_or(1));
            for r in 0..g.rows {
                for c in 0..g.cols {
                    field.nodes.push((
                        id,
                        Position::new(g.x0 + c as f64 * g.spacing, g.y0 + r as f64 * g.spacing),
                    ));
                    id += 1;
                }
            }
        }
        field
            .nodes
            .extend(file.node.iter().map(|n| (n.id, Position::new(n.x, n.y))));
        let mut seen = BTreeSet::new();
        for (id, p) in &field.nodes {
            check(
                seen.insert(*id),
                "node.id",
                format!("duplicate node id {id}"),
            )?;
            check(
                field.contains(*p),
                "node",
                format!(
                    "node {id} at {p} lies outside the {}x{} field",
                    field.width, field.height
                ),
            )?;
        }

        file.sensors
            .validate()
            .map_err(|(f, r)| ScenarioError::invariant(format!("sensors.{f}"), r))?;
        file.energy
            .validate()
            .map_err(|(f, r)| ScenarioError::invariant(format!("energy.{f}"), r))?;
        file.protocol
            .validate()
            .map_err(|(f, r)| ScenarioError::invariant(format!("protocol.{f}"), r))?;
        let link = &file.link;
        finite_positive(link.up_bps, "link.up_bps")?;
        finite_positive(link.down_bps, "link.down_bps")?;
        check(
            link.propagation.is_finite() && link.propagation >= 0.0,
            "link.propagation",
            "must be finite and >= 0",
        )?;
        check(
            (0.0..1.0).contains(&link.drop_probability),
            "link.drop_probability",
            "must lie in [0, 1)",
        )?;

        let signatures = file
            .signature
            .into_iter()
            .map(|s| {
                let class: RateClass = s.class.parse().map_err(|e: String| {
                    ScenarioError::invariant(format!("signature {}.class", s.id), e)
                })?;
                Ok(SignatureRecord {
                    id: s.id,
                    name: s.name,
                    features: s.features,
                    class,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let db = SignatureDb::new(signatures.clone())
            .map_err(|e| ScenarioError::invariant("signature", e))?;

        let mut keys = BTreeSet::new();
        let watchlist = file
            .watch
            .into_iter()
            .map(|w| {
                check(
                    keys.insert(w.key.clone()),
                    "watch.key",
                    format!("duplicate identity key `{}`", w.key),
                )?;
                let status: WatchStatus = w.status.parse().map_err(|e: String| {
                    ScenarioError::invariant(format!("watch {}.status", w.key), e)
                })?;
                Ok(WatchlistEntry {
                    key: w.key,
                    name: w.name,
                    address: w.address,
                    status,
                    explosives: w.explosives,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;

        let mut target_ids = BTreeSet::new();
        let mut targets = Vec::new();
        for t in file.target {
            let label = format!("target {}", t.id);
            check(
                target_ids.insert(t.id),
                "target.id",
                format!("duplicate target id {}", t.id),
            )?;
            check(
                !t.waypoints.is_empty(),
                &label,
                "needs at least one waypoint",
            )?;
            check(
                t.ferrous_mass.is_finite() && t.ferrous_mass >= 0.0,
                format!("{label}.ferrous_mass"),
                "must be finite and >= 0",
            )?;
            check(
                t.gas_rate.is_finite() && t.gas_rate >= 0.0,
                format!("{label}.gas_rate"),
                "must be finite and >= 0",
            )?;
            if let Some(v) = &t.chemical {
                check(
                    v.iter().all(|x| x.is_finite() && *x >= 0.0),
                    format!("{label}.chemical"),
                    "components must be finite and >= 0",
                )?;
                if let Some(dim) = db.dimension() {
                    check(
                        v.len() == dim,
                        format!("{label}.chemical"),
                        format!(
                            "dimension {} differs from signature dimension {dim}",
                            v.len()
                        ),
                    )?;
                }
            }
            let mut trajectory = Vec::with_capacity(t.waypoints.len());
            for [time, x, y] in t.waypoints {
                check(
                    time.is_finite() && time >= 0.0,
                    format!("{label}.waypoints"),
                    "times must be finite and >= 0",
                )?;
                let pos = Position::new(x, y);
                check(
                    field.contains(pos),
                    format!("{label}.waypoints"),
                    format!("waypoint {pos} lies outside the field"),
                )?;
                if let Some(prev) = trajectory.last().map(|w: &Waypoint| w.t.secs()) {
                    check(
                        time > prev,
                        format!("{label}.waypoints"),
                        "waypoint times must strictly increase",
                    )?;
                }
                trajectory.push(Waypoint {
                    t: SimTime::from_secs(time),
                    pos,
                });
            }
            targets.push(Target {
                id: t.id,
                trajectory,
                cargo: Cargo {
                    ferrous_mass: t.ferrous_mass,
                    chemical: t.chemical,
                    gas_rate: t.gas_rate,
                    identity: t.identity,
                },
            });
        }

        Ok(Scenario {
            name: run.name.unwrap_or_else(|| "scenario".to_string()),
            seed,
            t_end,
            motion_tick,
            field,
            cell_size: file.field.cell_size,
            sensors: file.sensors,
            energy: file.energy,
            link: file.link,
            protocol: file.protocol,
            signatures,
            tolerance,
            watchlist,
            targets,
        })
    }

    /// Writes the scenario back out with every field explicit and grids
    /// expanded to individual nodes.
    pub fn to_text(&self) -> String {
        let file = ScenarioFile {
            run: RunSection {
                name: Some(self.name.clone()),
                seed: Some(self.seed),
                t_end: Some(self.t_end),
                motion_tick: Some(self.motion_tick),
                tolerance: match self.tolerance {
                    Tolerance::Auto => None,
                    Tolerance::Fixed(v) => Some(v),
                },
            },
            field: FieldSection {
                width: self.field.width,
                height: self.field.height,
                cell_size: self.cell_size,
            },
            sensors: self.sensors.clone(),
            energy: self.energy.clone(),
            link: self.link.clone(),
            protocol: self.protocol.clone(),
            grid: Vec::new(),
            node: self
                .field
                .nodes
                .iter()
                .map(|(id, p)| NodeSpec {
                    id: *id,
                    x: p.x,
                    y: p.y,
                })
                .collect(),
            signature: self
                .signatures
                .iter()
                .map(|s| SignatureSpec {
                    id: s.id,
                    name: s.name.clone(),
                    class: s.class.as_str().to_string(),
                    features: s.features.clone(),
                })
                .collect(),
            watch: self
                .watchlist
                .iter()
                .map(|w| WatchSpec {
                    key: w.key.clone(),
                    status: w.status.as_str().to_string(),
                    name: w.name.clone(),
                    address: w.address.clone(),
                    explosives: w.explosives.clone(),
                })
                .collect(),
            target: self
                .targets
                .iter()
                .map(|t| TargetSpec {
                    id: t.id,
                    ferrous_mass: t.cargo.ferrous_mass,
                    chemical: t.cargo.chemical.clone(),
                    gas_rate: t.cargo.gas_rate,
                    identity: t.cargo.identity.clone(),
                    waypoints: t
                        .trajectory
                        .iter()
                        .map(|w| [w.t.secs(), w.pos.x, w.pos.y])
                        .collect(),
                })
                .collect(),
        };
        let body = toml::to_string(&file).expect("scenario serializes");
        format!("{SCENARIO_MAGIC}\n{body}")
    }

    pub fn signature_db(&self) -> SignatureDb {
        SignatureDb::new(self.signatures.clone()).expect("validated on load")
    }

    /// Earliest first-waypoint time over all targets.
    pub fn first_target_start(&self) -> Option<f64> {
        self.targets
            .iter()
            .map(|t| t.start_time().secs())
            .min_by(f64::total_cmp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "e-dass-scenario v1
[run]
seed = 3

[[node]]
id = 1
x = 10.0
y = 10.0

[[target]]
id = 1
waypoints = [[0.0, 5.0, 5.0]]
";

    #[test]
    fn minimal_scenario_takes_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.t_end, 600.0);
        assert_eq!(s.field.nodes, vec![(1, Position::new(10.0, 10.0))]);
        assert_eq!(s.sensors, SensorConfig::default());
        assert_eq!(s.energy, EnergyRates::default());
        assert_eq!(s.protocol, ProtocolConfig::default());
        assert_eq!(s.link, LinkParams::default());
        assert_eq!(s.tolerance, Tolerance::Auto);
        assert_eq!(s.cell_size, 2.0);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = MINIMAL.replace("seed = 3", "t_end = 10.0");
        assert_eq!(
            Scenario::parse(&text),
            Err(ScenarioError::invariant("run.seed", "a seed is required"))
        );
    }

    #[test]
    fn duplicate_node_id_names_the_id() {
        let text = format!("{MINIMAL}\n[[node]]\nid = 1\nx = 1.0\ny = 1.0\n");
        match Scenario::parse(&text) {
            Err(ScenarioError::InvariantViolation { field, reason }) => {
                assert_eq!(field, "node.id");
                assert!(reason.contains("duplicate node id 1"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_increasing_waypoints_cite_the_target() {
        let text = MINIMAL.replace("[[0.0, 5.0, 5.0]]", "[[0.0, 5.0, 5.0], [0.0, 6.0, 5.0]]");
        match Scenario::parse(&text) {
            Err(ScenarioError::InvariantViolation { field, .. }) => {
                assert_eq!(field, "target 1.waypoints")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_file_line() {
        let text = "e-dass-scenario v1\n[run]\nseed = 3\nt_end = = 4\n";
        match Scenario::parse(text) {
            Err(ScenarioError::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_syntax_error() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\nsede = 4");
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Syntax { line: 4, .. })
        ));
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(
            Scenario::parse("[run]\nseed = 1\n"),
            Err(ScenarioError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn node_outside_field_is_rejected() {
        let text = MINIMAL.replace("x = 10.0", "x = 150.0");
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn grid_expands_row_major() {
        let text = "e-dass-scenario v1\n[run]\nseed = 1\n[[grid]]\ncols = 3\nrows = 2\nspacing = 10.0\nx0 = 5.0\ny0 = 5.0\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.field.nodes.len(), 6);
        assert_eq!(s.field.nodes[0], (1, Position::new(5.0, 5.0)));
        assert_eq!(s.field.nodes[3], (4, Position::new(5.0, 15.0)));
    }

    #[test]
    fn chemical_dimension_must_match_database() {
        let text = format!(
            "{}\n[[signature]]\nid = 1\nname = \"RDX\"\nclass = \"high\"\nfeatures = [1.0, 0.0]\n",
            MINIMAL.replace("id = 1\nwaypoints", "id = 1\nchemical = [1.0]\nwaypoints")
        );
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn bundled_default_loads_and_round_trips() {
        let s = Scenario::default_scenario();
        assert_eq!(s.field.nodes.len(), 100);
        let again = Scenario::parse(&s.to_text()).unwrap();
        assert_eq!(again, s);
    }
}
