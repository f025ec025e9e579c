//! Discrete-event simulation of a wireless sensor network that detects,
//! tracks and identifies vehicles carrying explosives.
//!
//! Sleeping nodes take periodic magnetic and chemical guard samples. A
//! positive reading wakes the node and notifies the control unit, which
//! opens a track and wakes the nodes around it. Awake nodes take radar
//! fixes, elect a cluster head per round, and the head fuses the fixes,
//! predicts the next position and wakes the nodes there. Chemical readings
//! are matched against a signature database; a confirmed track with a
//! known position triggers the alert chain.
//!
//! ```
//! use edass_core::{run_scenario, Scenario};
//!
//! let scenario = Scenario::default_scenario();
//! let out = run_scenario(&scenario).unwrap();
//! assert!(!out.alerts.is_empty());
//! ```

pub mod command;
pub mod engine;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod protocol;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod trace;
pub mod world;

pub use command::{
    escalate, lookup_identity, mark_brown, match_signature, Alert, AlertKind, CommandCenter,
    Confirmation, ConfirmedCompound, IdentityStatus, MatchResult, RateClass, SignatureDb,
    SignatureRecord, Tolerance, WatchStatus, Watchlist, WatchlistEntry,
};
pub use engine::{
    ActorId, Context, Dispatched, Event, Handler, RandomSource, Scheduler, SimTime, Simulation,
};
pub use error::{CommandError, FusionError, ScenarioError, SimError, TraceError, WorldError};
pub use fusion::{
    elect_cluster_head, fuse_location, fuse_round, predict_next, select_wake_set, Cluster,
    ClusterId, Fix, FixSource, TargetTrack, WakeSet,
};
pub use metrics::{compute_metrics, MetricsSummary};
pub use protocol::{
    link_delay, Direction, EnergyLedger, EnergyRates, LinkParams, Message, MessageBody,
    MessageKind, Node, NodeMode, ProtocolConfig,
};
pub use scenario::{Scenario, DEFAULT_SCENARIO, SCENARIO_MAGIC};
pub use sensing::{
    sample_chemical, sample_gas, sample_magnetic, sample_radar, Modality, ReadingPayload,
    SensorConfig, SensorReading,
};
pub use sim::{run_scenario, EdassWorld, Payload, RunOutput};
pub use trace::{Trace, TraceHeader, TraceLine, TRACE_MAGIC};
pub use world::{
    distance, Cargo, DeploymentField, NodeId, PlumeField, Position, Target, Waypoint, RADAR_RANGE_M,
};
