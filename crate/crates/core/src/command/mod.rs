//! Control-unit logic: signature database, identity watchlist and the staged
//! alert escalation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::error::CommandError;
use crate::fusion::ClusterId;
use crate::world::Position;

mod center;

pub use center::{Camera, CenterEnv, CenterEvent, CenterOutput, CommandCenter, TrackRecord};

/// Fraction of the mean database vector norm used as the automatic tolerance.
pub const AUTO_TOLERANCE_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateClass {
    /// Detonates.
    High,
    /// Deflagrates.
    Low,
}

impl RateClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RateClass::High => "high",
            RateClass::Low => "low",
        }
    }
}

impl FromStr for RateClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(RateClass::High),
            "low" => Ok(RateClass::Low),
            _ => Err(format!("rate class must be `high` or `low`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRecord {
    pub id: u32,
    pub name: String,
    pub features: Vec<f64>,
    pub class: RateClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchResult {
    Known(u32),
    Unknown,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Nearest record under Euclidean distance; `Known` iff it lies within
/// `tolerance`. Ties go to the smallest record id.
pub fn match_signature(
    observed: &[f64],
    db: &[SignatureRecord],
    tolerance: f64,
) -> Result<MatchResult, CommandError> {
    let Some(first) = db.first() else {
        return Ok(MatchResult::Unknown);
    };
    if observed.len() != first.features.len() {
        return Err(CommandError::DimensionMismatch {
            expected: first.features.len(),
            got: observed.len(),
        });
    }
    let nearest = db
        .iter()
        .map(|r| (euclidean(observed, &r.features), r.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(match nearest {
        Some((d, id)) if d <= tolerance => MatchResult::Known(id),
        _ => MatchResult::Unknown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// A fraction of the mean record norm, recomputed as the database grows.
    Auto,
    Fixed(f64),
}

/// Signature records with dense ids starting at 1 and one shared dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignatureDb {
    records: Vec<SignatureRecord>,
}

impl SignatureDb {
    pub fn new(records: Vec<SignatureRecord>) -> Result<Self, String> {
        for (i, r) in records.iter().enumerate() {
            if r.id as usize != i + 1 {
                return Err(format!(
                    "record ids must be dense from 1; found {} at position {}",
                    r.id,
                    i + 1
                ));
            }
            if r.features.len() != records[0].features.len() {
                return Err(format!(
                    "record {} has dimension {}, expected {}",
                    r.id,
                    r.features.len(),
                    records[0].features.len()
                ));
            }
            if r.features.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(format!(
                    "record {} has a negative or non-finite feature",
                    r.id
                ));
            }
        }
        Ok(SignatureDb { records })
    }

    pub fn records(&self) -> &[SignatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&SignatureRecord> {
        id.checked_sub(1).and_then(|i| self.records.get(i as usize))
    }

    pub fn dimension(&self) -> Option<usize> {
        self.records.first().map(|r| r.features.len())
    }

    pub fn tolerance(&self, tolerance: Tolerance) -> f64 {
        match tolerance {
            Tolerance::Fixed(v) => v,
            Tolerance::Auto if self.records.is_empty() => 0.0,
            Tolerance::Auto => {
                let norms: f64 = self
                    .records
                    .iter()
                    .map(|r| euclidean(&r.features, &vec![0.0; r.features.len()]))
                    .sum();
                AUTO_TOLERANCE_FRACTION * norms / self.records.len() as f64
            }
        }
    }

    pub fn match_signature(
        &self,
        observed: &[f64],
        tolerance: Tolerance,
    ) -> Result<MatchResult, CommandError> {
        match_signature(observed, &self.records, self.tolerance(tolerance))
    }

    /// Appends `observed` as `UNKNOWN-<id>`. Fails if it already matches.
    pub fn register_unknown(
        &mut self,
        observed: &[f64],
        tolerance: Tolerance,
    ) -> Result<u32, CommandError> {
        if let MatchResult::Known(id) = self.match_signature(observed, tolerance)? {
            return Err(CommandError::AlreadyKnown(id));
        }
        let id = self.records.len() as u32 + 1;
        self.records.push(SignatureRecord {
            id,
            name: format!("UNKNOWN-{id}"),
            features: observed.to_vec(),
            class: RateClass::High,
        });
        Ok(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WatchStatus {
    Brown,
    Black,
}

impl WatchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            WatchStatus::Brown => "brown",
            WatchStatus::Black => "black",
        }
    }
}

impl FromStr for WatchStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brown" => Ok(WatchStatus::Brown),
            "black" => Ok(WatchStatus::Black),
            _ => Err(format!(
                "watch status must be `brown` or `black`, got `{s}`"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatchlistEntry {
    pub key: String,
    pub name: String,
    pub address: String,
    pub status: WatchStatus,
    pub explosives: Vec<String>,
}

pub type Watchlist = BTreeMap<String, WatchlistEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityStatus {
    NotListed,
    Listed(WatchStatus),
}

impl fmt::Display for IdentityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityStatus::NotListed => f.write_str("not-listed"),
            IdentityStatus::Listed(s) => f.write_str(s.as_str()),
        }
    }
}

pub fn lookup_identity(key: Option<&str>, watchlist: &Watchlist) -> IdentityStatus {
    key.and_then(|k| watchlist.get(k))
        .map_or(IdentityStatus::NotListed, |e| {
            IdentityStatus::Listed(e.status)
        })
}

/// Puts `key` on the brown list with `explosive` noted. Black entries are
/// left untouched.
pub fn mark_brown(key: &str, explosive: &str, watchlist: &mut Watchlist) {
    let entry = watchlist
        .entry(key.to_string())
        .or_insert_with(|| WatchlistEntry {
            key: key.to_string(),
            name: key.to_string(),
            address: String::new(),
            status: WatchStatus::Brown,
            explosives: Vec::new(),
        });
    if entry.status == WatchStatus::Black {
        return;
    }
    if !entry.explosives.iter().any(|e| e == explosive) {
        entry.explosives.push(explosive.to_string());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AlertKind {
    TrafficSignalOverride,
    VoiceBroadcast,
    RedZoneDeclared,
    BaseStationReport,
    PoliceNotify,
}

impl AlertKind {
    pub const ALL: [AlertKind; 5] = [
        AlertKind::TrafficSignalOverride,
        AlertKind::VoiceBroadcast,
        AlertKind::RedZoneDeclared,
        AlertKind::BaseStationReport,
        AlertKind::PoliceNotify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::TrafficSignalOverride => "TrafficSignalOverride",
            AlertKind::VoiceBroadcast => "VoiceBroadcast",
            AlertKind::RedZoneDeclared => "RedZoneDeclared",
            AlertKind::BaseStationReport => "BaseStationReport",
            AlertKind::PoliceNotify => "PoliceNotify",
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlertKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlertKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown alert kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub kind: AlertKind,
    pub time: SimTime,
    pub zone: ClusterId,
    pub details: String,
}

/// The compound a track was confirmed against.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedCompound {
    pub record: u32,
    pub name: String,
    pub class: RateClass,
    /// Magnitude of the confirming chemical reading.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Confirmation {
    pub track: u32,
    pub compound: Option<ConfirmedCompound>,
    pub identity_key: Option<String>,
    pub identity: IdentityStatus,
    pub location: Position,
}

fn token(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_whitespace() || c == ',' {
                '_'
            } else {
                c
            }
        })
        .collect()
}

/// Staged response to a chemically confirmed track: police first for a
/// blacklisted identity, then signals, broadcast, red zone and the
/// base-station report.
pub fn escalate(
    confirmed: &Confirmation,
    t: SimTime,
    zone: ClusterId,
) -> Result<Vec<Alert>, CommandError> {
    let compound = confirmed
        .compound
        .as_ref()
        .ok_or(CommandError::Unconfirmed)?;
    let identity = confirmed
        .identity_key
        .as_deref()
        .map_or_else(|| "unidentified".to_string(), token);
    let loc = confirmed.location;
    let alert = |kind, details: String| Alert {
        kind,
        time: t,
        zone,
        details,
    };
    let mut alerts = Vec::with_capacity(5);
    if confirmed.identity == IdentityStatus::Listed(WatchStatus::Black) {
        alerts.push(alert(
            AlertKind::PoliceNotify,
            format!("identity:{identity},status:black,location:{loc}"),
        ));
    }
    alerts.push(alert(
        AlertKind::TrafficSignalOverride,
        format!("zone:{zone},signals:hold-red"),
    ));
    alerts.push(alert(
        AlertKind::VoiceBroadcast,
        format!("zone:{zone},audience:mobile-stations"),
    ));
    alerts.push(alert(
        AlertKind::RedZoneDeclared,
        format!("zone:{zone},center:{loc}"),
    ));
    alerts.push(alert(
        AlertKind::BaseStationReport,
        format!(
            "track:{},explosive:{},record:{},class:{},amount:{},identity:{identity},identity_status:{},location:{loc},fanout:all-security-departments",
            confirmed.track,
            token(&compound.name),
            compound.record,
            compound.class.as_str(),
            compound.amount,
            confirmed.identity,
        ),
    ));
    Ok(alerts)
}
