//! Sensor models. Each sampler either returns a reading at or above its
//! modality threshold or declines with `None`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{RandomSource, SimTime};
use crate::error::WorldError;
use crate::world::{distance, NodeId, PlumeField, Position, Target, RADAR_RANGE_M};

/// Dipole near-field clamp, in meters.
pub const MAGNETIC_MIN_DISTANCE_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Magnetic,
    Chemical,
    Gas,
    Radar,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Magnetic,
        Modality::Chemical,
        Modality::Gas,
        Modality::Radar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Magnetic => "magnetic",
            Modality::Chemical => "chemical",
            Modality::Gas => "gas",
            Modality::Radar => "radar",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown modality `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReadingPayload {
    Empty,
    /// Observed chemical feature vector.
    Chemical(Vec<f64>),
    /// Radar position fix.
    Fix(Position),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub node: NodeId,
    pub time: SimTime,
    pub modality: Modality,
    pub strength: f64,
    pub payload: ReadingPayload,
}

impl SensorReading {
    pub fn fix(&self) -> Option<Position> {
        match self.payload {
            ReadingPayload::Fix(p) => Some(p),
            _ => None,
        }
    }

    pub fn features(&self) -> Option<&[f64]> {
        match &self.payload {
            ReadingPayload::Chemical(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagneticConfig {
    pub moment_scale: f64,
    pub threshold: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChemicalConfig {
    pub range: f64,
    pub noise_sigma: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasConfig {
    pub threshold: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub range: f64,
    pub fix_noise_sigma: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub magnetic: MagneticConfig,
    pub chemical: ChemicalConfig,
    pub gas: GasConfig,
    pub radar: RadarConfig,
}

// Defaults: a 100 kg-equivalent ferrous load is detectable out to 15 m and
// a unit-scale chemical vector out to 10 m.
impl Default for MagneticConfig {
    fn default() -> Self {
        MagneticConfig {
            moment_scale: 1.0,
            threshold: 0.025,
            max_range: 15.0,
        }
    }
}

impl Default for ChemicalConfig {
    fn default() -> Self {
        ChemicalConfig {
            range: 10.0,
            noise_sigma: 0.02,
            threshold: 0.1,
        }
    }
}

impl Default for GasConfig {
    fn default() -> Self {
        GasConfig {
            threshold: 0.5,
            noise_sigma: 0.05,
        }
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            range: RADAR_RANGE_M,
            fix_noise_sigma: 0.25,
            period: 1.0,
        }
    }
}

impl SensorConfig {
    /// Returns the offending field and the reason on failure.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        let non_negative = [
            ("magnetic.moment_scale", self.magnetic.moment_scale),
            ("magnetic.max_range", self.magnetic.max_range),
            ("chemical.range", self.chemical.range),
            ("chemical.noise_sigma", self.chemical.noise_sigma),
            ("gas.noise_sigma", self.gas.noise_sigma),
            ("radar.range", self.radar.range),
            ("radar.fix_noise_sigma", self.radar.fix_noise_sigma),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err((field, "must be finite and >= 0"));
            }
        }
        let positive = [
            ("magnetic.threshold", self.magnetic.threshold),
            ("chemical.threshold", self.chemical.threshold),
            ("gas.threshold", self.gas.threshold),
            ("radar.period", self.radar.period),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err((field, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

fn target_position(target: &Target, t: SimTime) -> Option<Position> {
    target.position_at(t).ok()
}

/// Inverse-cube dipole response to the target's ferrous load.
pub fn sample_magnetic(
    node: NodeId,
    node_pos: Position,
    target: &Target,
    t: SimTime,
    cfg: &MagneticConfig,
) -> Option<SensorReading> {
    let mass = target.cargo.ferrous_mass;
    if mass <= 0.0 {
        return None;
    }
    let d = distance(node_pos, target_position(target, t)?);
    if d > cfg.max_range {
        return None;
    }
    let d = d.max(MAGNETIC_MIN_DISTANCE_M);
    let strength = cfg.moment_scale * mass / (d * d * d);
    (strength >= cfg.threshold).then_some(SensorReading {
        node,
        time: t,
        modality: Modality::Magnetic,
        strength,
        payload: ReadingPayload::Empty,
    })
}

pub fn sample_chemical(
    node: NodeId,
    node_pos: Position,
    target: &Target,
    t: SimTime,
    cfg: &ChemicalConfig,
    rng: &mut RandomSource,
) -> Option<SensorReading> {
    let truth = target.cargo.chemical.as_ref()?;
    let d = distance(node_pos, target_position(target, t)?);
    if d > cfg.range {
        return None;
    }
    let observed: Vec<f64> = truth
        .iter()
        .map(|v| (v + rng.gaussian(cfg.noise_sigma)).max(0.0))
        .collect();
    let strength = observed.iter().map(|v| v * v).sum::<f64>().sqrt();
    (strength >= cfg.threshold).then_some(SensorReading {
        node,
        time: t,
        modality: Modality::Chemical,
        strength,
        payload: ReadingPayload::Chemical(observed),
    })
}

pub fn sample_gas(
    node: NodeId,
    node_pos: Position,
    plume: &PlumeField,
    t: SimTime,
    cfg: &GasConfig,
    rng: &mut RandomSource,
) -> Result<Option<SensorReading>, WorldError> {
    let c = (plume.concentration(node_pos, t)? + rng.gaussian(cfg.noise_sigma)).max(0.0);
    Ok((c >= cfg.threshold).then_some(SensorReading {
        node,
        time: t,
        modality: Modality::Gas,
        strength: c,
        payload: ReadingPayload::Empty,
    }))
}

/// Range-gated position fix. The boundary at `cfg.range` is inclusive.
pub fn sample_radar(
    node: NodeId,
    node_pos: Position,
    target: &Target,
    t: SimTime,
    cfg: &RadarConfig,
    rng: &mut RandomSource,
) -> Option<SensorReading> {
    let truth = target_position(target, t)?;
    let d = distance(node_pos, truth);
    if d > cfg.range {
        return None;
    }
    let fix = Position::new(
        truth.x + rng.gaussian(cfg.fix_noise_sigma),
        truth.y + rng.gaussian(cfg.fix_noise_sigma),
    );
    let strength = if cfg.range > 0.0 {
        (cfg.range - d) / cfg.range
    } else {
        0.0
    };
    Some(SensorReading {
        node,
        time: t,
        modality: Modality::Radar,
        strength,
        payload: ReadingPayload::Fix(fix),
    })
}
