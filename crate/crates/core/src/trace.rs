//! Text trace: an optional `#` header followed by one line per dispatched
//! event, `<time:.6> <actor> <kind> key=value ...`.

use std::fmt;
use std::str::FromStr;

use crate::engine::{ActorId, SimTime};
use crate::error::TraceError;

pub const TRACE_MAGIC: &str = "e-dass-trace v1";

/// Rounds to the microsecond resolution of the text form, so a trace
/// parsed back from text compares equal to the one that was written.
pub fn trace_time(t: SimTime) -> SimTime {
    SimTime::from_secs((t.secs() * 1e6).round() / 1e6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub time: SimTime,
    pub actor: ActorId,
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl TraceLine {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn seq(&self) -> Option<u64> {
        self.get("seq").and_then(|v| v.parse().ok())
    }
}

fn clean(s: &str) -> String {
    if s.is_empty() {
        return "-".to_string();
    }
    s.chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.time, self.actor, self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {}={}", k, clean(v))?;
        }
        Ok(())
    }
}

impl FromStr for TraceLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_ascii_whitespace();
        let time: f64 = parts
            .next()
            .ok_or("missing time")?
            .parse()
            .map_err(|_| "bad time".to_string())?;
        if !(time.is_finite() && time >= 0.0) {
            return Err("bad time".into());
        }
        let actor: ActorId = parts.next().ok_or("missing actor")?.parse()?;
        let kind = parts.next().ok_or("missing event kind")?.to_string();
        let fields = parts
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format!("field `{kv}` is not key=value"))
            })
            .collect::<Result<_, _>>()?;
        Ok(TraceLine {
            time: SimTime::from_secs(time),
            actor,
            kind,
            fields,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub scenario: String,
    pub seed: u64,
    pub nodes: usize,
}

impl fmt::Display for TraceHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# {TRACE_MAGIC} scenario={} seed={} nodes={}",
            clean(&self.scenario),
            self.seed,
            self.nodes
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub lines: Vec<TraceLine>,
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&h.to_string());
            out.push('\n');
        }
        for line in &self.lines {
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(meta) = rest.strip_prefix(TRACE_MAGIC) {
                    header = Some(parse_header(meta).map_err(|reason| TraceError::Malformed {
                        line: i + 1,
                        reason,
                    })?);
                }
                continue;
            }
            lines.push(raw.parse().map_err(|reason| TraceError::Malformed {
                line: i + 1,
                reason,
            })?);
        }
        Ok(Trace { header, lines })
    }
}

fn parse_header(meta: &str) -> Result<TraceHeader, String> {
    let mut scenario = None;
    let mut seed = None;
    let mut nodes = None;
    for kv in meta.split_ascii_whitespace() {
        match kv.split_once('=') {
            Some(("scenario", v)) => scenario = Some(v.to_string()),
            Some(("seed", v)) => seed = Some(v.parse().map_err(|_| "bad seed".to_string())?),
            Some(("nodes", v)) => {
                nodes = Some(v.parse().map_err(|_| "bad node count".to_string())?)
            }
            _ => return Err(format!("unexpected header token `{kv}`")),
        }
    }
    Ok(TraceHeader {
        scenario: scenario.ok_or("header lacks scenario")?,
        seed: seed.ok_or("header lacks seed")?,
        nodes: nodes.ok_or("header lacks nodes")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_formats_time_with_six_decimals() {
        let line = TraceLine {
            time: SimTime::from_secs(1.5),
            actor: ActorId::Node(4),
            kind: "sensor-tick".into(),
            fields: vec![
                ("seq".into(), "9".into()),
                ("note".into(), "a b".into()),
                ("empty".into(), String::new()),
            ],
        };
        assert_eq!(
            line.to_string(),
            "1.500000 node:4 sensor-tick seq=9 note=a_b empty=-"
        );
    }

    #[test]
    fn trace_with_header_parses() {
        let text = "# e-dass-trace v1 scenario=demo seed=7 nodes=3\n0.000000 cc alert seq=0 kind=VoiceBroadcast\n\n";
        let trace = Trace::parse(text).unwrap();
        assert_eq!(
            trace.header,
            Some(TraceHeader {
                scenario: "demo".into(),
                seed: 7,
                nodes: 3
            })
        );
        assert_eq!(trace.lines[0].get("kind"), Some("VoiceBroadcast"));
        assert_eq!(trace.to_text(), text.trim_end().to_string() + "\n");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = Trace::parse("0.000000 cc alert\n1.0 nobody x\n").unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }));
        let err = Trace::parse("0.000000 cc alert novalue\n").unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn quantized_time_survives_text(secs in 0.0..1e6f64) {
            let q = trace_time(SimTime::from_secs(secs));
            let back: f64 = q.to_string().parse().unwrap();
            prop_assert_eq!(back, q.secs());
        }

        #[test]
        fn line_round_trips(
            micros in 0u64..10_000_000_000,
            node in any::<u32>(),
            fields in prop::collection::vec(("[a-z_]{1,8}", "[A-Za-z0-9:.|,()-]{1,12}"), 0..6),
        ) {
            let line = TraceLine {
                time: SimTime::from_secs(micros as f64 / 1e6),
                actor: ActorId::Node(node),
                kind: "deliver".into(),
                fields,
            };
            let back: TraceLine = line.to_string().parse().unwrap();
            prop_assert_eq!(back.to_string(), line.to_string());
            prop_assert_eq!(back.fields, line.fields);
        }
    }
}
