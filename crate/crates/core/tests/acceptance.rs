//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use edass_core::sensing::{GasConfig, RadarConfig};
use edass_core::{
    distance, fuse_location, match_signature, predict_next, run_scenario, sample_gas, sample_radar,
    select_wake_set, ActorId, AlertKind, Cargo, MatchResult, PlumeField, Position, RandomSource,
    RateClass, Scenario, SignatureDb, SignatureRecord, SimTime, Target, Tolerance, Trace,
    WatchStatus, Waypoint, RADAR_RANGE_M,
};

const BLACKLIST: &str = include_str!("../scenarios/blacklist.edass");
const UNKNOWN: &str = include_str!("../scenarios/unknown.edass");
const NOISELESS: &str = include_str!("../scenarios/noiseless.edass");

/// Duty-cycled over forced-active energy on the default scenario was 0.136
/// when the dual run was first taken. Pinned with a little headroom.
const PINNED_ENERGY_RATIO: f64 = 0.15;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn t(s: f64) -> SimTime {
    SimTime::from_secs(s)
}

fn trace_of(s: &Scenario) -> Result<Trace, String> {
    run_scenario(s).map(|o| o.trace).map_err(|e| e.to_string())
}

fn all_scenarios() -> Vec<Scenario> {
    let mut out = vec![
        Scenario::default_scenario(),
        Scenario::parse(BLACKLIST).unwrap(),
        Scenario::parse(UNKNOWN).unwrap(),
        Scenario::parse(NOISELESS).unwrap(),
    ];
    let mut reseeded = Scenario::default_scenario();
    reseeded.seed = 1234;
    out.push(reseeded);
    out
}

fn radar_range_gate() -> Outcome {
    let start = Instant::now();
    let mut rng = RandomSource::new(1);
    let cfg = RadarConfig {
        fix_noise_sigma: 0.0,
        ..RadarConfig::default()
    };
    let mut near = 0;
    for i in 0..1000 {
        let node = Position::new(rng.uniform() * 100.0, rng.uniform() * 100.0);
        // A tenth of the cases land exactly on the boundary.
        let d = if i % 10 == 0 {
            RADAR_RANGE_M
        } else {
            rng.uniform() * 2.0 * RADAR_RANGE_M
        };
        let theta = rng.uniform() * std::f64::consts::TAU;
        let mut pos = Position::new(node.x + d * theta.cos(), node.y + d * theta.sin());
        if i % 10 == 0 {
            pos = Position::new(node.x + d, node.y);
        }
        let target = Target {
            id: 1,
            trajectory: vec![Waypoint { t: t(0.0), pos }],
            cargo: Cargo::default(),
        };
        let reading = sample_radar(1, node, &target, t(0.0), &cfg, &mut rng);
        let inside = distance(node, pos) <= RADAR_RANGE_M;
        near += inside as usize;
        ensure(reading.is_some() == inside, || {
            format!(
                "geometry {i}: distance {} but reading present = {}",
                distance(node, pos),
                reading.is_some()
            )
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "1000 geometries ({near} in range) in {elapsed:.2?}"
    ))
}

fn plume_persistence() -> Outcome {
    let mut plume = PlumeField::new(100.0, 100.0, 2.0);
    let target = Target {
        id: 1,
        trajectory: vec![
            Waypoint {
                t: t(10.0),
                pos: Position::new(40.0, 51.0),
            },
            Waypoint {
                t: t(30.0),
                pos: Position::new(60.0, 51.0),
            },
        ],
        cargo: Cargo {
            gas_rate: 1.0,
            ..Cargo::default()
        },
    };
    for k in 0..=20 {
        plume.feed(&target, t(10.0 + k as f64), 1.0);
    }
    // The sampled node sits in the cell [50, 52) x [50, 52); the target is
    // there at t = 20 and 21 and has left it by t = 22.
    let node = Position::new(51.0, 50.5);
    let t0 = 21.0;
    let cfg = GasConfig {
        noise_sigma: 0.0,
        threshold: 0.5,
    };
    let mut rng = RandomSource::new(0);
    let before =
        sample_gas(1, node, &plume, t(t0 + 299.0), &cfg, &mut rng).map_err(|e| e.to_string())?;
    let after =
        sample_gas(1, node, &plume, t(t0 + 301.0), &cfg, &mut rng).map_err(|e| e.to_string())?;
    ensure(before.is_some(), || "no reading at t0 + 299 s".into())?;
    ensure(after.is_none(), || {
        "reading still present at t0 + 301 s".into()
    })?;
    Ok(format!(
        "reading {} at t0+299 s, none at t0+301 s",
        before.map(|r| r.strength).unwrap_or_default()
    ))
}

/// Replays formed/dissolved notes and checks the head invariants after
/// every instant.
fn check_one_head(trace: &Trace) -> Result<(usize, usize), String> {
    let mut active: BTreeMap<String, u32> = BTreeMap::new();
    let mut formed = 0;
    let mut instants = 0;
    let mut i = 0;
    while i < trace.lines.len() {
        let now = trace.lines[i].time;
        while i < trace.lines.len() && trace.lines[i].time == now {
            let line = &trace.lines[i];
            if let ActorId::Node(id) = line.actor {
                for (k, v) in &line.fields {
                    match k.as_str() {
                        "dissolved" => {
                            ensure(active.get(v) == Some(&id), || {
                                format!("t={now}: node {id} dissolved {v} which it does not head")
                            })?;
                            active.remove(v);
                        }
                        "formed" => {
                            ensure(!active.contains_key(v), || {
                                format!("t={now}: cluster {v} formed twice")
                            })?;
                            ensure(!active.values().any(|h| *h == id), || {
                                format!("t={now}: node {id} heads two clusters")
                            })?;
                            active.insert(v.clone(), id);
                            formed += 1;
                        }
                        _ => {}
                    }
                }
                let heads = active.values().any(|h| *h == id);
                ensure(heads == (line.get("mode") == Some("ClusterHead")), || {
                    format!(
                        "t={now}: node {id} mode {:?} but heading = {heads}",
                        line.get("mode")
                    )
                })?;
            }
            i += 1;
        }
        instants += 1;
        let distinct: BTreeSet<_> = active.values().collect();
        ensure(distinct.len() == active.len(), || {
            format!("t={now}: heads are not pairwise distinct")
        })?;
    }
    Ok((formed, instants))
}

fn one_head() -> Outcome {
    let s = Scenario::default_scenario();
    ensure(s.field.nodes.len() == 100 && s.t_end == 600.0, || {
        "default is not 100 nodes / 600 s".into()
    })?;
    let trace = trace_of(&s)?;
    let (formed, instants) = check_one_head(&trace)?;
    ensure(formed > 0, || "no cluster ever formed".into())?;
    Ok(format!("{formed} clusters over {instants} instants"))
}

fn fusion_oracle() -> Outcome {
    let mut rng = RandomSource::new(4);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = 1 + (rng.uniform() * 20.0) as usize;
        let reports: Vec<(Position, f64)> = (0..n)
            .map(|_| {
                (
                    Position::new(rng.uniform() * 100.0, rng.uniform() * 100.0),
                    rng.uniform() + 1e-3,
                )
            })
            .collect();
        let got = fuse_location(&reports).map_err(|e| format!("case {case}: {e}"))?;
        // Normalise first, then accumulate back to front.
        let total: f64 = reports.iter().map(|r| r.1).sum();
        let (mut x, mut y) = (0.0, 0.0);
        for (p, w) in reports.iter().rev() {
            x += p.x * (w / total);
            y += p.y * (w / total);
        }
        let err = distance(got, Position::new(x, y));
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("case {case}: error {err}"))?;
    }
    Ok(format!("1000 report sets, worst error {worst:.3e} m"))
}

fn prediction_exactness() -> Outcome {
    let field = Scenario::default_scenario().field;
    let radius = RADAR_RANGE_M;
    let mut rng = RandomSource::new(5);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let p0 = Position::new(20.0 + rng.uniform() * 60.0, 20.0 + rng.uniform() * 60.0);
        let v = (rng.uniform() * 4.0 - 2.0, rng.uniform() * 4.0 - 2.0);
        let t0 = rng.uniform() * 100.0;
        let dt = 0.5 + rng.uniform() * 2.0;
        let at = |k: f64| Position::new(p0.x + v.0 * k * dt, p0.y + v.1 * k * dt);
        let (pt, pp) =
            predict_next((t(t0), at(0.0)), (t(t0 + dt), at(1.0))).map_err(|e| e.to_string())?;
        let truth = at(2.0);
        let err = distance(pp, truth);
        worst = worst.max(err);
        ensure(
            err <= 1e-9 && (pt.secs() - (t0 + 2.0 * dt)).abs() <= 1e-9,
            || format!("case {case}: position error {err}"),
        )?;

        let wake = select_wake_set(pp, &field, radius);
        for (id, pos) in &field.nodes {
            let d = distance(*pos, truth);
            if d <= radius - 1e-9 {
                ensure(wake.nodes.contains(id), || {
                    format!("case {case}: node {id} at {d} m missing")
                })?;
            }
            if wake.nodes.contains(id) {
                ensure(d <= radius + 1e-9, || {
                    format!("case {case}: node {id} at {d} m woken")
                })?;
            }
        }
        let nearest = field
            .nodes
            .iter()
            .min_by(|a, b| distance(a.1, truth).total_cmp(&distance(b.1, truth)))
            .unwrap();
        if distance(nearest.1, truth) <= radius - 1e-9 {
            ensure(wake.nodes.contains(&nearest.0), || {
                format!("case {case}: nearest node not woken")
            })?;
        }
    }

    // End to end: noiseless constant-velocity pass. Heads from the second
    // round on predict from two exact fixes.
    let s = Scenario::parse(NOISELESS).map_err(|e| e.to_string())?;
    let target = &s.targets[0];
    let trace = trace_of(&s)?;
    let mut checked = 0;
    for line in &trace.lines {
        let round = line
            .get("formed")
            .and_then(|c| c.split_once('.'))
            .map(|(_, r)| r.parse::<u32>().unwrap());
        let (Some(r), Some(pt), Some(px), Some(py)) = (
            round,
            line.get_f64("pred_t"),
            line.get_f64("pred_x"),
            line.get_f64("pred_y"),
        ) else {
            continue;
        };
        if r < 2 || pt > s.t_end || line.get_f64("fix_t").is_none() {
            continue;
        }
        let truth = target.position_at(t(pt)).map_err(|e| e.to_string())?;
        let err = distance(truth, Position::new(px, py));
        ensure(err <= 1e-9, || {
            format!("noiseless run at t={}: prediction error {err}", line.time)
        })?;
        checked += 1;
    }
    ensure(checked > 10, || {
        format!("only {checked} in-run predictions checked")
    })?;
    Ok(format!(
        "1000 synthetic cases (worst {worst:.3e} m) and {checked} in-run predictions exact"
    ))
}

fn nearest_by_scan(query: &[f64], db: &[SignatureRecord]) -> (f64, u32) {
    let mut best = (f64::INFINITY, 0);
    for r in db {
        let mut acc = 0.0;
        for (a, b) in query.iter().zip(&r.features) {
            acc += (a - b) * (a - b);
        }
        let d = acc.sqrt();
        if d < best.0 || (d == best.0 && r.id < best.1) {
            best = (d, r.id);
        }
    }
    best
}

fn signature_oracle() -> Outcome {
    let mut rng = RandomSource::new(6);
    let (mut known, mut registered) = (0, 0);
    for case in 0..500 {
        let n = 1 + (rng.uniform() * 30.0) as usize;
        let dim = 1 + (rng.uniform() * 8.0) as usize;
        let records: Vec<SignatureRecord> = (1..=n as u32)
            .map(|id| SignatureRecord {
                id,
                name: format!("S{id}"),
                features: (0..dim).map(|_| rng.uniform()).collect(),
                class: RateClass::High,
            })
            .collect();
        let query: Vec<f64> = if rng.uniform() < 0.5 {
            let base = &records[(rng.uniform() * n as f64) as usize].features;
            base.iter()
                .map(|v| (v + rng.gaussian(0.05)).max(0.0))
                .collect()
        } else {
            (0..dim).map(|_| rng.uniform()).collect()
        };
        let tol = rng.uniform() * 0.5;
        let got = match_signature(&query, &records, tol).map_err(|e| e.to_string())?;
        let (d, id) = nearest_by_scan(&query, &records);
        let want = if d <= tol {
            MatchResult::Known(id)
        } else {
            MatchResult::Unknown
        };
        ensure(got == want, || {
            format!("case {case}: got {got:?}, scan says {want:?}")
        })?;
        match got {
            MatchResult::Known(_) => known += 1,
            MatchResult::Unknown => {
                let mut db = SignatureDb::new(records.clone())?;
                let new_id = db
                    .register_unknown(&query, Tolerance::Fixed(tol))
                    .map_err(|e| e.to_string())?;
                ensure(new_id as usize == n + 1 && db.len() == n + 1, || {
                    format!("case {case}: id {new_id}")
                })?;
                let again = db
                    .match_signature(&query, Tolerance::Fixed(tol))
                    .map_err(|e| e.to_string())?;
                ensure(again == MatchResult::Known(new_id), || {
                    format!("case {case}: re-match {again:?}")
                })?;
                registered += 1;
            }
        }
    }
    Ok(format!(
        "500 triples: {known} known, {registered} registered and re-matched"
    ))
}

fn alert_order() -> Outcome {
    let four = [
        AlertKind::TrafficSignalOverride,
        AlertKind::VoiceBroadcast,
        AlertKind::RedZoneDeclared,
        AlertKind::BaseStationReport,
    ];
    let mut with_police = vec![AlertKind::PoliceNotify];
    with_police.extend(four);

    let mut runs = 0;
    for s in all_scenarios() {
        let black = s.targets.iter().any(|t| {
            s.watchlist.iter().any(|w| {
                Some(&w.key) == t.cargo.identity.as_ref() && w.status == WatchStatus::Black
            })
        });
        let out = run_scenario(&s).map_err(|e| e.to_string())?;
        let kinds: Vec<_> = out.alerts.iter().map(|a| a.kind).collect();
        let want = if black {
            with_police.clone()
        } else {
            four.to_vec()
        };
        ensure(kinds == want, || format!("{}: alerts {kinds:?}", s.name))?;
        ensure(
            out.alerts
                .iter()
                .all(|a| a.time == out.alerts[0].time && a.zone == out.alerts[0].zone),
            || format!("{}: alerts differ in time or zone", s.name),
        )?;
        runs += 1;
    }

    // Without a chemical signal nothing is confirmed and nothing is issued.
    let mut magnetic_only = Scenario::default_scenario();
    magnetic_only.targets[0].cargo.chemical = None;
    let out = run_scenario(&magnetic_only).map_err(|e| e.to_string())?;
    ensure(out.alerts.is_empty(), || {
        format!("magnetic-only run issued {:?}", out.alerts)
    })?;
    Ok(format!("{runs} confirmed runs in order (blacklist run led by PoliceNotify); magnetic-only run silent"))
}

fn energy_benefit() -> Outcome {
    let duty = Scenario::default_scenario();
    let mut forced = duty.clone();
    forced.protocol.force_active = true;
    let e_duty = run_scenario(&duty)
        .map_err(|e| e.to_string())?
        .total_energy();
    let e_forced = run_scenario(&forced)
        .map_err(|e| e.to_string())?
        .total_energy();
    let ratio = e_duty / e_forced;
    ensure(ratio < 0.5, || format!("ratio {ratio:.4} not below 0.5"))?;
    ensure(ratio <= PINNED_ENERGY_RATIO, || {
        format!("ratio {ratio:.4} regressed past pinned {PINNED_ENERGY_RATIO}")
    })?;
    Ok(format!(
        "{e_duty:.3} J duty-cycled vs {e_forced:.3} J all-active (ratio {ratio:.4})"
    ))
}

fn determinism() -> Outcome {
    let s = Scenario::default_scenario();
    let start = Instant::now();
    let a = trace_of(&s)?.to_text();
    let elapsed = start.elapsed();
    let b = trace_of(&s)?.to_text();
    ensure(a.as_bytes() == b.as_bytes(), || {
        "same seed produced different traces".into()
    })?;
    let mut other = s.clone();
    other.seed += 1;
    let c = trace_of(&other)?.to_text();
    ensure(a != c, || {
        "different seeds produced identical traces".into()
    })?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("default run took {elapsed:?}")
    })?;
    Ok(format!(
        "{} bytes identical across runs; seed+1 differs; run took {elapsed:.2?}",
        a.len()
    ))
}

fn causality() -> Outcome {
    let (mut gas_events, mut notifies) = (0, 0);
    for s in all_scenarios() {
        let trace = trace_of(&s)?;
        let mut chemical_seen: BTreeSet<u32> = BTreeSet::new();
        let mut positives: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        for line in &trace.lines {
            match line.actor {
                ActorId::Node(id) => {
                    if line.kind == "gas-sample" {
                        ensure(chemical_seen.contains(&id), || {
                            format!(
                                "{}: gas-sample on node {id} at {} without prior chemical positive",
                                s.name, line.time
                            )
                        })?;
                        gas_events += 1;
                    }
                    let detected: Vec<&str> = line
                        .get("detect")
                        .map(|d| d.split('|').collect())
                        .unwrap_or_default();
                    if line.get("sent").is_some_and(|v| v.contains("CuNotify@")) {
                        ensure(!detected.is_empty(), || {
                            format!(
                                "{}: node {id} sent CuNotify at {} with no positive",
                                s.name, line.time
                            )
                        })?;
                    }
                    if detected.contains(&"chemical") {
                        chemical_seen.insert(id);
                    }
                    positives
                        .entry(id)
                        .or_default()
                        .extend(detected.iter().map(|m| m.to_string()));
                }
                ActorId::CommandCenter if line.get("msg") == Some("CuNotify") => {
                    let from: u32 = line
                        .get("from")
                        .and_then(|f| f.strip_prefix("node:"))
                        .and_then(|n| n.parse().ok())
                        .ok_or_else(|| format!("bad CuNotify source at {}", line.time))?;
                    let modality = line.get("modality").unwrap_or("?");
                    ensure(
                        positives.get(&from).is_some_and(|m| m.contains(modality)),
                        || {
                            format!("{}: CuNotify from node {from} ({modality}) at {} without prior positive", s.name, line.time)
                        },
                    )?;
                    notifies += 1;
                }
                _ => {}
            }
        }
    }
    ensure(gas_events > 0 && notifies > 0, || {
        "checks were vacuous".into()
    })?;
    Ok(format!(
        "{gas_events} gas-sample events and {notifies} CuNotify deliveries all caused"
    ))
}

fn determinism_across_scenarios() -> Outcome {
    let mut n = 0;
    for s in all_scenarios() {
        let a = trace_of(&s)?;
        let b = trace_of(&s)?;
        ensure(a.to_text() == b.to_text(), || {
            format!("{}: traces differ", s.name)
        })?;
        for pair in a.lines.windows(2) {
            let key = |l: &edass_core::TraceLine| (l.time, l.seq().unwrap_or(u64::MAX));
            ensure(key(&pair[0]) < key(&pair[1]), || {
                format!(
                    "{}: lines out of (time, seq) order at {}",
                    s.name, pair[1].time
                )
            })?;
        }
        check_one_head(&a).map_err(|e| format!("{}: {e}", s.name))?;
        n += 1;
    }
    Ok(format!(
        "{n} scenarios reproducible, ordered and one-head clean"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 radar range gate", radar_range_gate),
        ("2 plume persistence", plume_persistence),
        ("3 one head per cluster", one_head),
        ("4 fusion oracle", fusion_oracle),
        ("5 prediction exactness", prediction_exactness),
        ("6 signature matching oracle", signature_oracle),
        ("7 alert escalation order", alert_order),
        ("8 duty-cycle energy benefit", energy_benefit),
        ("9 determinism", determinism),
        ("10 escalation causality", causality),
        (
            "regression: determinism across scenarios",
            determinism_across_scenarios,
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {name}: {reason}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
