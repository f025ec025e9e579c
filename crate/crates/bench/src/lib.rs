//! Deterministic inputs shared by the criterion benches.

use edass_core::{Position, RandomSource, RateClass, SignatureRecord};

/// `n` records of dimension `dim` with ids `1..=n`.
pub fn signature_db(n: usize, dim: usize, seed: u64) -> Vec<SignatureRecord> {
    let mut rng = RandomSource::new(seed);
    (1..=n as u32)
        .map(|id| SignatureRecord {
            id,
            name: format!("S{id}"),
            features: (0..dim).map(|_| rng.uniform()).collect(),
            class: if id % 2 == 0 {
                RateClass::Low
            } else {
                RateClass::High
            },
        })
        .collect()
}

/// `n` weighted positions scattered over a 100 m square.
pub fn weighted_reports(n: usize, seed: u64) -> Vec<(Position, f64)> {
    let mut rng = RandomSource::new(seed);
    (0..n)
        .map(|_| {
            (
                Position::new(rng.uniform() * 100.0, rng.uniform() * 100.0),
                rng.uniform() + 0.01,
            )
        })
        .collect()
}
