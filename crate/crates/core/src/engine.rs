//! Deterministic event loop: a `(time, seq)`-ordered queue, a monotone clock
//! and a single seeded random source consumed in dispatch order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::SimError;

/// Simulation-relative time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "invalid simulation time {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> Self {
        SimTime::from_secs(self.0 + delay)
    }

    pub fn since(self, earlier: SimTime) -> f64 {
        self.0 - earlier.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Addressee of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorId {
    Node(u32),
    Target(u32),
    CommandCenter,
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Node(id) => write!(f, "node:{id}"),
            ActorId::Target(id) => write!(f, "target:{id}"),
            ActorId::CommandCenter => f.write_str("cc"),
        }
    }
}

impl std::str::FromStr for ActorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "cc" {
            return Ok(ActorId::CommandCenter);
        }
        let (kind, id) = s
            .split_once(':')
            .ok_or_else(|| format!("bad actor `{s}`"))?;
        let id: u32 = id.parse().map_err(|_| format!("bad actor id `{s}`"))?;
        match kind {
            "node" => Ok(ActorId::Node(id)),
            "target" => Ok(ActorId::Target(id)),
            _ => Err(format!("bad actor kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub actor: ActorId,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the smallest (time, seq) first.
impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Seeded generator. ChaCha8 gives the same stream on every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Zero-mean Gaussian draw. A zero sigma returns 0 without consuming state.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * sigma
    }

    /// `true` with probability `p`. `p <= 0` never consumes state.
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        self.uniform() < p
    }
}

/// Pending events plus the clock.
#[derive(Debug)]
pub struct Scheduler<P> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<P>>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueues `payload` for `actor` at `time` and returns its sequence number.
    pub fn schedule(&mut self, time: SimTime, actor: ActorId, payload: P) -> Result<u64, SimError> {
        if time < self.clock {
            return Err(SimError::PastEvent {
                time: time.secs(),
                clock: self.clock.secs(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            time,
            seq,
            actor,
            payload,
        });
        Ok(seq)
    }

    /// Like [`Scheduler::schedule`] with a relative, non-negative delay.
    pub fn schedule_in(&mut self, delay: f64, actor: ActorId, payload: P) -> Result<u64, SimError> {
        if delay.is_nan() || delay < 0.0 {
            return Err(SimError::PastEvent {
                time: self.clock.secs() + delay,
                clock: self.clock.secs(),
            });
        }
        self.schedule(self.clock.after(delay), actor, payload)
    }

    fn pop_due(&mut self, t_end: SimTime) -> Option<Event<P>> {
        if self.queue.peek()?.time > t_end {
            return None;
        }
        let event = self.queue.pop()?;
        debug_assert!(event.time >= self.clock);
        self.clock = event.time;
        Some(event)
    }
}

/// Access handed to a handler while it processes one event.
pub struct Context<'a, P> {
    pub scheduler: &'a mut Scheduler<P>,
    pub rng: &'a mut RandomSource,
}

impl<P> Context<'_, P> {
    pub fn now(&self) -> SimTime {
        self.scheduler.now()
    }
}

pub trait Handler<P> {
    type Record;

    fn handle(&mut self, event: Event<P>, ctx: &mut Context<'_, P>) -> Self::Record;
}

/// One dispatched event as it appears in the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatched<R> {
    pub time: SimTime,
    pub seq: u64,
    pub actor: ActorId,
    pub record: R,
}

#[derive(Debug)]
pub struct Simulation<P> {
    pub scheduler: Scheduler<P>,
    pub rng: RandomSource,
}

impl<P> Simulation<P> {
    pub fn new(seed: u64) -> Self {
        Simulation {
            scheduler: Scheduler::new(),
            rng: RandomSource::new(seed),
        }
    }

    pub fn now(&self) -> SimTime {
        self.scheduler.now()
    }

    /// Dispatches every event with `time <= t_end` in `(time, seq)` order and
    /// leaves the clock at `t_end`.
    pub fn run_until<H: Handler<P>>(
        &mut self,
        handler: &mut H,
        t_end: SimTime,
    ) -> Result<Vec<Dispatched<H::Record>>, SimError> {
        if t_end < self.scheduler.clock {
            return Err(SimError::EndBeforeClock {
                t_end: t_end.secs(),
                clock: self.scheduler.clock.secs(),
            });
        }
        let mut trace = Vec::new();
        while let Some(event) = self.scheduler.pop_due(t_end) {
            let (time, seq, actor) = (event.time, event.seq, event.actor);
            let mut ctx = Context {
                scheduler: &mut self.scheduler,
                rng: &mut self.rng,
            };
            let record = handler.handle(event, &mut ctx);
            trace.push(Dispatched {
                time,
                seq,
                actor,
                record,
            });
        }
        self.scheduler.clock = t_end;
        Ok(trace)
    }
}
