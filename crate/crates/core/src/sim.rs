//! Deterministic virtual-time event loop and labelled random streams.
//!
//! Every runtime component schedules onto a single [`Scheduler`]. Events are
//! ordered by `(fire_at, seq)` where `seq` is the insertion counter, so two
//! events at the same instant always fire in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microseconds since the simulation epoch.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct VirtualTime(u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub const fn from_micros(micros: u64) -> Self {
        VirtualTime(micros)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        VirtualTime((secs * 1e6).round().max(0.0) as u64)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.saturating_sub(other.0))
    }

    /// ISO-8601 rendering with microsecond precision, e.g.
    /// `1970-01-01T00:00:32.256647`.
    pub fn to_iso(self) -> String {
        let secs = (self.0 / 1_000_000) as i64;
        let nanos = ((self.0 % 1_000_000) * 1_000) as u32;
        let dt = DateTime::from_timestamp(secs, nanos).expect("virtual time within chrono range");
        dt.naive_utc().format("%Y-%m-%dT%H:%M:%S%.6f").to_string()
    }

    pub fn parse_iso(s: &str) -> Result<Self> {
        let dt = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
            .map_err(|e| Error::Integrity(format!("bad timestamp {s:?}: {e}")))?;
        let utc = dt.and_utc();
        let secs = utc.timestamp();
        if secs < 0 {
            return Err(Error::Integrity(format!(
                "timestamp {s:?} precedes the epoch"
            )));
        }
        let micros = secs as u64 * 1_000_000 + u64::from(utc.timestamp_subsec_micros());
        Ok(VirtualTime(micros))
    }
}

impl Add<u64> for VirtualTime {
    type Output = VirtualTime;

    fn add(self, micros: u64) -> VirtualTime {
        VirtualTime(self.0 + micros)
    }
}

impl Sub for VirtualTime {
    type Output = u64;

    fn sub(self, rhs: VirtualTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}µs", self.0)
    }
}

/// The kinds of events the feed simulation schedules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    TweetArrival,
    FanoutStep,
    PropagationArrival,
    TimelineQuery,
    RetryWrite,
}

/// Handle returned by [`Scheduler::schedule`]; usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A queued event.
#[derive(Debug)]
pub struct SimEvent<P> {
    pub fire_at: VirtualTime,
    pub seq: u64,
    pub payload: P,
}

impl<P> PartialEq for SimEvent<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<P> Eq for SimEvent<P> {}

impl<P> PartialOrd for SimEvent<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for SimEvent<P> {
    // BinaryHeap is a max-heap; reverse so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerStats {
    pub scheduled: u64,
    pub processed: u64,
    pub cancelled: u64,
}

#[derive(Debug)]
pub struct Scheduler<P> {
    now: VirtualTime,
    next_seq: u64,
    queue: BinaryHeap<SimEvent<P>>,
    cancelled: HashSet<u64>,
    stats: SchedulerStats,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: VirtualTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            stats: SchedulerStats::default(),
        }
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn stats(&self) -> SchedulerStats {
        self.stats
    }

    /// Number of live (not cancelled) events still queued.
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_at: VirtualTime, payload: P) -> Result<EventHandle> {
        if fire_at < self.now {
            return Err(Error::PastEvent {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(SimEvent {
            fire_at,
            seq,
            payload,
        });
        self.stats.scheduled += 1;
        Ok(EventHandle(seq))
    }

    /// Schedules `delay_micros` after the current instant. Never fails.
    pub fn schedule_in(&mut self, delay_micros: u64, payload: P) -> EventHandle {
        self.schedule(self.now + delay_micros, payload)
            .expect("relative schedule is never in the past")
    }

    /// Cancels a queued event. Returns false if it already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq || self.cancelled.contains(&handle.0) {
            return false;
        }
        if !self.queue.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0);
        self.stats.cancelled += 1;
        true
    }

    /// Pops the next event with `fire_at <= t_end`, advancing the clock to it.
    pub fn pop_due(&mut self, t_end: VirtualTime) -> Option<SimEvent<P>> {
        loop {
            if self.queue.peek()?.fire_at > t_end {
                return None;
            }
            let ev = self.queue.pop()?;
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.stats.processed += 1;
            return Some(ev);
        }
    }

    /// Processes every event with `fire_at <= t_end` in `(fire_at, seq)` order
    /// and leaves the clock at `t_end`. The handler may schedule more events.
    pub fn run_until<F>(&mut self, t_end: VirtualTime, mut handler: F) -> Result<u64>
    where
        F: FnMut(&mut Self, SimEvent<P>) -> Result<()>,
    {
        if t_end < self.now {
            return Err(Error::PastEvent {
                fire_at: t_end,
                now: self.now,
            });
        }
        let mut processed = 0;
        while let Some(ev) = self.pop_due(t_end) {
            processed += 1;
            handler(self, ev)?;
        }
        self.now = t_end;
        Ok(processed)
    }
}

/// A non-negative delay distribution, configured in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayDistribution {
    Constant { ms: f64 },
    Exponential { mean_ms: f64 },
}

impl DelayDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DelayDistribution::Constant { ms } => ms >= 0.0 && ms.is_finite(),
            DelayDistribution::Exponential { mean_ms } => mean_ms > 0.0 && mean_ms.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bad delay distribution {self:?}"
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self, DelayDistribution::Constant { ms } if ms == 0.0)
    }

    pub fn mean_ms(&self) -> f64 {
        match *self {
            DelayDistribution::Constant { ms } => ms,
            DelayDistribution::Exponential { mean_ms } => mean_ms,
        }
    }

    pub fn scaled(&self, factor: f64) -> DelayDistribution {
        match *self {
            DelayDistribution::Constant { ms } => DelayDistribution::Constant { ms: ms * factor },
            DelayDistribution::Exponential { mean_ms } => DelayDistribution::Exponential {
                mean_ms: mean_ms * factor,
            },
        }
    }

    /// Draws a delay in whole microseconds. An exponential draw is
    /// `mean * Exp(1)`, so scaling the mean scales every draw exactly.
    pub fn sample_micros<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let ms = match *self {
            DelayDistribution::Constant { ms } => ms,
            DelayDistribution::Exponential { mean_ms } => {
                let unit: f64 = rng.sample(Exp1);
                mean_ms * unit
            }
        };
        (ms * 1_000.0).round() as u64
    }
}

/// Source of independent, reproducible random streams keyed by label.
#[derive(Clone, Copy, Debug)]
pub struct RngStreams {
    seed: u64,
}

pub type StreamRng = ChaCha8Rng;

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives a generator from `(master seed, label)`. The label is hashed
    /// with FNV-1a and mixed with the seed through splitmix64, giving a
    /// 256-bit ChaCha key.
    pub fn stream(&self, label: &str) -> StreamRng {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut state = self.seed ^ h.rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
