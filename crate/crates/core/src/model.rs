//! Identifiers and the records that flow between the simulator and the detector.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sim::VirtualTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProducerId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConsumerId(pub u32);

impl fmt::Display for ProducerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ConsumerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A timestamped publish event. `(t, seq)` is the global order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TweetEvent {
    pub producer_id: ProducerId,
    pub t: VirtualTime,
    pub seq: u64,
}

impl TweetEvent {
    pub fn key(&self) -> TweetKey {
        TweetKey {
            producer_id: self.producer_id,
            t: self.t,
        }
    }

    pub fn entry(&self) -> TimelineEntry {
        TimelineEntry {
            producer_id: self.producer_id,
            t: self.t,
            seq: self.seq,
        }
    }
}

/// What a served timeline exposes about a tweet. A producer never posts twice
/// in the same microsecond, so this identifies the tweet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TweetKey {
    pub producer_id: ProducerId,
    pub t: VirtualTime,
}

/// One timeline slot. Ordered by global order `(t, seq)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TimelineEntry {
    pub producer_id: ProducerId,
    pub t: VirtualTime,
    pub seq: u64,
}

impl TimelineEntry {
    pub fn key(&self) -> TweetKey {
        TweetKey {
            producer_id: self.producer_id,
            t: self.t,
        }
    }

    pub fn order(&self) -> (VirtualTime, u64) {
        (self.t, self.seq)
    }
}

impl PartialOrd for TimelineEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimelineEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then(self.producer_id.cmp(&other.producer_id))
    }
}

/// A materialized timeline: newest first, at most `capacity` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct TimelineValue {
    entries: Vec<TimelineEntry>,
}

impl TimelineValue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary entries: sorts newest-first, drops duplicates
    /// and truncates to `capacity`.
    pub fn from_entries(mut entries: Vec<TimelineEntry>, capacity: usize) -> Self {
        entries.sort_unstable_by(|a, b| b.cmp(a));
        entries.dedup();
        entries.truncate(capacity);
        TimelineValue { entries }
    }

    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy of this value with `entry` inserted in order and the tail
    /// truncated to `capacity`. The new entry may fall off the end.
    pub fn with_inserted(&self, entry: TimelineEntry, capacity: usize) -> Self {
        let mut entries = self.entries.clone();
        let pos = entries.partition_point(|e| *e > entry);
        if entries.get(pos) != Some(&entry) {
            entries.insert(pos, entry);
        }
        entries.truncate(capacity);
        TimelineValue { entries }
    }

    pub fn contains(&self, key: &TweetKey) -> bool {
        self.entries.iter().any(|e| e.key() == *key)
    }
}

/// One served timeline query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimelineResponse {
    pub response_id: u64,
    pub consumer_id: ConsumerId,
    /// Virtual time the read was served.
    pub served_at: VirtualTime,
    /// Newest first.
    pub entries: Vec<TimelineEntry>,
    /// Replica that served the read; not part of the response log format.
    pub replica_served: Option<usize>,
}

impl TimelineResponse {
    pub fn contains(&self, key: &TweetKey) -> bool {
        self.entries.iter().any(|e| e.key() == *key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(t: u64, seq: u64) -> TimelineEntry {
        TimelineEntry {
            producer_id: ProducerId(1),
            t: VirtualTime::from_micros(t),
            seq,
        }
    }

    #[test]
    fn insert_keeps_newest_first_and_truncates() {
        let v = TimelineValue::new()
            .with_inserted(e(10, 1), 3)
            .with_inserted(e(30, 3), 3)
            .with_inserted(e(20, 2), 3);
        assert_eq!(v.entries(), &[e(30, 3), e(20, 2), e(10, 1)]);
        let v = v.with_inserted(e(40, 4), 3);
        assert_eq!(v.entries(), &[e(40, 4), e(30, 3), e(20, 2)]);
        // Older than every entry of a full timeline: truncated away.
        let w = v.with_inserted(e(5, 0), 3);
        assert_eq!(w, v);
    }

    #[test]
    fn duplicate_insert_is_idempotent() {
        let v = TimelineValue::new().with_inserted(e(10, 1), 5);
        assert_eq!(v.with_inserted(e(10, 1), 5), v);
    }

    #[test]
    fn equal_timestamps_ordered_by_seq() {
        let v = TimelineValue::from_entries(vec![e(10, 1), e(10, 2), e(9, 0)], 10);
        assert_eq!(v.entries(), &[e(10, 2), e(10, 1), e(9, 0)]);
    }
}
