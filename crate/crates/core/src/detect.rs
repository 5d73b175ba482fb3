//! Offline detection of observable timeline conflicts.
//!
//! For every analyzed response the detector rebuilds the consistent
//! timeline (the `n` newest tweets at or before the response time among the
//! producers the consumer follows), lists the tweets the response is missing,
//! and keeps only the ones another served response can witness:
//!
//! * a tweet missing *between* two entries the response does show is a
//!   [`ConflictType::GapWitnessed`] conflict if any analyzed response
//!   contains it;
//! * a tweet missing *ahead of* everything the response shows is a
//!   [`ConflictType::NewerWitnessedEarlier`] conflict if a response served
//!   strictly earlier contains it.
//!
//! Anything else (a tweet that simply has not arrived yet, or one older than
//! the whole response) is staleness and is not counted.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerId, ProducerId, TimelineEntry, TimelineResponse, TweetEvent, TweetKey};
use crate::network::FollowingNetwork;
use crate::sim::VirtualTime;

/// Per-producer sorted view of the global tweet log.
#[derive(Clone, Debug)]
pub struct TweetIndex {
    by_producer: HashMap<ProducerId, Vec<TimelineEntry>>,
    by_key: HashMap<TweetKey, TimelineEntry>,
}

impl TweetIndex {
    /// Validates the global order (`seq` counting from 0, timestamps
    /// non-decreasing, no repeated `(producer, t)`) and indexes it.
    pub fn new(tweets: &[TweetEvent]) -> Result<Self> {
        let mut by_producer: HashMap<ProducerId, Vec<TimelineEntry>> = HashMap::new();
        let mut by_key = HashMap::with_capacity(tweets.len());
        let mut prev: Option<&TweetEvent> = None;
        for (i, t) in tweets.iter().enumerate() {
            if t.seq != i as u64 || prev.is_some_and(|p| p.t > t.t) {
                return Err(Error::Integrity(format!(
                    "tweet log not in global order at seq {}",
                    t.seq
                )));
            }
            if by_key.insert(t.key(), t.entry()).is_some() {
                return Err(Error::Integrity(format!(
                    "producer {} posted twice at {}",
                    t.producer_id,
                    t.t.to_iso()
                )));
            }
            by_producer
                .entry(t.producer_id)
                .or_default()
                .push(t.entry());
            prev = Some(t);
        }
        Ok(TweetIndex {
            by_producer,
            by_key,
        })
    }

    pub fn get(&self, key: &TweetKey) -> Option<&TimelineEntry> {
        self.by_key.get(key)
    }

    /// Tweets of `p` with `t <= at`, oldest first.
    pub fn posted_by(&self, p: ProducerId, at: VirtualTime) -> &[TimelineEntry] {
        match self.by_producer.get(&p) {
            Some(v) => &v[..v.partition_point(|e| e.t <= at)],
            None => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistentTimeline {
    pub consumer_id: ConsumerId,
    pub served_at: VirtualTime,
    /// Newest first.
    pub entries: Vec<TimelineEntry>,
}

/// The timeline a single-copy system would have served `consumer` at `at`.
pub fn consistent_timeline(
    consumer: ConsumerId,
    at: VirtualTime,
    tweets: &TweetIndex,
    network: &FollowingNetwork,
    n_timeline: usize,
) -> Result<ConsistentTimeline> {
    let mut entries: Vec<TimelineEntry> = Vec::new();
    for &p in network.follows(consumer)? {
        let posted = tweets.posted_by(p, at);
        entries.extend_from_slice(&posted[posted.len().saturating_sub(n_timeline)..]);
    }
    entries.sort_unstable_by(|a, b| b.cmp(a));
    entries.truncate(n_timeline);
    Ok(ConsistentTimeline {
        consumer_id: consumer,
        served_at: at,
        entries,
    })
}

/// Where a missing tweet sits relative to what the response shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    /// The response shows something newer and something older.
    Interior,
    /// Newer than everything shown (or the response is empty).
    Head,
    /// Older than everything shown.
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MissingTweet {
    pub entry: TimelineEntry,
    pub position: Position,
}

/// Tweets in `oracle` but not in `response`, tagged with their position.
///
/// A response entry that is not in the oracle is legitimate only when the
/// oracle is full and the entry is older than its oldest entry (pushed out by
/// truncation). Anything else is a phantom and an integrity error.
pub fn find_missing(
    response: &TimelineResponse,
    oracle: &ConsistentTimeline,
    n_timeline: usize,
) -> Result<Vec<MissingTweet>> {
    let oldest_kept = if oracle.entries.len() >= n_timeline {
        oracle.entries.last().copied()
    } else {
        None
    };
    for e in &response.entries {
        let in_oracle = oracle.entries.binary_search_by(|o| e.cmp(o)).is_ok();
        let truncated = oldest_kept.is_some_and(|o| *e < o);
        if !in_oracle && !truncated {
            return Err(Error::Integrity(format!(
                "response {} shows tweet {}@{} that its consumer could not have seen",
                response.response_id,
                e.producer_id,
                e.t.to_iso()
            )));
        }
    }
    let newest = response.entries.first();
    let oldest = response.entries.last();
    Ok(oracle
        .entries
        .iter()
        .filter(|o| response.entries.binary_search_by(|e| (*o).cmp(e)).is_err())
        .map(|&entry| {
            let position = match (newest, oldest) {
                (Some(n), Some(o)) if entry < *n && entry > *o => Position::Interior,
                (Some(o), _) if entry < *o => Position::Tail,
                _ => Position::Head,
            };
            MissingTweet { entry, position }
        })
        .collect())
}

/// For each tweet, every response that showed it, sorted by `(T, id)`.
#[derive(Clone, Debug, Default)]
pub struct WitnessIndex {
    seen: HashMap<TweetKey, Vec<(VirtualTime, u64)>>,
}

impl WitnessIndex {
    pub fn build<'a, I>(responses: I) -> Self
    where
        I: IntoIterator<Item = &'a TimelineResponse>,
    {
        let mut seen: HashMap<TweetKey, Vec<(VirtualTime, u64)>> = HashMap::new();
        for r in responses {
            for e in &r.entries {
                seen.entry(e.key())
                    .or_default()
                    .push((r.served_at, r.response_id));
            }
        }
        for v in seen.values_mut() {
            v.sort_unstable();
        }
        WitnessIndex { seen }
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn witnesses(&self, key: &TweetKey) -> &[(VirtualTime, u64)] {
        self.seen.get(key).map_or(&[], Vec::as_slice)
    }

    /// Earliest witness of `key`.
    pub fn earliest(&self, key: &TweetKey) -> Option<(VirtualTime, u64)> {
        self.witnesses(key).first().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConflictType {
    #[serde(rename = "gap")]
    GapWitnessed,
    #[serde(rename = "newer_earlier")]
    NewerWitnessedEarlier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConflictRecord {
    pub response_id: u64,
    pub consumer_id: ConsumerId,
    pub missing: TimelineEntry,
    pub conflict_type: ConflictType,
    pub witness_response_id: u64,
    /// Response time minus the missing tweet's timestamp.
    pub gap_us: u64,
}

/// Decides whether a missing tweet is an observable conflict.
pub fn classify(
    response: &TimelineResponse,
    missing: &MissingTweet,
    index: &WitnessIndex,
) -> Option<ConflictRecord> {
    let key = missing.entry.key();
    let (conflict_type, witness) = match missing.position {
        Position::Interior => (ConflictType::GapWitnessed, index.earliest(&key)?),
        Position::Head => {
            let w = index.earliest(&key)?;
            if w.0 >= response.served_at {
                return None;
            }
            (ConflictType::NewerWitnessedEarlier, w)
        }
        Position::Tail => return None,
    };
    let gap_us = response.served_at - missing.entry.t;
    Some(ConflictRecord {
        response_id: response.response_id,
        consumer_id: response.consumer_id,
        missing: missing.entry,
        conflict_type,
        witness_response_id: witness.1,
        gap_us,
    })
}

/// `G = max(T - t_i)` over the response's observable conflicts.
pub fn inconsistency_time_gap(
    response: &TimelineResponse,
    conflicts: &[ConflictRecord],
) -> Option<u64> {
    conflicts
        .iter()
        .filter(|c| c.response_id == response.response_id)
        .map(|c| response.served_at - c.missing.t)
        .max()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Trailing fraction of the response log to analyze, in `(0, 1]`.
    pub analysis_window_fraction: f64,
    pub n_timeline: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            analysis_window_fraction: 0.5,
            n_timeline: crate::feed::DEFAULT_N_TIMELINE,
        }
    }
}

/// Number of leading responses excluded as warm-up.
pub fn warmup_len(total: usize, fraction: f64) -> usize {
    total - ((total as f64 * fraction).ceil() as usize).min(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionTotals {
    pub responses_total: u64,
    /// Index of the first analyzed response in the log.
    pub analyzed_from: u64,
    pub responses_analyzed: u64,
    pub responses_with_missing: u64,
    pub missing_tweets: u64,
    pub conflict_records: u64,
    pub conflicting_responses: u64,
    pub gap_witnessed: u64,
    pub newer_witnessed_earlier: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionResult {
    /// Ordered by response, then newest missing tweet first.
    pub records: Vec<ConflictRecord>,
    /// `(response_id, consumer, G in µs)` for every conflicting response.
    pub per_response_gap: Vec<(u64, ConsumerId, u64)>,
    pub totals: DetectionTotals,
}

fn check_response(
    r: &TimelineResponse,
    network: &FollowingNetwork,
    prev: Option<&TimelineResponse>,
) -> Result<()> {
    if !network.has_consumer(r.consumer_id) {
        return Err(Error::Integrity(format!(
            "response {} names unknown consumer {}",
            r.response_id, r.consumer_id
        )));
    }
    if let Some(p) = prev {
        if p.response_id >= r.response_id || p.served_at > r.served_at {
            return Err(Error::Integrity(format!(
                "response log out of order at response {}",
                r.response_id
            )));
        }
    }
    if r.entries.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Integrity(format!(
            "response {} entries are not strictly newest-first",
            r.response_id
        )));
    }
    Ok(())
}

/// Runs the full detection pipeline over the analysis window.
pub fn detect_all(
    responses: &[TimelineResponse],
    tweets: &[TweetEvent],
    network: &FollowingNetwork,
    config: &DetectConfig,
) -> Result<DetectionResult> {
    let f = config.analysis_window_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "analysis window fraction {f} outside (0, 1]"
        )));
    }
    if config.n_timeline < 1 {
        return Err(Error::InvalidParameter("n_timeline must be >= 1".into()));
    }
    let index = TweetIndex::new(tweets)?;
    for (i, r) in responses.iter().enumerate() {
        check_response(r, network, i.checked_sub(1).map(|j| &responses[j]))?;
        for e in &r.entries {
            if index.get(&e.key()) != Some(e) {
                return Err(Error::Integrity(format!(
                    "response {} shows tweet {}@{} absent from the tweet log",
                    r.response_id,
                    e.producer_id,
                    e.t.to_iso()
                )));
            }
        }
    }

    let from = warmup_len(responses.len(), f);
    let analyzed = &responses[from..];
    let witnesses = WitnessIndex::build(analyzed);

    let mut result = DetectionResult::default();
    let totals = &mut result.totals;
    totals.responses_total = responses.len() as u64;
    totals.analyzed_from = from as u64;
    totals.responses_analyzed = analyzed.len() as u64;
    for r in analyzed {
        let oracle = consistent_timeline(
            r.consumer_id,
            r.served_at,
            &index,
            network,
            config.n_timeline,
        )?;
        let missing = find_missing(r, &oracle, config.n_timeline)?;
        if missing.is_empty() {
            continue;
        }
        totals.responses_with_missing += 1;
        totals.missing_tweets += missing.len() as u64;
        let before = result.records.len();
        for m in &missing {
            if let Some(rec) = classify(r, m, &witnesses) {
                match rec.conflict_type {
                    ConflictType::GapWitnessed => totals.gap_witnessed += 1,
                    ConflictType::NewerWitnessedEarlier => totals.newer_witnessed_earlier += 1,
                }
                result.records.push(rec);
            }
        }
        if let Some(g) = inconsistency_time_gap(r, &result.records[before..]) {
            totals.conflicting_responses += 1;
            result
                .per_response_gap
                .push((r.response_id, r.consumer_id, g));
        }
    }
    result.totals.conflict_records = result.records.len() as u64;
    Ok(result)
}

#[derive(Serialize, Deserialize)]
struct ConflictLine {
    response_id: u64,
    consumer_id: String,
    producer_id: String,
    t: String,
    #[serde(rename = "type")]
    conflict_type: ConflictType,
    witness_response_id: u64,
    #[serde(rename = "G_seconds")]
    g_seconds: f64,
}

/// One JSON line per conflict record. `G_seconds` is the record's own
/// `T - t`; a response's G is the maximum over its records.
pub fn write_conflicts<W: Write>(mut w: W, result: &DetectionResult) -> Result<()> {
    for c in &result.records {
        let line = ConflictLine {
            response_id: c.response_id,
            consumer_id: c.consumer_id.to_string(),
            producer_id: c.missing.producer_id.to_string(),
            t: c.missing.t.to_iso(),
            conflict_type: c.conflict_type,
            witness_response_id: c.witness_response_id,
            g_seconds: c.gap_us as f64 / 1e6,
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a [`DetectionResult`] from a conflicts file and its totals,
/// resolving tweets against the tweet log.
pub fn read_detection<R: BufRead>(
    conflicts: R,
    totals: DetectionTotals,
    tweets: &[TweetEvent],
) -> Result<DetectionResult> {
    let index = TweetIndex::new(tweets)?;
    let mut records = Vec::new();
    for (i, line) in conflicts.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: ConflictLine = serde_json::from_str(&line).map_err(|source| Error::Parse {
            line: i + 1,
            source,
        })?;
        let bad_id = |s: &str| Error::Integrity(format!("conflict line {}: bad id {s:?}", i + 1));
        let key = TweetKey {
            producer_id: ProducerId(c.producer_id.parse().map_err(|_| bad_id(&c.producer_id))?),
            t: VirtualTime::parse_iso(&c.t)?,
        };
        let missing = *index
            .get(&key)
            .ok_or_else(|| Error::Integrity(format!("conflict line {}: unknown tweet", i + 1)))?;
        records.push(ConflictRecord {
            response_id: c.response_id,
            consumer_id: ConsumerId(c.consumer_id.parse().map_err(|_| bad_id(&c.consumer_id))?),
            missing,
            conflict_type: c.conflict_type,
            witness_response_id: c.witness_response_id,
            gap_us: (c.g_seconds * 1e6).round() as u64,
        });
    }
    let mut per_response_gap: Vec<(u64, ConsumerId, u64)> = Vec::new();
    for r in &records {
        match per_response_gap.last_mut() {
            Some(last) if last.0 == r.response_id => last.2 = last.2.max(r.gap_us),
            _ => per_response_gap.push((r.response_id, r.consumer_id, r.gap_us)),
        }
    }
    if per_response_gap.len() as u64 != totals.conflicting_responses
        || records.len() as u64 != totals.conflict_records
    {
        return Err(Error::Integrity(
            "conflict records disagree with detection totals".into(),
        ));
    }
    Ok(DetectionResult {
        records,
        per_response_gap,
        totals,
    })
}
