//! Line-delimited JSON logs for tweets, responses and the per-tweet trace.
//!
//! Tweet and response lines are written with `": "` and `", "` separators so
//! the tweet body reads exactly like `{"producer_id": "1353955", "t": "..."}`.
//! Ids are quoted decimal strings and timestamps are ISO-8601 with
//! microseconds.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::feed::TweetTrace;
use crate::model::{ConsumerId, ProducerId, TimelineEntry, TimelineResponse, TweetEvent, TweetKey};
use crate::sim::VirtualTime;

pub fn tweet_line(t: &TweetEvent) -> String {
    format!(
        r#"{{"producer_id": "{}", "t": "{}", "seq": {}}}"#,
        t.producer_id,
        t.t.to_iso(),
        t.seq
    )
}

pub fn response_line(r: &TimelineResponse) -> String {
    let entries: Vec<String> = r
        .entries
        .iter()
        .map(|e| {
            format!(
                r#"{{"producer_id": "{}", "t": "{}"}}"#,
                e.producer_id,
                e.t.to_iso()
            )
        })
        .collect();
    format!(
        r#"{{"response_id": {}, "consumer_id": "{}", "T": "{}", "entries": [{}]}}"#,
        r.response_id,
        r.consumer_id,
        r.served_at.to_iso(),
        entries.join(", ")
    )
}

pub fn write_tweet_log<W: Write>(mut w: W, tweets: &[TweetEvent]) -> Result<()> {
    for t in tweets {
        writeln!(w, "{}", tweet_line(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_response_log<W: Write>(mut w: W, responses: &[TimelineResponse]) -> Result<()> {
    for r in responses {
        writeln!(w, "{}", response_line(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TweetTrace]) -> Result<()> {
    for t in trace {
        serde_json::to_writer(&mut w, t).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct TweetLine {
    producer_id: String,
    t: String,
    seq: u64,
}

#[derive(Deserialize)]
struct EntryLine {
    producer_id: String,
    t: String,
}

#[derive(Deserialize)]
struct ResponseLine {
    response_id: u64,
    consumer_id: String,
    #[serde(rename = "T")]
    served_at: String,
    entries: Vec<EntryLine>,
}

fn parse_id(s: &str, line: usize) -> Result<u32> {
    s.parse()
        .map_err(|_| Error::Integrity(format!("line {line}: bad id {s:?}")))
}

fn json_lines<R: BufRead, T: for<'de> Deserialize<'de>>(
    r: R,
) -> impl Iterator<Item = Result<(usize, T)>> {
    r.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(
            serde_json::from_str(&l)
                .map(|v| (i + 1, v))
                .map_err(|source| Error::Parse {
                    line: i + 1,
                    source,
                }),
        ),
    })
}

/// Reads a tweet log and checks that it is the append-only global order:
/// `seq` counts up from 0 and timestamps never decrease.
pub fn read_tweet_log<R: BufRead>(r: R) -> Result<Vec<TweetEvent>> {
    let mut out: Vec<TweetEvent> = Vec::new();
    for rec in json_lines::<_, TweetLine>(r) {
        let (line, rec) = rec?;
        let tweet = TweetEvent {
            producer_id: ProducerId(parse_id(&rec.producer_id, line)?),
            t: VirtualTime::parse_iso(&rec.t)?,
            seq: rec.seq,
        };
        if tweet.seq != out.len() as u64 {
            return Err(Error::Integrity(format!(
                "line {line}: expected seq {}, found {}",
                out.len(),
                tweet.seq
            )));
        }
        if out.last().is_some_and(|prev| prev.t > tweet.t) {
            return Err(Error::Integrity(format!(
                "line {line}: tweet log out of order"
            )));
        }
        out.push(tweet);
    }
    Ok(out)
}

/// Reads a response log, resolving each entry against the tweet log. An
/// entry with no matching tweet is a phantom and fails the read.
pub fn read_response_log<R: BufRead>(r: R, tweets: &[TweetEvent]) -> Result<Vec<TimelineResponse>> {
    let by_key: HashMap<TweetKey, u64> = tweets.iter().map(|t| (t.key(), t.seq)).collect();
    let mut out = Vec::new();
    for rec in json_lines::<_, ResponseLine>(r) {
        let (line, rec) = rec?;
        let entries = rec
            .entries
            .iter()
            .map(|e| {
                let key = TweetKey {
                    producer_id: ProducerId(parse_id(&e.producer_id, line)?),
                    t: VirtualTime::parse_iso(&e.t)?,
                };
                let seq = by_key.get(&key).ok_or_else(|| {
                    Error::Integrity(format!(
                        "line {line}: phantom tweet {} at {}",
                        e.producer_id, e.t
                    ))
                })?;
                Ok(TimelineEntry {
                    producer_id: key.producer_id,
                    t: key.t,
                    seq: *seq,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(TimelineResponse {
            response_id: rec.response_id,
            consumer_id: ConsumerId(parse_id(&rec.consumer_id, line)?),
            served_at: VirtualTime::parse_iso(&rec.served_at)?,
            entries,
            replica_served: None,
        });
    }
    Ok(out)
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TweetTrace>> {
    json_lines::<_, TweetTrace>(r)
        .map(|rec| rec.map(|(_, t)| t))
        .collect()
}
