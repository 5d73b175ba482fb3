//! Summary statistics over a detection result: inconsistency rate, the
//! distribution of G, attribution of conflicts to producers and consumers,
//! and four rank-correlation studies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::detect::{DetectionResult, DetectionTotals};
use crate::error::{Error, Result};
use crate::model::{ConsumerId, ProducerId, TimelineResponse, TweetEvent};
use crate::network::FollowingNetwork;
use crate::stats::spearman;

pub const DEFAULT_BUCKET_WIDTH_S: u64 = 100;

/// Conflicting responses over analyzed responses.
pub fn inconsistency_rate(result: &DetectionResult) -> Result<f64> {
    let t = &result.totals;
    if t.responses_analyzed == 0 {
        return Err(Error::EmptyAnalysis);
    }
    Ok(t.conflicting_responses as f64 / t.responses_analyzed as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GapHistogram {
    pub bucket_width_s: u64,
    /// Bucket index `k` covers `[k·w, (k+1)·w)` seconds.
    pub counts: BTreeMap<u64, u64>,
}

impl GapHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn nonempty_buckets(&self) -> usize {
        self.counts.len()
    }

    /// First bucket holding the largest count.
    pub fn mode_bucket(&self) -> Option<u64> {
        let max = *self.counts.values().max()?;
        self.counts.iter().find(|(_, &c)| c == max).map(|(&k, _)| k)
    }

    /// Whether the histogram decays past its mode: mean counts over the
    /// nonempty octave groups of buckets after the mode `m` (`{m}`, `{m+1}`,
    /// `{m+2, m+3}`, `{m+4..m+7}`, ...) never rise.
    pub fn has_decaying_tail(&self) -> bool {
        let (Some(mode), Some(&last)) = (self.mode_bucket(), self.counts.keys().next_back()) else {
            return false;
        };
        let mut prev = f64::INFINITY;
        let mut width = 1u64;
        let mut lo = mode;
        while lo <= last {
            let hi = lo + width - 1;
            let sum: u64 = self.counts.range(lo..=hi).map(|(_, c)| c).sum();
            if sum > 0 {
                let density = sum as f64 / width as f64;
                if density > prev {
                    return false;
                }
                prev = density;
            }
            if lo > mode {
                width *= 2;
            }
            lo = hi + 1;
        }
        true
    }
}

/// Buckets every conflicting response's G.
pub fn gap_histogram(result: &DetectionResult, bucket_width_s: u64) -> Result<GapHistogram> {
    if bucket_width_s == 0 {
        return Err(Error::InvalidParameter("bucket width must be > 0".into()));
    }
    let w = bucket_width_s * 1_000_000;
    let mut counts = BTreeMap::new();
    for &(_, _, g) in &result.per_response_gap {
        *counts.entry(g / w).or_insert(0) += 1;
    }
    Ok(GapHistogram {
        bucket_width_s,
        counts,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GapSummary {
    pub count: u64,
    pub mean_g_s: f64,
    pub count_above_1s: u64,
    pub max_g_s: f64,
}

pub fn summarize_gaps(result: &DetectionResult) -> GapSummary {
    let gaps: Vec<u64> = result.per_response_gap.iter().map(|g| g.2).collect();
    if gaps.is_empty() {
        return GapSummary::default();
    }
    let sum: u128 = gaps.iter().map(|&g| g as u128).sum();
    GapSummary {
        count: gaps.len() as u64,
        mean_g_s: sum as f64 / gaps.len() as f64 / 1e6,
        count_above_1s: gaps.iter().filter(|&&g| g > 1_000_000).count() as u64,
        max_g_s: *gaps.iter().max().expect("nonempty") as f64 / 1e6,
    }
}

/// Conflict records per producer of the missing tweet.
pub fn attribute_to_producers(result: &DetectionResult) -> BTreeMap<ProducerId, u64> {
    let mut out = BTreeMap::new();
    for r in &result.records {
        *out.entry(r.missing.producer_id).or_insert(0) += 1;
    }
    out
}

/// Conflict records per consumer that received the response.
pub fn attribute_to_consumers(result: &DetectionResult) -> BTreeMap<ConsumerId, u64> {
    let mut out = BTreeMap::new();
    for r in &result.records {
        *out.entry(r.consumer_id).or_insert(0) += 1;
    }
    out
}

/// Realized activity: tweets posted per producer over the whole run and
/// queries made per consumer inside the analysis window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Activity {
    pub tweets: BTreeMap<ProducerId, u64>,
    pub queries: BTreeMap<ConsumerId, u64>,
}

impl Activity {
    pub fn from_logs(
        tweets: &[TweetEvent],
        responses: &[TimelineResponse],
        totals: &DetectionTotals,
    ) -> Self {
        let mut a = Activity::default();
        for t in tweets {
            *a.tweets.entry(t.producer_id).or_insert(0) += 1;
        }
        let from = (totals.analyzed_from as usize).min(responses.len());
        for r in &responses[from..] {
            *a.queries.entry(r.consumer_id).or_insert(0) += 1;
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationStudy {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub spearman: Option<f64>,
    /// Only points plottable on log axes (both coordinates positive) kept.
    pub log_log: bool,
    pub degenerate: bool,
}

impl CorrelationStudy {
    pub fn new(
        name: &str,
        x_label: &str,
        y_label: &str,
        raw: Vec<(f64, f64)>,
        log_log: bool,
    ) -> Self {
        let points: Vec<(f64, f64)> = if log_log {
            raw.into_iter()
                .filter(|&(x, y)| x > 0.0 && y > 0.0)
                .collect()
        } else {
            raw
        };
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut distinct = xs.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let rho = if distinct.len() < 3 {
            None
        } else {
            spearman(&xs, &ys)
        };
        CorrelationStudy {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
            spearman: rho,
            log_log,
            degenerate: rho.is_none(),
        }
    }
}

/// The four producer and consumer studies, in a fixed order: follower
/// count, tweet count, followed count, query count.
pub fn correlation_studies(
    result: &DetectionResult,
    network: &FollowingNetwork,
    activity: &Activity,
    log_log: bool,
) -> Vec<CorrelationStudy> {
    let caused = attribute_to_producers(result);
    let encountered = attribute_to_consumers(result);
    let by_producer = |x: &dyn Fn(ProducerId) -> f64| -> Vec<(f64, f64)> {
        network
            .producers()
            .map(|p| (x(p), caused.get(&p).copied().unwrap_or(0) as f64))
            .collect()
    };
    let by_consumer = |x: &dyn Fn(ConsumerId) -> f64| -> Vec<(f64, f64)> {
        network
            .consumers()
            .map(|c| (x(c), encountered.get(&c).copied().unwrap_or(0) as f64))
            .collect()
    };
    let followers = |p| network.followers(p).map_or(0, <[_]>::len) as f64;
    let tweets = |p| activity.tweets.get(&p).copied().unwrap_or(0) as f64;
    let followed = |c| network.follows(c).map_or(0, <[_]>::len) as f64;
    let queries = |c| activity.queries.get(&c).copied().unwrap_or(0) as f64;
    vec![
        CorrelationStudy::new(
            "producer_followers",
            "followers",
            "conflicts_caused",
            by_producer(&followers),
            log_log,
        ),
        CorrelationStudy::new(
            "producer_tweets",
            "tweets",
            "conflicts_caused",
            by_producer(&tweets),
            log_log,
        ),
        CorrelationStudy::new(
            "consumer_followed",
            "producers_followed",
            "conflicts_encountered",
            by_consumer(&followed),
            log_log,
        ),
        CorrelationStudy::new(
            "consumer_queries",
            "queries",
            "conflicts_encountered",
            by_consumer(&queries),
            log_log,
        ),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub totals: DetectionTotals,
    pub inconsistency_rate: f64,
    pub gaps: GapSummary,
    pub histogram: GapHistogram,
    pub studies: Vec<CorrelationStudy>,
}

impl Report {
    pub fn build(
        result: &DetectionResult,
        network: &FollowingNetwork,
        activity: &Activity,
        bucket_width_s: u64,
    ) -> Result<Self> {
        Ok(Report {
            totals: result.totals,
            inconsistency_rate: inconsistency_rate(result)?,
            gaps: summarize_gaps(result),
            histogram: gap_histogram(result, bucket_width_s)?,
            studies: correlation_studies(result, network, activity, true),
        })
    }
}

#[derive(Serialize)]
struct TotalsFile<'a> {
    #[serde(flatten)]
    totals: &'a DetectionTotals,
    inconsistency_rate: f64,
    gaps: &'a GapSummary,
    spearman: BTreeMap<&'a str, Option<f64>>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"))
}

/// Writes `totals.json`, `gap_histogram.csv`, one `study_<name>.csv` per
/// study and `summary.txt` into `out_dir`.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let totals = TotalsFile {
        totals: &report.totals,
        inconsistency_rate: report.inconsistency_rate,
        gaps: &report.gaps,
        spearman: report
            .studies
            .iter()
            .map(|s| (s.name.as_str(), s.spearman))
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&totals).map_err(std::io::Error::from)?;
    json.push('\n');
    fs::write(out_dir.join("totals.json"), json)?;

    let mut csv = String::from("bucket_start_s,count\n");
    let w = report.histogram.bucket_width_s;
    for (k, c) in &report.histogram.counts {
        writeln!(csv, "{},{c}", k * w).expect("string write");
    }
    fs::write(out_dir.join("gap_histogram.csv"), csv)?;

    for s in &report.studies {
        let mut csv = String::from("x,y\n");
        for (x, y) in &s.points {
            writeln!(csv, "{x},{y}").expect("string write");
        }
        fs::write(out_dir.join(format!("study_{}.csv", s.name)), csv)?;
    }

    let t = &report.totals;
    let g = &report.gaps;
    let mut txt = String::new();
    writeln!(
        txt,
        "responses analyzed:     {} of {}",
        t.responses_analyzed, t.responses_total
    )
    .unwrap();
    writeln!(txt, "conflicting responses:  {}", t.conflicting_responses).unwrap();
    writeln!(
        txt,
        "inconsistency rate:     {:.4}%",
        report.inconsistency_rate * 100.0
    )
    .unwrap();
    writeln!(
        txt,
        "conflict records:       {} ({} gap, {} newer-earlier)",
        t.conflict_records, t.gap_witnessed, t.newer_witnessed_earlier
    )
    .unwrap();
    writeln!(txt, "mean G:                 {:.3} s", g.mean_g_s).unwrap();
    writeln!(txt, "max G:                  {:.3} s", g.max_g_s).unwrap();
    writeln!(
        txt,
        "G above 1 s:            {} of {}",
        g.count_above_1s, g.count
    )
    .unwrap();
    writeln!(
        txt,
        "nonempty {w} s buckets:  {}",
        report.histogram.nonempty_buckets()
    )
    .unwrap();
    for s in &report.studies {
        writeln!(
            txt,
            "spearman {:<20} {} ({} points{})",
            s.name,
            fmt_opt(s.spearman),
            s.points.len(),
            if s.degenerate { ", degenerate" } else { "" }
        )
        .unwrap();
    }
    fs::write(out_dir.join("summary.txt"), txt)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{ConflictRecord, ConflictType};
    use crate::model::TimelineEntry;
    use crate::sim::VirtualTime;

    fn result_with_gaps(gaps_s: &[u64], analyzed: u64) -> DetectionResult {
        let per_response_gap: Vec<_> = gaps_s
            .iter()
            .enumerate()
            .map(|(i, &g)| (i as u64, ConsumerId(1), g * 1_000_000))
            .collect();
        DetectionResult {
            records: vec![],
            totals: DetectionTotals {
                responses_analyzed: analyzed,
                conflicting_responses: per_response_gap.len() as u64,
                ..DetectionTotals::default()
            },
            per_response_gap,
        }
    }

    fn record(producer: u32, consumer: u32) -> ConflictRecord {
        ConflictRecord {
            response_id: 0,
            consumer_id: ConsumerId(consumer),
            missing: TimelineEntry {
                producer_id: ProducerId(producer),
                t: VirtualTime::ZERO,
                seq: 0,
            },
            conflict_type: ConflictType::GapWitnessed,
            witness_response_id: 1,
            gap_us: 1,
        }
    }

    #[test]
    fn rate_arithmetic() {
        assert_eq!(inconsistency_rate(&result_with_gaps(&[], 10)).unwrap(), 0.0);
        assert_eq!(
            inconsistency_rate(&result_with_gaps(&[1, 2, 3], 10)).unwrap(),
            0.3
        );
        assert!(matches!(
            inconsistency_rate(&result_with_gaps(&[], 0)),
            Err(Error::EmptyAnalysis)
        ));
        let r: f64 = 75_181.0 / 1_199_042.0;
        assert!((r - 0.0627).abs() < 5e-5);
    }

    #[test]
    fn histogram_buckets() {
        let h = gap_histogram(&result_with_gaps(&[50, 150, 150], 3), 100).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(0, 1), (1, 2)]));
        let h = gap_histogram(&result_with_gaps(&[0, 10, 99], 3), 100).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(0, 3)]));
        assert!(gap_histogram(&result_with_gaps(&[1], 1), 0).is_err());
        // upper edge is exclusive
        let h = gap_histogram(&result_with_gaps(&[100], 1), 100).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn decaying_tail_shape() {
        let h = |pairs: &[(u64, u64)]| GapHistogram {
            bucket_width_s: 100,
            counts: pairs.iter().copied().collect(),
        };
        // shaped like the reference figure: 9731, 7693, ..., 79 at 40, 7 at 60
        assert!(h(&[
            (0, 9731),
            (1, 7693),
            (2, 3000),
            (3, 2500),
            (7, 400),
            (40, 79),
            (60, 7)
        ])
        .has_decaying_tail());
        // a rise into the mode is allowed, a rise after it is not
        assert!(h(&[(0, 10), (1, 50), (2, 20)]).has_decaying_tail());
        assert!(!h(&[(0, 50), (1, 10), (2, 5), (3, 40)]).has_decaying_tail());
        assert!(!h(&[(0, 50), (1, 20), (4, 5), (5, 5), (6, 45), (7, 45)]).has_decaying_tail());
        assert!(!h(&[]).has_decaying_tail());
        assert_eq!(h(&[(0, 3), (2, 9), (5, 9)]).mode_bucket(), Some(2));
    }

    #[test]
    fn gap_summary() {
        assert_eq!(
            summarize_gaps(&result_with_gaps(&[], 1)),
            GapSummary::default()
        );
        let s = summarize_gaps(&result_with_gaps(&[823], 1));
        assert_eq!(s.mean_g_s, 823.0);
        assert_eq!(s.count_above_1s, 1);
        let mut r = result_with_gaps(&[], 1);
        r.per_response_gap = vec![(0, ConsumerId(1), 1_000_000), (1, ConsumerId(1), 3_000_000)];
        let s = summarize_gaps(&r);
        assert_eq!(
            (s.count, s.count_above_1s, s.mean_g_s, s.max_g_s),
            (2, 1, 2.0, 3.0)
        );
    }

    #[test]
    fn attribution_counts_records() {
        let mut r = result_with_gaps(&[], 1);
        assert!(attribute_to_producers(&r).is_empty());
        r.records = vec![record(4, 1), record(4, 2), record(4, 2)];
        assert_eq!(
            attribute_to_producers(&r),
            BTreeMap::from([(ProducerId(4), 3)])
        );
        assert_eq!(
            attribute_to_consumers(&r),
            BTreeMap::from([(ConsumerId(1), 1), (ConsumerId(2), 2)])
        );
    }

    #[test]
    fn study_edge_cases() {
        let flat = CorrelationStudy::new(
            "s",
            "x",
            "y",
            vec![(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
            false,
        );
        assert!(flat.degenerate);
        assert_eq!(flat.spearman, None);
        let mono = CorrelationStudy::new(
            "s",
            "x",
            "y",
            (1..10).map(|i| (i as f64, (i * i) as f64)).collect(),
            true,
        );
        assert_eq!(mono.spearman, Some(1.0));
        let two = CorrelationStudy::new(
            "s",
            "x",
            "y",
            vec![(1.0, 1.0), (2.0, 2.0), (2.0, 3.0)],
            false,
        );
        assert!(two.degenerate);
        let filtered = CorrelationStudy::new(
            "s",
            "x",
            "y",
            vec![(1.0, 0.0), (0.0, 1.0), (2.0, 2.0)],
            true,
        );
        assert_eq!(filtered.points, vec![(2.0, 2.0)]);
    }

    #[test]
    fn report_files_are_deterministic() {
        let net = FollowingNetwork::from_follows(
            2,
            vec![vec![ProducerId(1)], vec![ProducerId(1), ProducerId(2)]],
        )
        .unwrap();
        let mut r = result_with_gaps(&[50, 150, 150], 10);
        r.records = vec![record(1, 1), record(1, 2), record(2, 2)];
        let rep = Report::build(&r, &net, &Activity::default(), 100).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_report(&rep, a.path()).unwrap();
        emit_report(&rep, b.path()).unwrap();
        for f in [
            "totals.json",
            "gap_histogram.csv",
            "summary.txt",
            "study_producer_followers.csv",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap()
            );
        }
        let hist = fs::read_to_string(a.path().join("gap_histogram.csv")).unwrap();
        assert_eq!(hist, "bucket_start_s,count\n0,1\n100,2\n");
        let rows: u64 = hist
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(rows, r.totals.conflicting_responses);
    }

    #[test]
    fn empty_report_has_headers_only() {
        let net = FollowingNetwork::from_follows(1, vec![vec![ProducerId(1)]]).unwrap();
        let rep =
            Report::build(&result_with_gaps(&[], 5), &net, &Activity::default(), 100).unwrap();
        let d = tempfile::tempdir().unwrap();
        emit_report(&rep, d.path()).unwrap();
        assert_eq!(
            fs::read_to_string(d.path().join("gap_histogram.csv")).unwrap(),
            "bucket_start_s,count\n"
        );
        assert_eq!(
            fs::read_to_string(d.path().join("study_consumer_queries.csv")).unwrap(),
            "x,y\n"
        );
    }
}
