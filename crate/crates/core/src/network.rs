//! Synthetic following network and workload rates.
//!
//! All four marginals use the rank-frequency form of Zipf's law: the value
//! held by the member of rank `r` is proportional to `r^-s`, with the rank
//! table sized to the population and the values rescaled to the target mean.
//! Ranks are assigned to members by independent random permutations, so
//! degree and rate are uncorrelated.
//!
//! Out-degrees (producers per consumer) follow that form directly. In-degrees
//! emerge from picking each consumer's producers with probability
//! proportional to a Zipf popularity weight.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerId, ProducerId};
use crate::stats;

/// A target mean and Zipf exponent for one distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfTarget {
    pub mean: f64,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZipfParams {
    pub consumers_per_producer: ZipfTarget,
    pub producers_per_consumer: ZipfTarget,
    /// Tweets per hour.
    pub producer_rate: ZipfTarget,
    /// Timeline queries per hour.
    pub consumer_rate: ZipfTarget,
}

impl Default for ZipfParams {
    fn default() -> Self {
        ZipfParams {
            consumers_per_producer: ZipfTarget {
                mean: 13.38,
                s: 0.39,
            },
            producers_per_consumer: ZipfTarget {
                mean: 4.63,
                s: 0.62,
            },
            producer_rate: ZipfTarget { mean: 1.0, s: 0.57 },
            consumer_rate: ZipfTarget { mean: 5.8, s: 0.62 },
        }
    }
}

/// Cumulative table for `P(r) ∝ r^-s`, `r` in `1..=rank_count`.
#[derive(Clone, Debug)]
pub struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(rank_count: usize, s: f64) -> Result<Self> {
        if rank_count < 1 {
            return Err(Error::InvalidParameter(
                "zipf rank_count must be >= 1".into(),
            ));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "zipf exponent {s} must be >= 0"
            )));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=rank_count)
            .map(|r| {
                acc += (r as f64).powf(-s);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfTable { cdf })
    }

    pub fn rank_count(&self) -> usize {
        self.cdf.len()
    }

    /// Draws a 1-based rank.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .partition_point(|c| *c <= u)
            .min(self.cdf.len() - 1)
            + 1
    }
}

/// One-shot Zipf draw. Builds the table on every call; use [`ZipfTable`] for
/// repeated sampling.
pub fn zipf_sample<R: Rng + ?Sized>(rank_count: usize, s: f64, rng: &mut R) -> Result<usize> {
    Ok(ZipfTable::new(rank_count, s)?.sample(rng))
}

/// Rank-frequency values `mean * r^-s / avg(r^-s)` for ranks `1..=n`.
pub fn rank_frequency_values(n: usize, s: f64, mean: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let avg = stats::mean(&raw);
    raw.into_iter().map(|v| mean * v / avg).collect()
}

/// Integer rank-frequency degrees in `[1, cap]` summing to `round(mean * n)`
/// (largest-remainder rounding).
fn integer_degrees(n: usize, s: f64, mean: f64, cap: usize) -> Result<Vec<usize>> {
    let target = (mean * n as f64).round() as usize;
    if target < n || target > n * cap {
        return Err(Error::Infeasible(format!(
            "{target} edges cannot be spread over {n} members with degrees in [1, {cap}]"
        )));
    }
    let raw = rank_frequency_values(n, s, mean);
    let mut deg: Vec<usize> = raw
        .iter()
        .map(|v| (v.floor() as usize).clamp(1, cap))
        .collect();
    let mut by_frac: Vec<usize> = (0..n).collect();
    by_frac.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let mut total: usize = deg.iter().sum();
    while total < target {
        for &i in &by_frac {
            if total == target {
                break;
            }
            if deg[i] < cap {
                deg[i] += 1;
                total += 1;
            }
        }
    }
    while total > target {
        for &i in by_frac.iter().rev() {
            if total == target {
                break;
            }
            if deg[i] > 1 {
                deg[i] -= 1;
                total -= 1;
            }
        }
    }
    Ok(deg)
}

/// Static consumer → producer follow relation with its inverse. Ids are
/// 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FollowingNetwork {
    follows: Vec<Vec<ProducerId>>,
    followers: Vec<Vec<ConsumerId>>,
}

impl FollowingNetwork {
    /// Builds from per-consumer producer lists (`follows[i]` belongs to
    /// consumer `i + 1`). Checks every invariant.
    pub fn from_follows(n_producers: usize, follows: Vec<Vec<ProducerId>>) -> Result<Self> {
        if n_producers < 1 || follows.is_empty() {
            return Err(Error::InvalidParameter(
                "network needs at least one producer and one consumer".into(),
            ));
        }
        let mut followers = vec![Vec::new(); n_producers];
        let mut sorted = Vec::with_capacity(follows.len());
        for (i, mut ps) in follows.into_iter().enumerate() {
            let c = ConsumerId(i as u32 + 1);
            ps.sort_unstable();
            let before = ps.len();
            ps.dedup();
            if ps.len() != before {
                return Err(Error::Integrity(format!(
                    "consumer {c} has duplicate edges"
                )));
            }
            if ps.is_empty() {
                return Err(Error::Integrity(format!("consumer {c} follows nobody")));
            }
            for p in &ps {
                if p.0 < 1 || p.0 as usize > n_producers {
                    return Err(Error::UnknownProducer(p.0));
                }
                followers[p.0 as usize - 1].push(c);
            }
            sorted.push(ps);
        }
        Ok(FollowingNetwork {
            follows: sorted,
            followers,
        })
    }

    pub fn n_producers(&self) -> usize {
        self.followers.len()
    }

    pub fn n_consumers(&self) -> usize {
        self.follows.len()
    }

    pub fn producers(&self) -> impl Iterator<Item = ProducerId> {
        (1..=self.n_producers() as u32).map(ProducerId)
    }

    pub fn consumers(&self) -> impl Iterator<Item = ConsumerId> {
        (1..=self.n_consumers() as u32).map(ConsumerId)
    }

    pub fn has_producer(&self, p: ProducerId) -> bool {
        p.0 >= 1 && p.0 as usize <= self.n_producers()
    }

    pub fn has_consumer(&self, c: ConsumerId) -> bool {
        c.0 >= 1 && c.0 as usize <= self.n_consumers()
    }

    /// Sorted producers followed by `c`.
    pub fn follows(&self, c: ConsumerId) -> Result<&[ProducerId]> {
        self.follows
            .get((c.0 as usize).wrapping_sub(1))
            .map(Vec::as_slice)
            .ok_or(Error::UnknownConsumer(c.0))
    }

    /// Sorted consumers following `p`.
    pub fn followers(&self, p: ProducerId) -> Result<&[ConsumerId]> {
        self.followers
            .get((p.0 as usize).wrapping_sub(1))
            .map(Vec::as_slice)
            .ok_or(Error::UnknownProducer(p.0))
    }

    pub fn is_following(&self, c: ConsumerId, p: ProducerId) -> bool {
        self.follows(c).is_ok_and(|ps| ps.binary_search(&p).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.follows.iter().map(Vec::len).sum()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.follows.iter().map(Vec::len).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.followers.iter().map(Vec::len).collect()
    }
}

/// Generates the following network.
///
/// Each consumer receives an out-degree from the rank-frequency table, then
/// picks that many distinct producers with probability proportional to a
/// Zipf popularity weight.
pub fn build_network<R: Rng + ?Sized>(
    n_producers: usize,
    n_consumers: usize,
    params: &ZipfParams,
    rng: &mut R,
) -> Result<FollowingNetwork> {
    if n_producers < 1 || n_consumers < 1 {
        return Err(Error::Infeasible(format!(
            "need at least one producer and one consumer (got {n_producers} producers, {n_consumers} consumers)"
        )));
    }
    let out = params.producers_per_consumer;
    let inn = params.consumers_per_producer;
    let out_edges = out.mean * n_consumers as f64;
    let in_edges = inn.mean * n_producers as f64;
    if (out_edges - in_edges).abs() > (0.01 * out_edges).max(1.0) {
        return Err(Error::Infeasible(format!(
            "mean out-degree {} x {} consumers = {:.1} edges, but mean in-degree {} x {} producers = {:.1}",
            out.mean, n_consumers, out_edges, inn.mean, n_producers, in_edges
        )));
    }
    let mut degrees = integer_degrees(n_consumers, out.s, out.mean, n_producers)?;
    degrees.shuffle(rng);

    // popularity rank r belongs to producer by_rank[r - 1]
    let mut by_rank: Vec<u32> = (1..=n_producers as u32).collect();
    by_rank.shuffle(rng);
    let popularity = ZipfTable::new(n_producers, inn.s)?;
    let weights: Vec<f64> = (1..=n_producers).map(|r| (r as f64).powf(-inn.s)).collect();

    let mut follows = Vec::with_capacity(n_consumers);
    let mut picked = HashSet::new();
    for &d in &degrees {
        let mut ps: Vec<ProducerId> = if 2 * d <= n_producers {
            picked.clear();
            while picked.len() < d {
                picked.insert(popularity.sample(rng));
            }
            picked.iter().map(|&r| ProducerId(by_rank[r - 1])).collect()
        } else {
            // Dense case: weighted sampling without replacement via
            // exponential keys (Efraimidis-Spirakis).
            let mut keyed: Vec<(f64, usize)> = weights
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    (-u.ln() / w, i)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed[..d]
                .iter()
                .map(|&(_, i)| ProducerId(by_rank[i]))
                .collect()
        };
        ps.sort_unstable();
        follows.push(ps);
    }
    FollowingNetwork::from_follows(n_producers, follows)
}

/// Per-producer and per-consumer rates, independent of degree.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadProfile {
    /// Tweets per hour, indexed by producer id - 1.
    pub producer_rate: Vec<f64>,
    /// Queries per hour, indexed by consumer id - 1.
    pub consumer_rate: Vec<f64>,
    pub zipf_params: ZipfParams,
    pub scale: f64,
}

impl WorkloadProfile {
    pub fn producer_rate(&self, p: ProducerId) -> f64 {
        self.producer_rate[p.0 as usize - 1]
    }

    pub fn consumer_rate(&self, c: ConsumerId) -> f64 {
        self.consumer_rate[c.0 as usize - 1]
    }
}

fn zipf_rates<R: Rng + ?Sized>(n: usize, target: ZipfTarget, rng: &mut R) -> Vec<f64> {
    let mut v = rank_frequency_values(n, target.s, target.mean);
    v.shuffle(rng);
    // Exact mean after the shuffle's reordering of the float sum.
    let realized = stats::mean(&v);
    v.iter_mut().for_each(|x| *x *= target.mean / realized);
    v
}

pub fn build_profile<R: Rng + ?Sized>(
    network: &FollowingNetwork,
    params: &ZipfParams,
    scale: f64,
    rng: &mut R,
) -> Result<WorkloadProfile> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "scale {scale} must lie in (0, 1]"
        )));
    }
    let scaled = |t: ZipfTarget| ZipfTarget {
        mean: t.mean * scale,
        s: t.s,
    };
    let producer_rate = zipf_rates(network.n_producers(), scaled(params.producer_rate), rng);
    let consumer_rate = zipf_rates(network.n_consumers(), scaled(params.consumer_rate), rng);
    Ok(WorkloadProfile {
        producer_rate,
        consumer_rate,
        zipf_params: *params,
        scale,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionCheck {
    pub name: String,
    pub target_mean: f64,
    pub realized_mean: f64,
    pub target_s: f64,
    pub fitted_s: Option<f64>,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub checks: Vec<DistributionCheck>,
    /// Spearman between producer follower count and tweet rate.
    pub degree_rate_spearman: Option<f64>,
    pub passed: bool,
}

/// Compares realized means with `targets` (rates scaled by `profile.scale`)
/// and fits a Zipf exponent to each distribution. Pass/fail is on the means.
pub fn validate_profile(
    network: &FollowingNetwork,
    profile: &WorkloadProfile,
    targets: &ZipfParams,
    tolerance: f64,
) -> ValidationReport {
    let to_f64 = |v: Vec<usize>| v.into_iter().map(|d| d as f64).collect::<Vec<_>>();
    let in_deg = to_f64(network.in_degrees());
    let out_deg = to_f64(network.out_degrees());
    let rows: [(&str, ZipfTarget, f64, &[f64]); 4] = [
        (
            "consumers_per_producer",
            targets.consumers_per_producer,
            1.0,
            &in_deg,
        ),
        (
            "producers_per_consumer",
            targets.producers_per_consumer,
            1.0,
            &out_deg,
        ),
        (
            "producer_rate",
            targets.producer_rate,
            profile.scale,
            &profile.producer_rate,
        ),
        (
            "consumer_rate",
            targets.consumer_rate,
            profile.scale,
            &profile.consumer_rate,
        ),
    ];
    let checks: Vec<DistributionCheck> = rows
        .iter()
        .map(|(name, target, scale, values)| {
            let target_mean = target.mean * scale;
            let realized_mean = stats::mean(values);
            let relative_error = (realized_mean - target_mean).abs() / target_mean;
            DistributionCheck {
                name: name.to_string(),
                target_mean,
                realized_mean,
                target_s: target.s,
                fitted_s: stats::fit_zipf_exponent(values),
                relative_error,
                pass: relative_error <= tolerance,
            }
        })
        .collect();
    let degree_rate_spearman = stats::spearman(&in_deg, &profile.producer_rate);
    let passed = checks.iter().all(|c| c.pass);
    ValidationReport {
        tolerance,
        checks,
        degree_rate_spearman,
        passed,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NetworkLine {
    Follows { c: u32, p: Vec<u32> },
    ProducerRate { producer: u32, rate_per_hour: f64 },
    ConsumerRate { consumer: u32, rate_per_hour: f64 },
}

/// Writes one `{"c": .., "p": [..]}` line per consumer, then producer rate
/// lines, then consumer rate lines.
pub fn write_network_file<W: Write>(
    mut w: W,
    network: &FollowingNetwork,
    profile: &WorkloadProfile,
) -> Result<()> {
    let line = |w: &mut W, rec: &NetworkLine| -> Result<()> {
        serde_json::to_writer(&mut *w, rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    for c in network.consumers() {
        let p = network.follows(c)?.iter().map(|p| p.0).collect();
        line(&mut w, &NetworkLine::Follows { c: c.0, p })?;
    }
    for (i, r) in profile.producer_rate.iter().enumerate() {
        line(
            &mut w,
            &NetworkLine::ProducerRate {
                producer: i as u32 + 1,
                rate_per_hour: *r,
            },
        )?;
    }
    for (i, r) in profile.consumer_rate.iter().enumerate() {
        line(
            &mut w,
            &NetworkLine::ConsumerRate {
                consumer: i as u32 + 1,
                rate_per_hour: *r,
            },
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_network_file`]. The Zipf targets and scale
/// are not stored in the file and are supplied by the caller.
pub fn read_network_file<R: BufRead>(
    r: R,
    params: &ZipfParams,
    scale: f64,
) -> Result<(FollowingNetwork, WorkloadProfile)> {
    let mut follows = Vec::new();
    let mut producer_rate = Vec::new();
    let mut consumer_rate = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NetworkLine = serde_json::from_str(&line).map_err(|source| Error::Parse {
            line: i + 1,
            source,
        })?;
        let expect = |got: u32, want: usize| {
            if got as usize != want {
                Err(Error::Integrity(format!(
                    "line {}: expected id {want}, found {got}",
                    i + 1
                )))
            } else {
                Ok(())
            }
        };
        match rec {
            NetworkLine::Follows { c, p } => {
                expect(c, follows.len() + 1)?;
                follows.push(p.into_iter().map(ProducerId).collect());
            }
            NetworkLine::ProducerRate {
                producer,
                rate_per_hour,
            } => {
                expect(producer, producer_rate.len() + 1)?;
                producer_rate.push(rate_per_hour);
            }
            NetworkLine::ConsumerRate {
                consumer,
                rate_per_hour,
            } => {
                expect(consumer, consumer_rate.len() + 1)?;
                consumer_rate.push(rate_per_hour);
            }
        }
    }
    let network = FollowingNetwork::from_follows(producer_rate.len(), follows)?;
    if consumer_rate.len() != network.n_consumers() {
        return Err(Error::Integrity(format!(
            "{} consumer rates for {} consumers",
            consumer_rate.len(),
            network.n_consumers()
        )));
    }
    if producer_rate
        .iter()
        .chain(&consumer_rate)
        .any(|r| r.is_nan() || *r <= 0.0)
    {
        return Err(Error::Integrity("rates must be strictly positive".into()));
    }
    let profile = WorkloadProfile {
        producer_rate,
        consumer_rate,
        zipf_params: *params,
        scale,
    };
    Ok((network, profile))
}
