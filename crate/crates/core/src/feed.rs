//! Feed-following application: a single timestamping frontend, asynchronous
//! per-follower fan-out into materialized timelines, and timeline serving.
//!
//! Each follower update is a read-modify-write of the follower's timeline
//! key. The worker fetches the authoritative timeline when the update is
//! dispatched and issues the conditional write one service time later; a
//! failed write is retried after a constant backoff. Timeline queries read a
//! random replica with no caching.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerId, ProducerId, TimelineResponse, TimelineValue, TweetEvent};
use crate::network::{FollowingNetwork, WorkloadProfile};
use crate::sim::{
    DelayDistribution, EventKind, RngStreams, Scheduler, SchedulerStats, StreamRng, VirtualTime,
};
use crate::store::{KvStore, PreconditionFailed, StoreConfig, StoreStats, WriteAck};

pub const DEFAULT_N_TIMELINE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FanoutConfig {
    /// Time from fetching a follower's timeline to its conditional write.
    pub service_time: DelayDistribution,
    /// Multiplier applied to every service-time draw.
    pub delay_scale: f64,
    /// Maximum in-flight follower updates per tweet; `None` is unlimited.
    pub concurrency_cap: Option<usize>,
    pub retry_backoff_ms: f64,
}

impl Default for FanoutConfig {
    fn default() -> Self {
        FanoutConfig {
            service_time: DelayDistribution::Exponential { mean_ms: 20.0 },
            delay_scale: 1.0,
            concurrency_cap: None,
            retry_backoff_ms: 10.0,
        }
    }
}

impl FanoutConfig {
    pub fn validate(&self) -> Result<()> {
        self.service_time.validate()?;
        if !(self.delay_scale >= 0.0 && self.delay_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fan-out delay_scale {} must be >= 0",
                self.delay_scale
            )));
        }
        if self.concurrency_cap == Some(0) {
            return Err(Error::InvalidParameter(
                "fan-out concurrency_cap must be >= 1".into(),
            ));
        }
        if self.retry_backoff_ms.is_nan() || self.retry_backoff_ms <= 0.0 {
            return Err(Error::InvalidParameter(
                "retry_backoff_ms must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Zero service time: every follower update completes inside the post.
    pub fn is_synchronous(&self) -> bool {
        self.service_time.is_zero() || self.delay_scale == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedConfig {
    pub n_timeline: usize,
    pub fanout: FanoutConfig,
}

impl Default for FeedConfig {
    fn default() -> Self {
        FeedConfig {
            n_timeline: DEFAULT_N_TIMELINE,
            fanout: FanoutConfig::default(),
        }
    }
}

/// Per-tweet simulator trace, used to bound inconsistency gaps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetTrace {
    pub seq: u64,
    pub producer_id: ProducerId,
    pub followers: usize,
    pub updates_committed: usize,
    /// Latest follower-timeline commit, relative to the tweet timestamp.
    pub fanout_completion_us: u64,
    /// Largest replication lag sampled for this tweet's timeline writes.
    pub max_lag_us: u64,
    pub retries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub duration_us: u64,
    pub tweets: u64,
    pub responses: u64,
    pub timeline_writes: u64,
    pub retries: u64,
    pub events_by_kind: BTreeMap<String, u64>,
    pub scheduler: SchedulerStats,
    pub store: StoreStats,
}

impl TraceStats {
    /// (timeline writes, reads) per virtual second.
    pub fn throughput(&self) -> (f64, f64) {
        let secs = self.duration_us as f64 / 1e6;
        if secs == 0.0 {
            return (0.0, 0.0);
        }
        (
            self.timeline_writes as f64 / secs,
            self.responses as f64 / secs,
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub tweet_log: Vec<TweetEvent>,
    pub response_log: Vec<TimelineResponse>,
    pub trace: Vec<TweetTrace>,
    pub stats: TraceStats,
}

#[derive(Debug)]
enum Event {
    TweetArrival(ProducerId),
    TimelineQuery(ConsumerId),
    FanoutStep(u64),
    RetryWrite(u64),
    PropagationArrival {
        replica: usize,
        consumer: ConsumerId,
        version: u64,
    },
}

impl Event {
    fn kind(&self) -> EventKind {
        match self {
            Event::TweetArrival(_) => EventKind::TweetArrival,
            Event::TimelineQuery(_) => EventKind::TimelineQuery,
            Event::FanoutStep(_) => EventKind::FanoutStep,
            Event::RetryWrite(_) => EventKind::RetryWrite,
            Event::PropagationArrival { .. } => EventKind::PropagationArrival,
        }
    }
}

#[derive(Debug)]
struct UpdateTask {
    consumer: ConsumerId,
    tweet: usize,
    expected: Option<TimelineValue>,
}

#[derive(Debug)]
struct FanoutJob {
    waiting: VecDeque<ConsumerId>,
}

/// The application state driven by the event loop.
pub struct FeedApp<'a> {
    network: &'a FollowingNetwork,
    config: FeedConfig,
    store: KvStore<ConsumerId, TimelineValue>,
    tweets: Vec<TweetEvent>,
    trace: Vec<TweetTrace>,
    responses: Vec<TimelineResponse>,
    jobs: HashMap<usize, FanoutJob>,
    tasks: HashMap<u64, UpdateTask>,
    next_task: u64,
    order_rng: StreamRng,
    service_rng: StreamRng,
    timeline_writes: u64,
    retries: u64,
}

type Sched = Scheduler<Event>;

impl<'a> FeedApp<'a> {
    pub fn new(
        network: &'a FollowingNetwork,
        store_config: StoreConfig,
        config: FeedConfig,
        streams: &RngStreams,
    ) -> Result<Self> {
        config.fanout.validate()?;
        if config.n_timeline < 1 {
            return Err(Error::InvalidParameter("n_timeline must be >= 1".into()));
        }
        Ok(FeedApp {
            network,
            store: KvStore::new(store_config, streams)?,
            config,
            tweets: Vec::new(),
            trace: Vec::new(),
            responses: Vec::new(),
            jobs: HashMap::new(),
            tasks: HashMap::new(),
            next_task: 0,
            order_rng: streams.stream("fanout.order"),
            service_rng: streams.stream("fanout.service"),
            timeline_writes: 0,
            retries: 0,
        })
    }

    pub fn tweets(&self) -> &[TweetEvent] {
        &self.tweets
    }

    pub fn responses(&self) -> &[TimelineResponse] {
        &self.responses
    }

    pub fn trace(&self) -> &[TweetTrace] {
        &self.trace
    }

    pub fn store(&self) -> &KvStore<ConsumerId, TimelineValue> {
        &self.store
    }

    /// Timestamps a tweet at `now`, logs it and starts its fan-out. The
    /// timestamp is final regardless of later write retries.
    fn post_tweet(&mut self, sched: &mut Sched, producer: ProducerId) -> Result<TweetEvent> {
        let followers = self.network.followers(producer)?;
        let tweet = TweetEvent {
            producer_id: producer,
            t: sched.now(),
            seq: self.tweets.len() as u64,
        };
        let idx = self.tweets.len();
        self.tweets.push(tweet);
        self.trace.push(TweetTrace {
            seq: tweet.seq,
            producer_id: producer,
            followers: followers.len(),
            updates_committed: 0,
            fanout_completion_us: 0,
            max_lag_us: 0,
            retries: 0,
        });
        if followers.is_empty() {
            return Ok(tweet);
        }
        let mut order = followers.to_vec();
        order.shuffle(&mut self.order_rng);
        let cap = self.config.fanout.concurrency_cap.unwrap_or(usize::MAX);
        let mut waiting: VecDeque<ConsumerId> = order.into();
        let first: Vec<ConsumerId> = waiting.drain(..cap.min(waiting.len())).collect();
        if !waiting.is_empty() {
            self.jobs.insert(idx, FanoutJob { waiting });
        }
        for c in first {
            self.dispatch(sched, c, idx)?;
        }
        Ok(tweet)
    }

    /// Starts one follower update: fetch now, write after a service time.
    fn dispatch(&mut self, sched: &mut Sched, consumer: ConsumerId, tweet: usize) -> Result<()> {
        let mut next = Some(consumer);
        while let Some(c) = next.take() {
            let expected = self.store.authoritative_read(&c).cloned();
            let task = UpdateTask {
                consumer: c,
                tweet,
                expected,
            };
            if self.config.fanout.is_synchronous() {
                self.attempt(sched, task)?;
                next = self.next_waiting(tweet);
            } else {
                let fanout = &self.config.fanout;
                let delay = fanout.service_time.sample_micros(&mut self.service_rng) as f64
                    * fanout.delay_scale;
                let id = self.next_task;
                self.next_task += 1;
                self.tasks.insert(id, task);
                sched.schedule_in(delay.round() as u64, Event::FanoutStep(id));
            }
        }
        Ok(())
    }

    fn next_waiting(&mut self, tweet: usize) -> Option<ConsumerId> {
        let job = self.jobs.get_mut(&tweet)?;
        let c = job.waiting.pop_front();
        if job.waiting.is_empty() {
            self.jobs.remove(&tweet);
        }
        c
    }

    /// One conditional write of a follower update. Returns whether it
    /// committed; on failure a retry is scheduled.
    fn attempt(&mut self, sched: &mut Sched, task: UpdateTask) -> Result<bool> {
        let entry = self.tweets[task.tweet].entry();
        let base = task.expected.clone().unwrap_or_default();
        let new_value = base.with_inserted(entry, self.config.n_timeline);
        match self.store.conditional_write(
            sched.now(),
            task.consumer,
            task.expected.as_ref(),
            new_value,
        ) {
            Ok(ack) => {
                self.committed(sched, task.tweet, &ack)?;
                Ok(true)
            }
            Err(PreconditionFailed { .. }) => {
                self.retries += 1;
                self.trace[task.tweet].retries += 1;
                let id = self.next_task;
                self.next_task += 1;
                self.tasks.insert(id, task);
                let backoff = (self.config.fanout.retry_backoff_ms * 1_000.0).round() as u64;
                sched.schedule_in(backoff, Event::RetryWrite(id));
                Ok(false)
            }
        }
    }

    fn committed(
        &mut self,
        sched: &mut Sched,
        tweet: usize,
        ack: &WriteAck<ConsumerId>,
    ) -> Result<()> {
        self.timeline_writes += 1;
        let tr = &mut self.trace[tweet];
        tr.updates_committed += 1;
        tr.fanout_completion_us = tr
            .fanout_completion_us
            .max(ack.commit_time - self.tweets[tweet].t);
        tr.max_lag_us = tr.max_lag_us.max(ack.max_lag_micros());
        for p in &ack.propagations {
            sched.schedule(
                p.arrive_at,
                Event::PropagationArrival {
                    replica: p.replica,
                    consumer: p.key,
                    version: p.version,
                },
            )?;
        }
        Ok(())
    }

    /// Serves a timeline query from a random replica.
    fn query_timeline(
        &mut self,
        now: VirtualTime,
        consumer: ConsumerId,
    ) -> Result<&TimelineResponse> {
        if !self.network.has_consumer(consumer) {
            return Err(Error::UnknownConsumer(consumer.0));
        }
        let read = self.store.read(&consumer);
        self.responses.push(TimelineResponse {
            response_id: self.responses.len() as u64,
            consumer_id: consumer,
            served_at: now,
            entries: read.value.map(|v| v.entries().to_vec()).unwrap_or_default(),
            replica_served: Some(read.replica),
        });
        Ok(self.responses.last().expect("just pushed"))
    }

    fn handle(&mut self, sched: &mut Sched, event: Event) -> Result<()> {
        match event {
            Event::TweetArrival(p) => {
                self.post_tweet(sched, p)?;
            }
            Event::TimelineQuery(c) => {
                self.query_timeline(sched.now(), c)?;
            }
            Event::FanoutStep(id) => {
                let task = self.tasks.remove(&id).expect("fan-out task exists");
                let tweet = task.tweet;
                if self.attempt(sched, task)? {
                    if let Some(c) = self.next_waiting(tweet) {
                        self.dispatch(sched, c, tweet)?;
                    }
                }
            }
            Event::RetryWrite(id) => {
                let mut task = self.tasks.remove(&id).expect("retry task exists");
                let tweet = task.tweet;
                task.expected = self.store.authoritative_read(&task.consumer).cloned();
                if self.attempt(sched, task)? {
                    if let Some(c) = self.next_waiting(tweet) {
                        self.dispatch(sched, c, tweet)?;
                    }
                }
            }
            Event::PropagationArrival {
                replica,
                consumer,
                version,
            } => {
                self.store.deliver(replica, &consumer, version)?;
            }
        }
        Ok(())
    }
}

/// Poisson inter-arrival gap for `rate_per_hour`, at least 1 µs.
fn interarrival_micros(rate_per_hour: f64, rng: &mut StreamRng) -> u64 {
    let mean_ms = 3_600_000.0 / rate_per_hour;
    DelayDistribution::Exponential { mean_ms }
        .sample_micros(rng)
        .max(1)
}

/// Runs the feed-following workload over `[0, duration]`, then drains the
/// remaining fan-out and replication work so the trace is complete.
pub fn run_experiment(
    network: &FollowingNetwork,
    profile: &WorkloadProfile,
    store_config: StoreConfig,
    feed_config: FeedConfig,
    duration: VirtualTime,
    seed: u64,
) -> Result<RunArtifacts> {
    if profile.producer_rate.len() != network.n_producers()
        || profile.consumer_rate.len() != network.n_consumers()
    {
        return Err(Error::InvalidParameter(
            "profile does not match the network".into(),
        ));
    }
    let streams = RngStreams::new(seed);
    let mut app = FeedApp::new(network, store_config, feed_config, &streams)?;
    let mut sched: Sched = Scheduler::new();
    let mut tweet_rng = streams.stream("arrivals.tweet");
    let mut query_rng = streams.stream("arrivals.query");

    for p in network.producers() {
        let t = VirtualTime::from_micros(interarrival_micros(
            profile.producer_rate(p),
            &mut tweet_rng,
        ));
        if t <= duration {
            sched.schedule(t, Event::TweetArrival(p))?;
        }
    }
    for c in network.consumers() {
        let t = VirtualTime::from_micros(interarrival_micros(
            profile.consumer_rate(c),
            &mut query_rng,
        ));
        if t <= duration {
            sched.schedule(t, Event::TimelineQuery(c))?;
        }
    }

    let mut by_kind: BTreeMap<String, u64> = BTreeMap::new();
    let mut step = |app: &mut FeedApp, sched: &mut Sched, ev: Event| -> Result<()> {
        *by_kind.entry(format!("{:?}", ev.kind())).or_default() += 1;
        match ev {
            Event::TweetArrival(p) => {
                let next =
                    sched.now() + interarrival_micros(profile.producer_rate(p), &mut tweet_rng);
                if next <= duration {
                    sched.schedule(next, Event::TweetArrival(p))?;
                }
            }
            Event::TimelineQuery(c) => {
                let next =
                    sched.now() + interarrival_micros(profile.consumer_rate(c), &mut query_rng);
                if next <= duration {
                    sched.schedule(next, Event::TimelineQuery(c))?;
                }
            }
            _ => {}
        }
        app.handle(sched, ev)
    };
    sched.run_until(duration, |s, ev| step(&mut app, s, ev.payload))?;
    // Only fan-out and replication events remain past the horizon.
    while let Some(ev) = sched.pop_due(VirtualTime::from_micros(u64::MAX)) {
        step(&mut app, &mut sched, ev.payload)?;
    }

    let stats = TraceStats {
        duration_us: duration.micros(),
        tweets: app.tweets.len() as u64,
        responses: app.responses.len() as u64,
        timeline_writes: app.timeline_writes,
        retries: app.retries,
        events_by_kind: by_kind,
        scheduler: sched.stats(),
        store: app.store.stats(),
    };
    Ok(RunArtifacts {
        tweet_log: app.tweets,
        response_log: app.responses,
        trace: app.trace,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{consistent_timeline, TweetIndex};
    use crate::model::TimelineEntry;
    use crate::network::ZipfParams;

    fn zero_lag() -> StoreConfig {
        StoreConfig {
            lag: DelayDistribution::Constant { ms: 0.0 },
            ..StoreConfig::default()
        }
    }

    fn sync_feed() -> FeedConfig {
        FeedConfig {
            fanout: FanoutConfig {
                service_time: DelayDistribution::Constant { ms: 0.0 },
                ..FanoutConfig::default()
            },
            ..FeedConfig::default()
        }
    }

    fn profile(net: &FollowingNetwork, p_rate: f64, c_rate: f64) -> WorkloadProfile {
        WorkloadProfile {
            producer_rate: vec![p_rate; net.n_producers()],
            consumer_rate: vec![c_rate; net.n_consumers()],
            zipf_params: ZipfParams::default(),
            scale: 1.0,
        }
    }

    /// One producer followed by `n` consumers, plus a consumer following a
    /// second producer nobody else follows.
    fn star(n: usize) -> FollowingNetwork {
        let mut follows = vec![vec![ProducerId(1)]; n];
        follows.push(vec![ProducerId(2)]);
        FollowingNetwork::from_follows(2, follows).unwrap()
    }

    fn drain(app: &mut FeedApp, sched: &mut Sched) {
        while let Some(ev) = sched.pop_due(VirtualTime::from_micros(u64::MAX)) {
            app.handle(sched, ev.payload).unwrap();
        }
    }

    #[test]
    fn producer_without_followers_schedules_nothing() {
        let net = FollowingNetwork::from_follows(2, vec![vec![ProducerId(1)]]).unwrap();
        let mut app = FeedApp::new(
            &net,
            StoreConfig::default(),
            FeedConfig::default(),
            &RngStreams::new(1),
        )
        .unwrap();
        let mut sched = Sched::new();
        app.post_tweet(&mut sched, ProducerId(2)).unwrap();
        assert_eq!(sched.pending(), 0);
        assert_eq!(app.trace()[0].followers, 0);
        assert_eq!(app.store().stats().writes, 0);
    }

    #[test]
    fn every_follower_gets_exactly_one_update() {
        let net = star(234);
        let mut app = FeedApp::new(
            &net,
            StoreConfig::default(),
            FeedConfig::default(),
            &RngStreams::new(2),
        )
        .unwrap();
        let mut sched = Sched::new();
        app.post_tweet(&mut sched, ProducerId(1)).unwrap();
        assert_eq!(sched.pending(), 234);
        drain(&mut app, &mut sched);
        assert_eq!(app.trace()[0].updates_committed, 234);
        let key = app.tweets()[0].key();
        for c in 1..=234 {
            let v = app.store().authoritative_read(&ConsumerId(c)).unwrap();
            assert!(v.contains(&key));
        }
        assert!(app.store().authoritative_read(&ConsumerId(235)).is_none());
    }

    #[test]
    fn concurrency_cap_serializes_updates() {
        let net = star(10);
        let cfg = FeedConfig {
            fanout: FanoutConfig {
                service_time: DelayDistribution::Constant { ms: 5.0 },
                concurrency_cap: Some(1),
                ..FanoutConfig::default()
            },
            ..FeedConfig::default()
        };
        let mut app = FeedApp::new(&net, zero_lag(), cfg, &RngStreams::new(3)).unwrap();
        let mut sched = Sched::new();
        app.post_tweet(&mut sched, ProducerId(1)).unwrap();
        assert_eq!(sched.pending(), 1);
        drain(&mut app, &mut sched);
        assert_eq!(app.trace()[0].updates_committed, 10);
        assert_eq!(app.trace()[0].fanout_completion_us, 50_000);
    }

    #[test]
    fn same_instant_posts_get_distinct_seq() {
        let net = star(3);
        let mut app = FeedApp::new(&net, zero_lag(), sync_feed(), &RngStreams::new(4)).unwrap();
        let mut sched = Sched::new();
        let a = app.post_tweet(&mut sched, ProducerId(1)).unwrap();
        let b = app.post_tweet(&mut sched, ProducerId(2)).unwrap();
        assert_eq!(a.t, b.t);
        assert_eq!((a.seq, b.seq), (0, 1));
    }

    #[test]
    fn query_before_any_tweet_is_empty() {
        let net = star(3);
        let mut app = FeedApp::new(
            &net,
            StoreConfig::default(),
            FeedConfig::default(),
            &RngStreams::new(5),
        )
        .unwrap();
        let r = app
            .query_timeline(VirtualTime::from_micros(7), ConsumerId(1))
            .unwrap();
        assert!(r.entries.is_empty());
        assert!(app
            .query_timeline(VirtualTime::ZERO, ConsumerId(99))
            .is_err());
    }

    #[test]
    fn concurrent_updates_to_one_timeline_match_sort_and_truncate() {
        // One consumer follows 50 producers that all post at the same instant.
        let follows = vec![(1..=50).map(ProducerId).collect()];
        let net = FollowingNetwork::from_follows(50, follows).unwrap();
        let mut app = FeedApp::new(
            &net,
            StoreConfig::default(),
            FeedConfig::default(),
            &RngStreams::new(6),
        )
        .unwrap();
        let mut sched = Sched::new();
        for p in 1..=50 {
            app.post_tweet(&mut sched, ProducerId(p)).unwrap();
        }
        drain(&mut app, &mut sched);
        let mut expected: Vec<TimelineEntry> = app.tweets().iter().map(|t| t.entry()).collect();
        expected.sort_by(|a, b| b.cmp(a));
        expected.truncate(DEFAULT_N_TIMELINE);
        let got = app.store().authoritative_read(&ConsumerId(1)).unwrap();
        assert_eq!(got.entries(), &expected[..]);
        assert!(app.trace().iter().all(|t| t.updates_committed == 1));
        assert!(app.store().stats().conditional_failures > 0);
    }

    #[test]
    fn zero_duration_run_is_empty() {
        let net = star(5);
        let out = run_experiment(
            &net,
            &profile(&net, 10.0, 10.0),
            zero_lag(),
            sync_feed(),
            VirtualTime::ZERO,
            7,
        )
        .unwrap();
        assert!(out.tweet_log.is_empty());
        assert!(out.response_log.is_empty());
    }

    #[test]
    fn poisson_arrival_count_is_within_three_sigma() {
        let net = star(1);
        let out = run_experiment(
            &net,
            &profile(&net, 60.0, 1.0),
            zero_lag(),
            sync_feed(),
            VirtualTime::from_secs_f64(3600.0),
            8,
        )
        .unwrap();
        let n = out
            .tweet_log
            .iter()
            .filter(|t| t.producer_id == ProducerId(1))
            .count() as f64;
        assert!((n - 60.0).abs() <= 3.0 * 60f64.sqrt(), "{n} tweets");
    }

    fn small_network() -> FollowingNetwork {
        let follows = (0..40u32)
            .map(|c| {
                let mut f: Vec<ProducerId> = (0..3)
                    .map(|k| ProducerId(1 + (c * 7 + k * 5) % 15))
                    .collect();
                f.sort();
                f.dedup();
                f
            })
            .collect();
        FollowingNetwork::from_follows(15, follows).unwrap()
    }

    #[test]
    fn zero_lag_run_serves_consistent_timelines() {
        let net = small_network();
        let cfg = FeedConfig {
            n_timeline: 5,
            ..sync_feed()
        };
        let out = run_experiment(
            &net,
            &profile(&net, 30.0, 60.0),
            zero_lag(),
            cfg,
            VirtualTime::from_secs_f64(3600.0),
            9,
        )
        .unwrap();
        assert!(out.response_log.len() > 1000);
        let idx = TweetIndex::new(&out.tweet_log).unwrap();
        for r in &out.response_log {
            let o = consistent_timeline(r.consumer_id, r.served_at, &idx, &net, 5).unwrap();
            assert_eq!(r.entries, o.entries, "response {}", r.response_id);
        }
    }

    #[test]
    fn lagged_run_serves_no_future_or_foreign_tweets() {
        let net = small_network();
        let out = run_experiment(
            &net,
            &profile(&net, 30.0, 60.0),
            StoreConfig::default(),
            FeedConfig::default(),
            VirtualTime::from_secs_f64(1800.0),
            10,
        )
        .unwrap();
        let posted: std::collections::HashSet<_> =
            out.tweet_log.iter().map(|t| t.entry()).collect();
        for r in &out.response_log {
            for e in &r.entries {
                assert!(e.t <= r.served_at);
                assert!(posted.contains(e));
                assert!(net.is_following(r.consumer_id, e.producer_id));
            }
        }
        let total: usize = out.trace.iter().map(|t| t.followers).sum();
        let done: usize = out.trace.iter().map(|t| t.updates_committed).sum();
        assert_eq!(total, done);
    }

    #[test]
    fn same_seed_same_logs() {
        let net = small_network();
        let prof = profile(&net, 30.0, 60.0);
        let run = |seed| {
            run_experiment(
                &net,
                &prof,
                StoreConfig::default(),
                FeedConfig::default(),
                VirtualTime::from_secs_f64(600.0),
                seed,
            )
            .unwrap()
        };
        let (a, b) = (run(11), run(11));
        assert_eq!(a.tweet_log, b.tweet_log);
        assert_eq!(a.response_log, b.response_log);
        assert_eq!(a.trace, b.trace);
        assert_ne!(run(12).tweet_log, a.tweet_log);
    }
}
