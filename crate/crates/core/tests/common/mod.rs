//! Shared fixtures: random detector instances and an all-pairs oracle that
//! applies the conflict definitions directly.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feedsim::detect::{warmup_len, ConflictType, DetectConfig};
use feedsim::model::{ConsumerId, ProducerId, TimelineEntry, TimelineResponse, TweetEvent};
use feedsim::network::FollowingNetwork;
use feedsim::sim::VirtualTime;

pub struct Instance {
    pub network: FollowingNetwork,
    pub tweets: Vec<TweetEvent>,
    pub responses: Vec<TimelineResponse>,
    pub config: DetectConfig,
}

/// At most 50 tweets, 200 responses and 20 consumers. Each response shows
/// the newest `n` of a random subset of what its consumer could see.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_producers = rng.random_range(1..=8usize);
    let n_consumers = rng.random_range(1..=20usize);
    let follows: Vec<Vec<ProducerId>> = (0..n_consumers)
        .map(|_| {
            let k = rng.random_range(1..=n_producers);
            let mut all: Vec<u32> = (1..=n_producers as u32).collect();
            let mut picked: Vec<ProducerId> = (0..k)
                .map(|_| {
                    let i = rng.random_range(0..all.len());
                    ProducerId(all.swap_remove(i))
                })
                .collect();
            picked.sort();
            picked
        })
        .collect();
    let network = FollowingNetwork::from_follows(n_producers, follows).unwrap();

    let n_tweets = rng.random_range(0..=50u64);
    let mut t = 0u64;
    let mut tweets: Vec<TweetEvent> = Vec::new();
    for seq in 0..n_tweets {
        // small steps so equal timestamps across producers occur
        t += rng.random_range(0..3u64);
        let producer = ProducerId(rng.random_range(1..=n_producers as u32));
        if tweets
            .iter()
            .any(|x| x.producer_id == producer && x.t.micros() == t)
        {
            t += 1;
        }
        tweets.push(TweetEvent {
            producer_id: producer,
            t: VirtualTime::from_micros(t),
            seq,
        });
    }

    let n_timeline = rng.random_range(1..=6usize);
    let n_responses = rng.random_range(0..=200u64);
    let mut served = 0u64;
    let horizon = t + 3;
    let mut responses = Vec::new();
    for id in 0..n_responses {
        served = (served + rng.random_range(0..2u64)).min(horizon);
        let consumer = ConsumerId(rng.random_range(1..=n_consumers as u32));
        let followed = network.follows(consumer).unwrap();
        let mut visible: Vec<TimelineEntry> = tweets
            .iter()
            .filter(|x| x.t.micros() <= served && followed.contains(&x.producer_id))
            .map(|x| x.entry())
            .filter(|_| rng.random_bool(0.7))
            .collect();
        visible.sort_by(|a, b| b.cmp(a));
        visible.truncate(n_timeline);
        responses.push(TimelineResponse {
            response_id: id,
            consumer_id: consumer,
            served_at: VirtualTime::from_micros(served),
            entries: visible,
            replica_served: None,
        });
    }
    let fraction = *[1.0, 0.5, 0.3].choose(&mut rng).unwrap();
    Instance {
        network,
        tweets,
        responses,
        config: DetectConfig {
            analysis_window_fraction: fraction,
            n_timeline,
        },
    }
}

pub type ConflictKey = (u64, u64, ConflictType);

/// Every analyzed response against every tweet and every other analyzed
/// response, straight from the definitions.
pub fn oracle_conflicts(
    network: &FollowingNetwork,
    tweets: &[TweetEvent],
    responses: &[TimelineResponse],
    config: &DetectConfig,
) -> BTreeSet<ConflictKey> {
    let analyzed = &responses[warmup_len(responses.len(), config.analysis_window_fraction)..];
    let mut out = BTreeSet::new();
    for r in analyzed {
        let followed = network.follows(r.consumer_id).unwrap();
        let mut consistent: Vec<&TweetEvent> = tweets
            .iter()
            .filter(|x| x.t <= r.served_at && followed.contains(&x.producer_id))
            .collect();
        consistent.sort_by_key(|x| std::cmp::Reverse((x.t, x.seq)));
        consistent.truncate(config.n_timeline);
        for m in consistent {
            let shows = |resp: &TimelineResponse| resp.entries.iter().any(|e| e.seq == m.seq);
            if shows(r) {
                continue;
            }
            let newer = r.entries.iter().any(|e| (e.t, e.seq) > (m.t, m.seq));
            let older = r.entries.iter().any(|e| (e.t, e.seq) < (m.t, m.seq));
            if newer && older {
                if analyzed.iter().any(&shows) {
                    out.insert((r.response_id, m.seq, ConflictType::GapWitnessed));
                }
            } else if !newer
                && analyzed
                    .iter()
                    .any(|w| w.served_at < r.served_at && shows(w))
            {
                out.insert((r.response_id, m.seq, ConflictType::NewerWitnessedEarlier));
            }
        }
    }
    out
}
