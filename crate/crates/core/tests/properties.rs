mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use feedsim::analytics::{
    attribute_to_producers, gap_histogram, inconsistency_rate, summarize_gaps,
};
use feedsim::config::ExperimentConfig;
use feedsim::detect::detect_all;
use feedsim::model::{ProducerId, TimelineEntry, TimelineValue};
use feedsim::network::{build_network, ZipfParams};
use feedsim::sim::{DelayDistribution, RngStreams, Scheduler, VirtualTime};
use feedsim::stats::spearman;
use feedsim::store::{KvStore, StoreConfig};

/// Ranks by counting, averaging over ties; quadratic on purpose.
fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn entry(t: u64, seq: u64) -> TimelineEntry {
    TimelineEntry {
        producer_id: ProducerId(1 + (seq % 3) as u32),
        t: VirtualTime::from_micros(t),
        seq,
    }
}

proptest! {
    #[test]
    fn scheduler_pops_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 0..200)) {
        let mut s: Scheduler<usize> = Scheduler::new();
        for (i, &t) in times.iter().enumerate() {
            s.schedule(VirtualTime::from_micros(t), i).unwrap();
        }
        let mut popped = Vec::new();
        while let Some(ev) = s.pop_due(VirtualTime::from_micros(u64::MAX)) {
            prop_assert_eq!(s.now(), ev.fire_at);
            popped.push(ev.payload);
        }
        let mut expected: Vec<usize> = (0..times.len()).collect();
        expected.sort_by_key(|&i| (times[i], i));
        prop_assert_eq!(popped, expected);
        let st = s.stats();
        prop_assert_eq!(st.scheduled, st.processed + st.cancelled);
    }

    #[test]
    fn timeline_insertions_equal_sort_and_truncate(
        seqs in prop::collection::vec(0u64..40, 0..80),
        cap in 1usize..25,
    ) {
        // seq determines the tweet, so duplicates carry the same t
        let items: Vec<TimelineEntry> = seqs.into_iter().map(|s| entry(s / 2, s)).collect();
        let v = items.iter().fold(TimelineValue::new(), |v, e| v.with_inserted(*e, cap));
        let mut oracle: Vec<TimelineEntry> = items.iter().copied().collect::<HashSet<_>>().into_iter().collect();
        oracle.sort_by_key(|e| std::cmp::Reverse((e.t, e.seq)));
        oracle.truncate(cap);
        prop_assert_eq!(v.entries(), &oracle[..]);
    }

    #[test]
    fn spearman_matches_rank_then_pearson(
        pairs in prop::collection::vec((0u32..20, 0u32..20), 3..150),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let direct = naive_pearson(&naive_ranks(&x), &naive_ranks(&y));
        match spearman(&x, &y) {
            Some(r) => {
                prop_assert!((r - direct).abs() < 1e-9, "{} vs {}", r, direct);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            None => prop_assert!(direct.is_nan()),
        }
    }

    #[test]
    fn store_replicas_converge(
        writes in prop::collection::vec((0u32..5, 0u64..1_000), 1..100),
        replicas in 1usize..5,
        seed in any::<u64>(),
    ) {
        let cfg = StoreConfig {
            n_replicas: replicas,
            lag: DelayDistribution::Exponential { mean_ms: 50.0 },
            ..StoreConfig::default()
        };
        let mut store: KvStore<u32, u64> = KvStore::new(cfg, &RngStreams::new(seed)).unwrap();
        let mut now = 0;
        for (k, v) in &writes {
            now += 100;
            store.write(VirtualTime::from_micros(now), *k, *v);
        }
        store.quiesce();
        for k in 0..5u32 {
            let auth = store.authoritative_read(&k).copied();
            for r in 0..replicas {
                prop_assert_eq!(store.read_replica(r, &k).copied(), auth);
            }
        }
    }

    #[test]
    fn generated_networks_are_well_formed(
        n_p in 1usize..150,
        n_c in 1usize..300,
        seed in any::<u64>(),
    ) {
        // keep the two mean degrees consistent with the sizes
        let mut params = ZipfParams::default();
        params.consumers_per_producer.mean = params.producers_per_consumer.mean * n_c as f64 / n_p as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(net) = build_network(n_p, n_c, &params, &mut rng) {
            let mut in_total = 0;
            for c in net.consumers() {
                let f = net.follows(c).unwrap();
                prop_assert!(!f.is_empty());
                prop_assert_eq!(f.iter().collect::<HashSet<_>>().len(), f.len());
                for p in f {
                    prop_assert!(net.followers(*p).unwrap().contains(&c));
                }
            }
            for p in net.producers() {
                in_total += net.followers(p).unwrap().len();
            }
            prop_assert_eq!(in_total, net.edge_count());
            prop_assert_eq!(net.out_degrees().iter().sum::<usize>(), net.edge_count());
        } else {
            // only when a consumer would need more distinct producers than exist
            prop_assert!(params.producers_per_consumer.mean > 1.0);
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), hours in 0.0f64..48.0, frac in 0.01f64..=1.0, cap in prop::option::of(1usize..64)) {
        let mut cfg = ExperimentConfig { seed, duration_hours: hours, analysis_window_fraction: frac, ..ExperimentConfig::default() };
        cfg.fanout.concurrency_cap = cap;
        prop_assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytics_conserve_counts(seed in any::<u64>()) {
        let inst = common::random_instance(seed);
        let det = detect_all(&inst.responses, &inst.tweets, &inst.network, &inst.config).unwrap();
        let hist = gap_histogram(&det, 1).unwrap();
        prop_assert_eq!(hist.total(), det.totals.conflicting_responses);
        prop_assert_eq!(summarize_gaps(&det).count, det.totals.conflicting_responses);
        prop_assert_eq!(attribute_to_producers(&det).values().sum::<u64>(), det.totals.conflict_records);
        prop_assert_eq!(
            det.totals.gap_witnessed + det.totals.newer_witnessed_earlier,
            det.totals.conflict_records
        );
        let distinct: HashSet<u64> = det.records.iter().map(|r| r.response_id).collect();
        prop_assert_eq!(distinct.len() as u64, det.totals.conflicting_responses);
        if det.totals.responses_analyzed > 0 {
            let rate = inconsistency_rate(&det).unwrap();
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        for &(id, _, g) in &det.per_response_gap {
            let max = det.records.iter().filter(|r| r.response_id == id).map(|r| r.gap_us).max();
            prop_assert_eq!(Some(g), max);
        }
    }
}
