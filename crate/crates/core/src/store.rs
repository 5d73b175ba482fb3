//! Simulated replicated key-value store with eventual consistency.
//!
//! A write commits at one home replica and is shipped to every other replica
//! after an independently sampled lag. Reads hit a uniformly random replica
//! and may be stale. Conditional writes compare against the authoritative
//! (highest committed) version, which makes them linearizable per key.
//!
//! The store does not own a clock or a queue: writes return the propagation
//! arrivals they generate and the caller delivers each one with
//! [`KvStore::deliver`] at its `arrive_at` time.

use std::collections::{HashMap, VecDeque};
use std::fmt::Display;
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DelayDistribution, RngStreams, StreamRng, VirtualTime};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaPolicy {
    #[default]
    UniformRandomReplica,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub n_replicas: usize,
    pub lag: DelayDistribution,
    pub read_policy: ReplicaPolicy,
    pub write_home_policy: ReplicaPolicy,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            n_replicas: 3,
            lag: DelayDistribution::Exponential { mean_ms: 500.0 },
            read_policy: ReplicaPolicy::UniformRandomReplica,
            write_home_policy: ReplicaPolicy::UniformRandomReplica,
        }
    }
}

impl StoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicas < 1 {
            return Err(Error::InvalidParameter("n_replicas must be >= 1".into()));
        }
        self.lag.validate()
    }
}

#[derive(Clone, Debug)]
struct Pending<K, V> {
    key: K,
    value: V,
    version: u64,
    arrive_at: VirtualTime,
}

#[derive(Clone, Debug)]
pub struct ReplicaState<K, V> {
    pub replica_id: usize,
    data: HashMap<K, (V, u64)>,
    inbox: VecDeque<Pending<K, V>>,
}

impl<K: Eq + Hash + Clone, V: Clone> ReplicaState<K, V> {
    fn new(replica_id: usize) -> Self {
        ReplicaState {
            replica_id,
            data: HashMap::new(),
            inbox: VecDeque::new(),
        }
    }

    /// Applies if newer than what the replica holds. Returns whether applied.
    fn apply(&mut self, key: K, value: V, version: u64) -> bool {
        match self.data.get(&key) {
            Some((_, v)) if *v >= version => false,
            _ => {
                self.data.insert(key, (value, version));
                true
            }
        }
    }

    pub fn version(&self, key: &K) -> Option<u64> {
        self.data.get(key).map(|(_, v)| *v)
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }
}

/// A replication message the caller must deliver at `arrive_at`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Propagation<K> {
    pub replica: usize,
    pub key: K,
    pub version: u64,
    pub arrive_at: VirtualTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteAck<K> {
    pub home_replica: usize,
    pub version: u64,
    pub commit_time: VirtualTime,
    /// Empty when the store has a single replica or zero lag.
    pub propagations: Vec<Propagation<K>>,
}

impl<K> WriteAck<K> {
    /// Largest sampled lag of this write, in microseconds.
    pub fn max_lag_micros(&self) -> u64 {
        self.propagations
            .iter()
            .map(|p| p.arrive_at - self.commit_time)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreconditionFailed<V> {
    pub current: Option<V>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadResult<V> {
    pub value: Option<V>,
    pub replica: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub writes: u64,
    pub conditional_failures: u64,
    pub reads: u64,
    pub propagations_applied: u64,
    pub propagations_superseded: u64,
}

#[derive(Debug)]
pub struct KvStore<K, V> {
    config: StoreConfig,
    replicas: Vec<ReplicaState<K, V>>,
    latest: HashMap<K, (V, u64)>,
    read_rng: StreamRng,
    home_rng: StreamRng,
    lag_rng: StreamRng,
    stats: StoreStats,
}

impl<K, V> KvStore<K, V>
where
    K: Eq + Hash + Clone,
    V: Clone + PartialEq,
{
    pub fn new(config: StoreConfig, streams: &RngStreams) -> Result<Self> {
        config.validate()?;
        Ok(KvStore {
            replicas: (0..config.n_replicas).map(ReplicaState::new).collect(),
            latest: HashMap::new(),
            read_rng: streams.stream("store.read"),
            home_rng: streams.stream("store.home"),
            lag_rng: streams.stream("store.lag"),
            stats: StoreStats::default(),
            config,
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn stats(&self) -> StoreStats {
        self.stats
    }

    pub fn replica(&self, id: usize) -> &ReplicaState<K, V> {
        &self.replicas[id]
    }

    /// Total undelivered propagation messages across replicas.
    pub fn in_flight(&self) -> usize {
        self.replicas.iter().map(|r| r.inbox.len()).sum()
    }

    fn pick_replica(rng: &mut StreamRng, n: usize) -> usize {
        if n == 1 {
            0
        } else {
            rng.random_range(0..n)
        }
    }

    fn commit(&mut self, now: VirtualTime, key: K, value: V) -> WriteAck<K> {
        let version = self.latest.get(&key).map_or(1, |(_, v)| v + 1);
        let home = Self::pick_replica(&mut self.home_rng, self.replicas.len());
        self.latest.insert(key.clone(), (value.clone(), version));
        self.replicas[home].apply(key.clone(), value.clone(), version);
        self.stats.writes += 1;

        let mut propagations = Vec::new();
        for r in (0..self.replicas.len()).filter(|&r| r != home) {
            if self.config.lag.is_zero() {
                self.replicas[r].apply(key.clone(), value.clone(), version);
                self.stats.propagations_applied += 1;
                continue;
            }
            let arrive_at = now + self.config.lag.sample_micros(&mut self.lag_rng);
            self.replicas[r].inbox.push_back(Pending {
                key: key.clone(),
                value: value.clone(),
                version,
                arrive_at,
            });
            propagations.push(Propagation {
                replica: r,
                key: key.clone(),
                version,
                arrive_at,
            });
        }
        WriteAck {
            home_replica: home,
            version,
            commit_time: now,
            propagations,
        }
    }

    /// Unconditional write; always succeeds.
    pub fn write(&mut self, now: VirtualTime, key: K, value: V) -> WriteAck<K> {
        self.commit(now, key, value)
    }

    /// Commits `new_value` iff the authoritative value equals `expected`
    /// (`None` meaning absent).
    pub fn conditional_write(
        &mut self,
        now: VirtualTime,
        key: K,
        expected: Option<&V>,
        new_value: V,
    ) -> Result<WriteAck<K>, PreconditionFailed<V>> {
        let current = self.latest.get(&key).map(|(v, _)| v);
        if current != expected {
            self.stats.conditional_failures += 1;
            return Err(PreconditionFailed {
                current: current.cloned(),
            });
        }
        Ok(self.commit(now, key, new_value))
    }

    /// Reads from a uniformly random replica; may be stale or absent.
    pub fn read(&mut self, key: &K) -> ReadResult<V> {
        let replica = Self::pick_replica(&mut self.read_rng, self.replicas.len());
        self.stats.reads += 1;
        ReadResult {
            value: self.replicas[replica].data.get(key).map(|(v, _)| v.clone()),
            replica,
        }
    }

    /// Reads one specific replica.
    pub fn read_replica(&self, replica: usize, key: &K) -> Option<&V> {
        self.replicas[replica].data.get(key).map(|(v, _)| v)
    }

    /// Highest committed version anywhere; never stale.
    pub fn authoritative_read(&self, key: &K) -> Option<&V> {
        self.latest.get(key).map(|(v, _)| v)
    }

    pub fn authoritative_version(&self, key: &K) -> Option<u64> {
        self.latest.get(key).map(|(_, v)| *v)
    }

    /// Delivers a propagation message. Returns whether it was applied; an
    /// arrival older than the replica's current version is discarded.
    pub fn deliver(&mut self, replica: usize, key: &K, version: u64) -> Result<bool> {
        let rep = &mut self.replicas[replica];
        let pos = rep
            .inbox
            .iter()
            .position(|p| p.version == version && p.key == *key)
            .ok_or_else(|| {
                Error::Integrity(format!("no pending version {version} at replica {replica}"))
            })?;
        let p = rep.inbox.remove(pos).expect("position is in range");
        let applied = rep.apply(p.key, p.value, p.version);
        if applied {
            self.stats.propagations_applied += 1;
        } else {
            self.stats.propagations_superseded += 1;
        }
        Ok(applied)
    }

    /// Delivers every pending message regardless of its arrival time, in
    /// arrival order. Test and debugging aid.
    pub fn quiesce(&mut self) {
        let mut all: Vec<(VirtualTime, usize, K, u64)> = self
            .replicas
            .iter()
            .flat_map(|r| {
                r.inbox
                    .iter()
                    .map(|p| (p.arrive_at, r.replica_id, p.key.clone(), p.version))
            })
            .collect();
        all.sort_by_key(|(t, r, _, v)| (*t, *r, *v));
        for (_, r, k, v) in all {
            self.deliver(r, &k, v).expect("pending message exists");
        }
    }

    /// Arrival time of a pending message, if still in flight.
    pub fn pending_arrival(&self, replica: usize, key: &K, version: u64) -> Option<VirtualTime> {
        self.replicas[replica]
            .inbox
            .iter()
            .find(|p| p.version == version && p.key == *key)
            .map(|p| p.arrive_at)
    }
}

impl<K, V> KvStore<K, V>
where
    K: Eq + Hash + Clone + Display + Ord,
    V: Clone + PartialEq + Serialize,
{
    /// JSON snapshot of every replica, for debugging.
    pub fn dump_json(&self) -> serde_json::Value {
        let replicas: Vec<serde_json::Value> = self
            .replicas
            .iter()
            .map(|r| {
                let mut keys: Vec<&K> = r.data.keys().collect();
                keys.sort();
                let data: serde_json::Map<String, serde_json::Value> = keys
                    .into_iter()
                    .map(|k| {
                        let (v, ver) = &r.data[k];
                        (
                            k.to_string(),
                            serde_json::json!({ "version": ver, "value": v }),
                        )
                    })
                    .collect();
                serde_json::json!({
                    "replica_id": r.replica_id,
                    "data": data,
                    "in_flight": r.inbox.len(),
                })
            })
            .collect();
        serde_json::json!({ "replicas": replicas })
    }
}
