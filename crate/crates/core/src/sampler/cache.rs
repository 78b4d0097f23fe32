use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::models::{BlockScorer, ModelError};
use crate::partition::BlockKey;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub audits: u64,
    pub audit_mismatches: u64,
}

impl CacheStats {
    pub fn merge(&mut self, other: &CacheStats) {
        self.hits += other.hits;
        self.misses += other.misses;
        self.evictions += other.evictions;
        self.audits += other.audits;
        self.audit_mismatches += other.audit_mismatches;
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

fn same_result(a: &Result<f64, ModelError>, b: &Result<f64, ModelError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits(),
        (Err(x), Err(y)) => x == y,
        _ => false,
    }
}

/// Memoized block scores with optional least-recently-used eviction.
///
/// Every `audit_every`-th hit is recomputed and compared bit-for-bit with
/// the stored value; mismatches are only counted.
#[derive(Debug)]
pub struct BlockScoreCache {
    map: HashMap<BlockKey, (Result<f64, ModelError>, u64)>,
    lru: BTreeMap<u64, BlockKey>,
    tick: u64,
    capacity: Option<usize>,
    audit_every: u64,
    stats: CacheStats,
}

impl BlockScoreCache {
    pub fn new(capacity: Option<usize>, audit_every: u64) -> Self {
        BlockScoreCache {
            map: HashMap::new(),
            lru: BTreeMap::new(),
            tick: 0,
            capacity,
            audit_every,
            stats: CacheStats::default(),
        }
    }

    pub fn unbounded() -> Self {
        Self::new(None, 0)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn get<S: BlockScorer + ?Sized>(&mut self, key: &BlockKey, scorer: &S) -> Result<f64, ModelError> {
        self.tick += 1;
        let tick = self.tick;
        if let Some((value, last)) = self.map.get_mut(key) {
            self.stats.hits += 1;
            if self.capacity.is_some() {
                self.lru.remove(last);
                *last = tick;
                self.lru.insert(tick, key.clone());
            }
            let value = value.clone();
            if self.audit_every > 0 && self.stats.hits % self.audit_every == 0 {
                self.stats.audits += 1;
                if !same_result(&scorer.block_score(key), &value) {
                    self.stats.audit_mismatches += 1;
                }
            }
            return value;
        }
        self.stats.misses += 1;
        let value = scorer.block_score(key);
        if let Some(cap) = self.capacity {
            if cap == 0 {
                return value;
            }
            while self.map.len() >= cap {
                let Some((_, oldest)) = self.lru.pop_first() else { break };
                self.map.remove(&oldest);
                self.stats.evictions += 1;
            }
            self.lru.insert(tick, key.clone());
        }
        self.map.insert(key.clone(), (value.clone(), tick));
        value
    }
}

/// Cache shared by all chains. Readers proceed concurrently; inserts take
/// an exclusive lock. When a capacity is set, inserts stop once it is reached.
#[derive(Debug, Default)]
pub struct SharedBlockCache {
    map: RwLock<HashMap<BlockKey, Result<f64, ModelError>>>,
    capacity: Option<usize>,
}

impl SharedBlockCache {
    pub fn new(capacity: Option<usize>) -> Self {
        SharedBlockCache { map: RwLock::new(HashMap::new()), capacity }
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get<S: BlockScorer + ?Sized>(&self, key: &BlockKey, scorer: &S, stats: &mut CacheStats) -> Result<f64, ModelError> {
        if let Some(v) = self.map.read().expect("cache lock poisoned").get(key) {
            stats.hits += 1;
            return v.clone();
        }
        stats.misses += 1;
        let value = scorer.block_score(key);
        let mut map = self.map.write().expect("cache lock poisoned");
        if self.capacity.is_none_or(|cap| map.len() < cap) {
            map.insert(key.clone(), value.clone());
        }
        value
    }
}

/// Per-chain view of whichever cache is configured.
pub(crate) enum ChainCache<'a> {
    Disabled(CacheStats),
    Local(BlockScoreCache),
    Shared(&'a SharedBlockCache, CacheStats),
}

impl ChainCache<'_> {
    pub(crate) fn get<S: BlockScorer + ?Sized>(&mut self, key: &BlockKey, scorer: &S) -> Result<f64, ModelError> {
        match self {
            ChainCache::Disabled(stats) => {
                stats.misses += 1;
                scorer.block_score(key)
            }
            ChainCache::Local(cache) => cache.get(key, scorer),
            ChainCache::Shared(cache, stats) => cache.get(key, scorer, stats),
        }
    }

    pub(crate) fn stats(&self) -> CacheStats {
        match self {
            ChainCache::Disabled(s) | ChainCache::Shared(_, s) => *s,
            ChainCache::Local(c) => c.stats(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl BlockScorer for Counting {
        fn dim(&self) -> usize {
            8
        }
        fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok(block.elements().iter().sum::<usize>() as f64)
        }
    }

    fn key(v: &[usize]) -> BlockKey {
        BlockKey::new(v.to_vec()).unwrap()
    }

    #[test]
    fn memoizes() {
        let scorer = Counting(AtomicUsize::new(0));
        let mut cache = BlockScoreCache::unbounded();
        for _ in 0..3 {
            assert_eq!(cache.get(&key(&[1, 2]), &scorer), Ok(3.0));
        }
        assert_eq!(scorer.0.load(Ordering::Relaxed), 1);
        assert_eq!(cache.stats().hits, 2);
        assert_eq!(cache.stats().misses, 1);
    }

    #[test]
    fn lru_evicts_least_recent() {
        let scorer = Counting(AtomicUsize::new(0));
        let mut cache = BlockScoreCache::new(Some(2), 0);
        cache.get(&key(&[0]), &scorer).unwrap();
        cache.get(&key(&[1]), &scorer).unwrap();
        cache.get(&key(&[0]), &scorer).unwrap(); // {1} is now oldest
        cache.get(&key(&[2]), &scorer).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.stats().evictions, 1);
        let before = scorer.0.load(Ordering::Relaxed);
        cache.get(&key(&[0]), &scorer).unwrap();
        assert_eq!(scorer.0.load(Ordering::Relaxed), before);
        cache.get(&key(&[1]), &scorer).unwrap();
        assert_eq!(scorer.0.load(Ordering::Relaxed), before + 1);
    }

    #[test]
    fn audits_agree() {
        let scorer = Counting(AtomicUsize::new(0));
        let mut cache = BlockScoreCache::new(None, 2);
        for _ in 0..11 {
            cache.get(&key(&[3, 4]), &scorer).unwrap();
        }
        assert_eq!(cache.stats().audits, 5);
        assert_eq!(cache.stats().audit_mismatches, 0);
    }

    #[test]
    fn shared_respects_capacity() {
        let scorer = Counting(AtomicUsize::new(0));
        let cache = SharedBlockCache::new(Some(1));
        let mut stats = CacheStats::default();
        cache.get(&key(&[0]), &scorer, &mut stats).unwrap();
        cache.get(&key(&[1]), &scorer, &mut stats).unwrap();
        cache.get(&key(&[0]), &scorer, &mut stats).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!((stats.hits, stats.misses), (1, 2));
    }
}
