use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

pub const TRAIN_BUFFER_CAPACITY: usize = 500;
pub const VAL_BUFFER_CAPACITY: usize = 100;

/// A bounded working set of tile ids drawn from a larger backing list.
///
/// Each [`sample_batch`](Self::sample_batch) draws uniformly with replacement
/// from the resident slots and then swaps one random slot for the next
/// non-resident id of a shuffled epoch ordering of the backing list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBuffer {
    capacity: usize,
    pool: Vec<String>,
    slots: Vec<String>,
    order: Vec<usize>,
    cursor: usize,
    rng: RngState,
}

/// One slot swap: `evicted` left the buffer, `loaded` entered it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refresh {
    pub evicted: String,
    pub loaded: String,
}

impl SampleBuffer {
    pub fn new(pool: Vec<String>, capacity: usize, mut rng: RngState) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("sample buffer capacity must be positive".into()));
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        rng.shuffle(&mut order);
        let fill = capacity.min(pool.len());
        let slots = order[..fill].iter().map(|&i| pool[i].clone()).collect();
        Ok(Self {
            capacity,
            pool,
            slots,
            order,
            cursor: fill,
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// `batch` resident ids drawn with replacement, followed by one refresh.
    pub fn sample_batch(&mut self, batch: usize) -> Result<(Vec<String>, Option<Refresh>)> {
        if self.slots.is_empty() {
            return Err(Error::Usage("cannot sample from an empty buffer".into()));
        }
        let ids = (0..batch).map(|_| self.slots[self.rng.below(self.slots.len())].clone()).collect();
        let refresh = self.refresh();
        Ok((ids, refresh))
    }

    fn next_candidate(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        i
    }

    /// No-op when the whole backing list fits in the buffer.
    pub fn refresh(&mut self) -> Option<Refresh> {
        if self.pool.len() <= self.capacity {
            return None;
        }
        let slot = self.rng.below(self.slots.len());
        let loaded = loop {
            let i = self.next_candidate();
            let cand = &self.pool[i];
            if !self.slots.contains(cand) {
                break cand.clone();
            }
        };
        let evicted = std::mem::replace(&mut self.slots[slot], loaded.clone());
        Some(Refresh { evicted, loaded })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn capacity_one_always_returns_resident() {
        let mut b = SampleBuffer::new(ids(1), 1, RngState::new(3)).unwrap();
        for _ in 0..10 {
            let (got, r) = b.sample_batch(4).unwrap();
            assert!(got.iter().all(|g| g == "t0"));
            assert!(r.is_none());
        }
    }

    #[test]
    fn empty_pool_is_usage_error() {
        let mut b = SampleBuffer::new(vec![], 5, RngState::new(1)).unwrap();
        assert!(matches!(b.sample_batch(2), Err(Error::Usage(_))));
    }

    #[test]
    fn refresh_keeps_slots_unique_and_bounded() {
        let mut b = SampleBuffer::new(ids(30), 10, RngState::new(9)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let (got, r) = b.sample_batch(3).unwrap();
            let r = r.unwrap();
            assert_ne!(r.evicted, r.loaded);
            assert_eq!(b.slots().len(), 10);
            let mut s = b.slots().to_vec();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 10);
            seen.extend(got);
        }
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn deterministic_and_state_round_trips() {
        let mut a = SampleBuffer::new(ids(40), 8, RngState::new(5)).unwrap();
        for _ in 0..7 {
            a.sample_batch(2).unwrap();
        }
        let json = serde_json::to_string(&a).unwrap();
        let mut b: SampleBuffer = serde_json::from_str(&json).unwrap();
        for _ in 0..20 {
            assert_eq!(a.sample_batch(3).unwrap().0, b.sample_batch(3).unwrap().0);
        }
    }
}
