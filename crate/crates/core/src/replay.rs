//! Fixed-capacity ring buffer with seeded uniform batch sampling, shared
//! by the teacher's experience replay and the distillation pool.

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SdnError};

/// Overwrites the oldest entry once full. Sampling is uniform without
/// replacement over the live entries.
#[derive(Debug, Clone)]
pub struct Ring<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> Ring<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(SdnError::parameter("ring capacity", "must be >= 1"));
        }
        Ok(Self { items: Vec::new(), capacity, next: 0 })
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample of `n` distinct live entries.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&'a T>> {
        if n == 0 || n > self.items.len() {
            return Err(SdnError::Contract(format!(
                "cannot sample {n} of {} buffered entries",
                self.items.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), n)
            .iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn overwrites_oldest_when_full() {
        let mut ring = Ring::new(3).unwrap();
        for i in 0..5u8 {
            ring.push(i);
        }
        assert_eq!(ring.len(), 3);
        let mut live: Vec<u8> = ring.iter().copied().collect();
        live.sort_unstable();
        assert_eq!(live, vec![2, 3, 4]);
    }

    #[test]
    fn sample_is_without_replacement() {
        let mut ring = Ring::new(16).unwrap();
        for i in 0..16u8 {
            ring.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut ids: Vec<u8> = ring.sample(8, &mut rng).unwrap().into_iter().copied().collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 8, "sample repeated an index");
        }
    }

    #[test]
    fn sample_rejects_bad_counts() {
        let mut ring: Ring<u8> = Ring::new(4).unwrap();
        ring.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ring.sample(0, &mut rng).is_err());
        assert!(ring.sample(2, &mut rng).is_err());
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(Ring::<u8>::new(0).is_err());
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let mut ring = Ring::new(32).unwrap();
        for i in 0..32u32 {
            ring.push(i);
        }
        let a: Vec<u32> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            ring.sample(10, &mut rng).unwrap().into_iter().copied().collect()
        };
        let b: Vec<u32> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            ring.sample(10, &mut rng).unwrap().into_iter().copied().collect()
        };
        assert_eq!(a, b);
    }
}
