//! Fixed-capacity ring buffer with seeded uniform sampling.

use rand::Rng;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    insertions: u64,
    next: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return invalid("replay capacity must be positive");
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            insertions: 0,
            next: 0,
        })
    }

    /// Stores `item`, overwriting the oldest entry once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.insertions += 1;
    }

    /// Uniform draws with replacement over stored entries.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<T>> {
        if self.items.is_empty() {
            return invalid("cannot sample from an empty buffer");
        }
        Ok((0..batch_size)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect())
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

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.insertions(), 5);
        let mut held: Vec<_> = buf.iter().copied().collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
    }

    #[test]
    fn samples_only_stored_items() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for i in 0..10u32 {
            buf.push(i * 7);
        }
        let batch = buf.sample(500, &mut rng_from_seed(3)).unwrap();
        assert!(batch.iter().all(|x| x % 7 == 0 && *x < 70));
        assert!(ReplayBuffer::<u8>::new(0).is_err());
        assert!(ReplayBuffer::<u8>::new(2).unwrap().sample(1, &mut rng_from_seed(0)).is_err());
    }
}
