use rand::Rng;

use super::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; 3],
    pub action: Action,
    pub reward: f64,
    pub next_obs: [f64; 3],
    /// True only for terminal transitions; time-limit truncation is not
    /// terminal.
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Transition> {
        assert!(!self.items.is_empty(), "sampling an empty buffer");
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(k: usize) -> Transition {
        Transition { obs: [k as f64, 0.0, 0.0], action: Action::Up, reward: k as f64, next_obs: [0.0; 3], done: false }
    }

    proptest! {
        #[test]
        fn fifo_eviction(cap in 1usize..50, k in 0usize..80) {
            let mut b = ReplayBuffer::new(cap);
            for i in 0..cap + k {
                b.push(t(i));
            }
            prop_assert_eq!(b.len(), cap);
            let present: Vec<usize> = b.iter().map(|x| x.reward as usize).collect();
            for i in 0..k {
                prop_assert!(!present.contains(&i));
            }
            for i in k..cap + k {
                prop_assert!(present.contains(&i));
            }
        }
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut b = ReplayBuffer::new(4);
        (0..4).for_each(|i| b.push(t(i)));
        let mut counts = [0usize; 4];
        for x in b.sample(&mut ChaCha8Rng::seed_from_u64(9), 40_000) {
            counts[x.reward as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (9_500..10_500).contains(&c)), "{counts:?}");
    }
}
