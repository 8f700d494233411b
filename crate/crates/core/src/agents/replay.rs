use rand::Rng as _;

use crate::{Error, Result, Rng};

/// One replay record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.inserted += 1;
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

    /// Total number of pushes, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `count` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, count: usize, rng: &mut Rng) -> Vec<usize> {
        (0..count)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r],
            action: 0,
            reward: r,
            next_state: vec![r],
            terminal: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 5);
        let rewards: Vec<f64> = (0..3).map(|i| b.get(i).reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(4).unwrap();
        for i in 0..4 {
            b.push(t(i as f64));
        }
        let mut rng = seeded_rng(0);
        let mut counts = [0usize; 4];
        for i in b.sample_indices(40_000, &mut rng) {
            counts[i] += 1;
        }
        // binomial sd = sqrt(40000 * 0.25 * 0.75) ~ 87
        assert!(counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 4.0 * 87.0));
    }
}
