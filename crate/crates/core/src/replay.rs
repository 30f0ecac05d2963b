//! Fixed-capacity FIFO transition store.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// Task-ordered constraint indicators (behavioral, then success).
    pub indicators: Vec<u8>,
    /// Absorbing transition; time-limit cuts are stored as `false`.
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    cursor: usize,
    storage: Vec<TransitionRecord>,
    arity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            cursor: 0,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            arity: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends a record, overwriting the oldest one once full.
    ///
    /// Panics if the indicator arity differs from earlier records.
    pub fn push(&mut self, record: TransitionRecord) {
        let arity = *self.arity.get_or_insert(record.indicators.len());
        assert_eq!(record.indicators.len(), arity, "indicator arity changed");
        if self.storage.len() < self.capacity {
            self.storage.push(record);
        } else {
            self.storage[self.cursor] = record;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Record `i` in insertion order among those currently held (0 = oldest).
    pub fn chronological(&self, i: usize) -> &TransitionRecord {
        assert!(i < self.len());
        if self.storage.len() < self.capacity {
            &self.storage[i]
        } else {
            &self.storage[(self.cursor + i) % self.capacity]
        }
    }

    pub fn slot(&self, slot: usize) -> &TransitionRecord {
        &self.storage[slot]
    }

    /// `n` storage slots drawn i.i.d. uniformly with replacement. Only an
    /// empty buffer is an error, so `n` may exceed the record count.
    pub fn sample_uniform_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.require(1)?;
        let len = self.len();
        Ok((0..n).map(|_| rng.random_range(0..len)).collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&TransitionRecord>> {
        Ok(self
            .sample_uniform_indices(n, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }

    /// The `n` most recent records, oldest first.
    pub fn sample_last(&self, n: usize) -> Result<Vec<&TransitionRecord>> {
        self.require(n)?;
        let len = self.len();
        Ok((len - n..len).map(|i| self.chronological(i)).collect())
    }

    fn require(&self, n: usize) -> Result<()> {
        if self.len() < n || self.is_empty() {
            return Err(Error::InsufficientData {
                need: n.max(1),
                have: self.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(tag: f64) -> TransitionRecord {
        TransitionRecord {
            observation: vec![tag, -tag],
            action: vec![tag * 0.5],
            reward: tag,
            next_observation: vec![tag + 1.0, f64::MIN_POSITIVE],
            indicators: vec![(tag as u64 % 2) as u8, 1],
            done: (tag as u64).is_multiple_of(3),
        }
    }

    #[test]
    fn fifo_overwrite() {
        let mut b = ReplayBuffer::new(2);
        for t in [1.0, 2.0, 3.0] {
            b.push(rec(t));
        }
        let held: Vec<f64> = b.sample_last(2).unwrap().iter().map(|r| r.reward).collect();
        assert_eq!(held, vec![2.0, 3.0]);
    }

    #[test]
    fn count_bounded_by_capacity() {
        let mut b = ReplayBuffer::new(1000);
        for i in 0..100_000 {
            b.push(rec(i as f64));
            assert!(b.len() <= 1000);
        }
        assert_eq!(b.len(), 1000);
    }

    #[test]
    fn push_read_round_trip_bit_exact() {
        let mut b = ReplayBuffer::new(4);
        let r = TransitionRecord {
            observation: vec![0.1 + 0.2, -0.0, 1e-300],
            action: vec![f64::EPSILON, -1.0],
            reward: -0.0,
            next_observation: vec![f64::MAX, 3.0],
            indicators: vec![1, 0, 1],
            done: true,
        };
        b.push(r.clone());
        let back = b.sample_last(1).unwrap()[0];
        assert_eq!(back, &r);
        assert_eq!(back.reward.to_bits(), r.reward.to_bits());
        assert_eq!(back.observation[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn single_record_sampled_repeatedly() {
        let mut b = ReplayBuffer::new(10);
        b.push(rec(7.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = b.sample_uniform(3, &mut rng).unwrap();
        assert!(s.iter().all(|r| r.reward == 7.0));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn last_n_in_order() {
        let mut b = ReplayBuffer::new(10);
        for t in 1..=5 {
            b.push(rec(t as f64));
        }
        let last: Vec<f64> = b.sample_last(3).unwrap().iter().map(|r| r.reward).collect();
        assert_eq!(last, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn insufficient_data() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            b.sample_uniform(1, &mut rng),
            Err(Error::InsufficientData { need: 1, have: 0 })
        ));
        b.push(rec(1.0));
        assert!(matches!(
            b.sample_last(2),
            Err(Error::InsufficientData { need: 2, have: 1 })
        ));
    }

    proptest! {
        #[test]
        fn sample_last_is_suffix_of_shadow_log(
            capacity in 1usize..40,
            pushes in 1usize..200,
            n_frac in 0.0f64..1.0,
        ) {
            let mut b = ReplayBuffer::new(capacity);
            let mut shadow = Vec::new();
            for i in 0..pushes {
                b.push(rec(i as f64));
                shadow.push(i as f64);
            }
            let n = ((b.len() as f64 * n_frac) as usize).max(1);
            let got: Vec<f64> = b.sample_last(n).unwrap().iter().map(|r| r.reward).collect();
            prop_assert_eq!(got.as_slice(), &shadow[shadow.len() - n..]);
        }
    }
}
