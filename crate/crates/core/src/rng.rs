//! Seeded, platform-independent random draw streams.

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// One independent draw stream, identified by `(seed, stream_id)`.
///
/// ChaCha's stream parameter gives each `(path, direction)` pair its own sequence, so
/// the draws consumed on one link never shift the loss pattern of another.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Returns `true` with probability `p`, consuming exactly one draw.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool, SimError> {
        let dist = Bernoulli::new(p).map_err(|_| SimError::InvalidProbability(p))?;
        self.draws += 1;
        Ok(dist.sample(&mut self.rng))
    }
}

/// Stream id for a `(path, direction)` pair.
pub fn link_stream_id(path_id: usize, direction_index: usize) -> u64 {
    (path_id as u64) * 2 + direction_index as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_probabilities() {
        let mut s = RngStream::new(7, 0);
        assert!((0..1000).all(|_| !s.bernoulli(0.0).unwrap()));
        assert!((0..1000).all(|_| s.bernoulli(1.0).unwrap()));
        assert_eq!(s.draws(), 2000);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut s = RngStream::new(7, 0);
        assert!(s.bernoulli(-0.1).is_err());
        assert!(s.bernoulli(1.5).is_err());
        assert_eq!(s.draws(), 0);
    }

    #[test]
    fn loss_rate_count_within_binomial_interval() {
        // Binomial(1e6, 5e-4): mean 500, sd ~22.4; [350, 650] is wider than +-6 sd.
        for seed in [1, 2, 3] {
            let mut s = RngStream::new(seed, 0);
            let hits = (0..1_000_000)
                .filter(|_| s.bernoulli(0.0005).unwrap())
                .count();
            assert!((350..=650).contains(&hits), "seed {seed}: {hits}");
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        let xs: Vec<bool> = (0..10_000).map(|_| a.bernoulli(0.3).unwrap()).collect();
        let ys: Vec<bool> = (0..10_000).map(|_| b.bernoulli(0.3).unwrap()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xs: Vec<bool> = (0..256).map(|_| a.bernoulli(0.5).unwrap()).collect();
        let ys: Vec<bool> = (0..256).map(|_| b.bernoulli(0.5).unwrap()).collect();
        assert_ne!(xs, ys);
    }
}
