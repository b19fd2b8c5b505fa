//! Seeded space-filling and uniform designs.
//!
//! All generators use `ChaCha8Rng` from `rand_chacha` 0.9, seeded with a
//! 64-bit value. Seeds for a given purpose come from [`derive_seed`], which
//! hashes a master seed together with labels such as the problem id, the
//! repetition index and the purpose (`"init"`, `"validation"`, ...). Runs
//! that share labels therefore share streams regardless of which
//! acquisition function consumes them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Bounds;

/// Size, box and seed of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub count: usize,
    pub bounds: Bounds,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(count: usize, bounds: Bounds, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        Ok(SamplePlan {
            count,
            bounds,
            seed,
        })
    }

    pub fn dimension(&self) -> usize {
        self.bounds.dim()
    }
}

/// Random-permutation Latin hypercube with uniform jitter inside each stratum.
pub fn latin_hypercube(plan: &SamplePlan) -> Vec<Vec<f64>> {
    let n = plan.count;
    let dim = plan.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut unit = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(&mut rng);
        for (row, s) in unit.iter_mut().zip(&strata) {
            let jitter: f64 = rng.random();
            row[d] = (*s as f64 + jitter) / n as f64;
        }
    }
    unit.iter().map(|u| plan.bounds.from_unit(u)).collect()
}

/// Independent uniform points in the box.
pub fn uniform_random(plan: &SamplePlan) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let dim = plan.dimension();
    (0..plan.count)
        .map(|_| {
            let u: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            plan.bounds.from_unit(&u)
        })
        .collect()
}

/// Stable 64-bit seed from a master seed and a sequence of labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for label in labels {
        // Length prefix keeps ("ab","c") distinct from ("a","bc").
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
