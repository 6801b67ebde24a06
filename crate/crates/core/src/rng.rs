//! Labelled, reproducible random streams.
//!
//! A stream is identified by a 64-bit root seed and a free-form label such as
//! `"env"`, `"agent"` or `"reward:task-3"`. The ChaCha key is the SHA-256 digest
//! of the seed and label, so streams with distinct labels are independent and
//! the same pair always replays the same draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RngStream {
    root: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(root: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(root.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            root,
            label,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Derives an independent stream `"<label>/<suffix>"` under the same root.
    pub fn child(&self, suffix: &str) -> Self {
        Self::new(self.root, format!("{}/{}", self.label, suffix))
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Mutable access for `rand_distr` samplers.
    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Inverse-CDF categorical draw.
///
/// Returns the first index whose cumulative mass strictly exceeds `u`. When
/// rounding leaves `u` above the accumulated total, the last index with
/// positive mass is returned.
pub fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}
