//! Minimal layer kit with explicit backward passes.
//!
//! Models own a flat `Vec<f64>` of parameters; layers record their offset into
//! it. Backward passes accumulate into a gradient buffer with the same layout,
//! which keeps the optimizer and checkpoint code layout-agnostic.

pub mod act;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod pool;

pub use adam::{cosine_annealing, Adam};
pub use conv::Conv2d;
pub use dense::Dense;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hands out consecutive parameter ranges while a model is being laid out.
#[derive(Debug, Default)]
pub struct ParamAlloc {
    next: usize,
}

impl ParamAlloc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&mut self, n: usize) -> usize {
        let offset = self.next;
        self.next += n;
        offset
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
