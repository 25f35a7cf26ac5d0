//! Seeded, stream-indexed random numbers.
//!
//! A stream is identified by `(seed, index)`: the key comes from the seed
//! and the index selects an independent ChaCha keystream, so replicate `r`
//! draws the same numbers whether replicates run serially or in parallel.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distmodel::DistributionModel;
use crate::ecf::SortedSample;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0,1), on the grid `(j + ½)·2⁻⁵³`.
    pub fn next_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * SCALE
    }
}

/// `n` inverse-transform draws `F⁻¹(U)`, sorted ascending.
pub fn draw_iid(model: &DistributionModel, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut values: Vec<f64> = (0..n).map(|_| model.quantile_raw(rng.next_open01())).collect();
    values.sort_unstable_by(f64::total_cmp);
    values
}

/// [`draw_iid`] wrapped as a [`SortedSample`] (needs `n ≥ 2`).
pub fn sample_iid(model: &DistributionModel, n: usize, rng: &mut StreamRng) -> Result<SortedSample> {
    SortedSample::from_sorted(draw_iid(model, n, rng))
}
