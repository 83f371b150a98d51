//! Seeded standard normal stream.
//!
//! Normal variates come from the Box-Muller transform driven by a ChaCha
//! stream cipher, so every consumer (CLVQ training, Lloyd refinement,
//! Monte-Carlo estimation) is reproducible from a `(seed, stream)` pair and
//! independent streams never overlap.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Standard normal generator with a cached second Box-Muller variate.
pub struct NormalSource {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl NormalSource {
    /// Stream `stream` of the generator seeded by `seed`. Distinct streams of
    /// the same seed are independent.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform draw in the open interval (0,1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        // 53 random bits; +0.5 keeps the value strictly inside (0,1)
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// One N(0,1) draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Fill `out` with i.i.d. N(0,1) draws.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }
}
