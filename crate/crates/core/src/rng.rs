//! Seeded random streams.
//!
//! Every randomized routine in the crate takes an explicit `u64` seed and
//! builds a [`ChaCha8Rng`] from it, so results are bit-reproducible across
//! runs and platforms. Normal variates come from the Box–Muller transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from a base seed and a stream label.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Box–Muller standard normal generator that caches the second variate.
#[derive(Debug, Clone)]
pub struct BoxMuller {
    rng: StreamRng,
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn new(rng: StreamRng) -> Self {
        Self { rng, spare: None }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seeded(seed))
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }
}
