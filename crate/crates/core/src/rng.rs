//! Counter-based randomness: every sample index gets its own ChaCha stream
//! derived from one seed, so parallel loops replay identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point in the closed Euclidean ball `B(center, radius)`.
pub fn uniform_ball<T: Real, R: Rng>(rng: &mut R, center: &[T], radius: T) -> Vec<T> {
    let d = center.len();
    if d == 0 {
        return Vec::new();
    }
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r: f64 = rng.gen::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(&c, &g)| c + radius * T::lit(r * g / norm)).collect()
}

/// Uniform point in the box `[lo, hi]` (finite bounds).
pub fn uniform_box<T: Real, R: Rng>(rng: &mut R, lo: &[T], hi: &[T]) -> Vec<T> {
    lo.iter().zip(hi).map(|(&a, &b)| a + (b - a) * T::lit(rng.gen::<f64>())).collect()
}
