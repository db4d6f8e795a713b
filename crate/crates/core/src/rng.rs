//! Seedable, counter-based random streams.
//!
//! Every stochastic operation in the workspace takes an explicit RNG. Streams
//! that must be independent (dataset records, workers) are derived from a
//! base seed and a stream index using ChaCha's 64-bit stream selector, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A complex normal draw with unit variance per component.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    use rand_distr::{Distribution, StandardNormal};
    num_complex::Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(7, 3).random()).collect();
        assert_eq!(a, b);
        let x: u64 = stream_rng(7, 3).random();
        let y: u64 = stream_rng(7, 4).random();
        assert_ne!(x, y);
    }

    #[test]
    fn complex_normal_moments() {
        let mut rng = stream_rng(1, 0);
        let n = 100_000;
        let (mut m, mut p) = (num_complex::Complex64::new(0.0, 0.0), 0.0);
        for _ in 0..n {
            let z = complex_normal(&mut rng);
            m += z;
            p += z.re * z.re;
        }
        assert!((m / n as f64).norm() < 0.02);
        assert!((p / n as f64 - 1.0).abs() < 0.02);
    }
}
