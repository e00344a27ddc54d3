//! Seeded sampling of fixations from densities.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixations::Fixation;
use crate::grid::DensityGrid;
use crate::Scalar;

/// The crate's deterministic RNG.
pub type GazeRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> GazeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `n` row-major pixel indices with probability `p`.
pub fn sample_pixels<S: Scalar, R: Rng + ?Sized>(density: &DensityGrid<S>, n: usize, rng: &mut R) -> Vec<usize> {
    let weights: Vec<f64> = density.log_p().iter().map(|l| l.as_f64().exp()).collect();
    let dist = WeightedIndex::new(&weights).expect("a density has positive total mass");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Draws `n` fixations, placing each uniformly inside its sampled pixel.
pub fn sample_fixations<S: Scalar, R: Rng + ?Sized>(
    image_id: &str,
    subject_id: &str,
    density: &DensityGrid<S>,
    n: usize,
    rng: &mut R,
) -> Vec<Fixation> {
    let width = density.width();
    sample_pixels(density, n, rng)
        .into_iter()
        .map(|idx| {
            let (row, col) = (idx / width, idx % width);
            let x = col as f64 + rng.random_range(0.0..0.999);
            let y = row as f64 + rng.random_range(0.0..0.999);
            Fixation::new(image_id, subject_id, x, y)
        })
        .collect()
}
