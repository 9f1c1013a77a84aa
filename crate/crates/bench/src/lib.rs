//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use valuelens::consensus::AnnotationRecord;
use valuelens::{LikertRating, ValueVector, NUM_VALUES};

pub fn random_vector(rng: &mut ChaCha8Rng) -> ValueVector {
    ValueVector::new(std::array::from_fn(|_| {
        LikertRating::new(rng.random_range(0..=6)).expect("in scale")
    }))
}

/// `posts` posts with `raters` ratings each.
pub fn records(posts: usize, raters: usize, seed: u64) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..posts)
        .flat_map(|p| (0..raters).map(move |r| (p, r)))
        .map(|(p, r)| {
            AnnotationRecord::new(
                format!("p{p:05}"),
                format!("r{r:03}"),
                random_vector(&mut rng),
            )
        })
        .collect()
}

/// `n` rows of `p` uniform features and a noisy linear response.
pub fn regression_data(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(0.0..6.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| r[0] * 0.5 + r[1 % p] * 0.2 + rng.random_range(-1.0..1.0))
        .collect();
    (x, y)
}

pub fn pair(seed: u64) -> ([f64; NUM_VALUES], [f64; NUM_VALUES]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        random_vector(&mut rng).to_f64(),
        random_vector(&mut rng).to_f64(),
    )
}
