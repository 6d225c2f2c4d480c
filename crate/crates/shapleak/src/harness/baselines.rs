//! Random-guess baselines the attacks are judged against: empirical rows
//! (RG-E) for the auxiliary-data adversary, uniform (RG-U) and Gaussian
//! (RG-N) guesses for the background-free one.

use crate::data::Dataset;
use rand::Rng;
use rand_distr::StandardNormal;

/// Empirical random guess: each guessed row is a uniformly drawn row of
/// the auxiliary dataset.
pub fn rg_e(aux: &Dataset, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::rng::root(seed);
    (0..m)
        .map(|_| aux.features[rng.gen_range(0..aux.n_rows())].clone())
        .collect()
}

/// Uniform random guess on `[0, 1]^n`.
pub fn rg_u(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::rng::root(seed);
    (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Gaussian random guess `N(0.5, 0.25^2)` clipped to `[0, 1]`; about 4.6%
/// of draws land outside and clip.
pub fn rg_n(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::rng::root(seed);
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| (0.5 + 0.25 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}
