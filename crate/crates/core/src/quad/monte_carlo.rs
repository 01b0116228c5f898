use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QuadResult;

/// Sample mean of `f` over `n` draws of `sample`, with its standard error
/// reported as the error estimate. Seeded with ChaCha8, so results depend
/// only on `seed`.
pub fn monte_carlo<T, S, F>(f: F, sample: S, n: usize, seed: u64) -> QuadResult
where
    S: FnMut(&mut ChaCha8Rng) -> T,
    F: Fn(&T) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    monte_carlo_with_rng(f, sample, n, &mut rng)
}

pub fn monte_carlo_with_rng<T, S, F, R>(f: F, mut sample: S, n: usize, rng: &mut R) -> QuadResult
where
    R: Rng,
    S: FnMut(&mut R) -> T,
    F: Fn(&T) -> f64,
{
    let n = n.max(1);
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let x = f(&sample(rng));
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let stderr = if n > 1 {
        (m2 / ((n - 1) as f64) / n as f64).sqrt()
    } else {
        0.0
    };
    QuadResult {
        value: mean,
        error: stderr,
        evals: n,
    }
}
