//! Counter-based random streams.
//!
//! Draw `k` of a run with seed `s` always comes from ChaCha8 keyed by `s` on
//! stream `k`, so results do not depend on how draws are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const CHUNK: usize = 4096;

/// Sums `f(draw_index, rng)` over `draws` draws. Work is split into fixed
/// chunks and partial sums are added in chunk order, so the result is
/// bit-identical for any thread count.
pub fn parallel_sum<T, F>(seed: u64, draws: usize, zero: T, f: F) -> T
where
    T: Clone + Send + Sync + std::ops::AddAssign,
    F: Fn(&mut ChaCha8Rng) -> T + Send + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = zero.clone();
            let end = ((c + 1) * CHUNK).min(draws);
            for k in c * CHUNK..end {
                let mut rng = stream(seed, k as u64);
                acc += f(&mut rng);
            }
            acc
        })
        .collect();
    let mut total = zero;
    for p in partials {
        total += p;
    }
    total
}
