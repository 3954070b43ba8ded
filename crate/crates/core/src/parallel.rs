//! Seeded random substreams and the batched parallel map used by every
//! Monte-Carlo loop.
//!
//! Work item `k` draws from its own ChaCha stream keyed by `(seed, k)`, and
//! results are collected in index order, so output is bit-identical for any
//! thread count or batch width.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples processed concurrently per batch unless configured otherwise.
pub const DEFAULT_BATCH_WIDTH: usize = 200;

/// Independent RNG for work item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per replicate or per campaign step.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps `f` over `0..count` in batches of `batch_width` items, each batch
/// spread over the rayon pool. Results come back in index order.
pub fn par_map_indexed<T, F>(count: usize, batch_width: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let width = batch_width.max(1);
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    while start < count {
        let end = (start + width).min(count);
        let batch: Vec<T> = (start..end).into_par_iter().map(&f).collect();
        out.extend(batch);
        start = end;
    }
    out
}
