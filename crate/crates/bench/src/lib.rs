//! Shared inputs for the benchmarks.

use pirank::data::{gen_synthetic, QueryGroup, SyntheticConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform scores in `[0, 1)` from a seeded stream.
pub fn scores(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// One synthetic query of `len` items with 12 features.
pub fn query(len: usize, seed: u64) -> QueryGroup {
    gen_synthetic(&SyntheticConfig {
        queries: 1,
        list_size: len,
        seed,
        ..SyntheticConfig::default()
    })
    .expect("valid synthetic config")
    .remove(0)
}
