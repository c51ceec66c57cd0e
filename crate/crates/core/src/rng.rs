//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose key is `(seed, namespace)` and
//! whose stream id is the unit index (task, trial, ...). Draw `k` of unit
//! `i` therefore never depends on how many units were generated before it or
//! on which worker generated it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Meta-training dataset tasks.
pub const NS_TRAIN: u64 = 0x7472_6169_6e00_0001;
/// Monte Carlo test tasks; disjoint from training.
pub const NS_TEST: u64 = 0x7465_7374_0000_0002;
/// Tasks drawn for the function/interval plot fixture.
pub const NS_FIXTURE: u64 = 0x6669_7874_0000_0003;
/// Synthetic meta-evaluations for concentration-bound coverage.
pub const NS_COVERAGE: u64 = 0x636f_7665_0000_0004;

pub fn stream(seed: u64, namespace: u64, unit: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&namespace.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(unit);
    rng
}
