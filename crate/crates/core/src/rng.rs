//! Seeded randomness shared by initialization, splitting and dropout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ModelRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}
