//! Deterministic random streams keyed by `(seed, task id, purpose)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent uses of randomness within one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Path = 0,
    Partition = 1,
    Limit = 2,
    Initial = 3,
    Aux = 4,
}

/// A ChaCha stream that depends only on `seed`, `id` and `purpose`.
pub fn stream(seed: u64, id: u64, purpose: Purpose) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}
