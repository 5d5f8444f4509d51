//! Seeded random streams. Every consumer gets its own ChaCha stream keyed by
//! the scenario seed, so draws never depend on evaluation order or thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy)]
pub enum Stream {
    /// Far-field realization with the given index.
    FarField(u64),
    Placement,
    RandomBaseline,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::FarField(i) => {
                assert!(i < u64::MAX - 16, "realization index out of range");
                i
            }
            Stream::Placement => u64::MAX - 1,
            Stream::RandomBaseline => u64::MAX - 2,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
