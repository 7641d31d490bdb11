//! Counter-based derivation of independent random streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Consumers of randomness inside a run. Each gets its own ChaCha stream so
/// that, e.g., changing how many draws exploration makes does not perturb
/// network initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Env = 1,
    Init = 2,
    Sampling = 3,
    Behavior = 4,
    Exploration = 5,
    Cloner = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, stream: Stream) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream as u64);
        rng
    }
}
