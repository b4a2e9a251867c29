//! Named random sub-streams derived from an episode seed.
//!
//! Each consumer of randomness gets its own ChaCha stream so that, for
//! example, swapping the reservoir type never perturbs the sensor-noise
//! realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ReservoirInit,
    SensorNoise,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::ReservoirInit => 1,
            Stream::SensorNoise => 2,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
