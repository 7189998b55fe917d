//! Counter-based random streams.
//!
//! Every random draw in a run comes from a stream addressed by
//! `(global seed, device, round, purpose)`. Streams are derived on demand and
//! never shared, so the order in which devices are processed (or the number
//! of worker threads) cannot change any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never alias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    HessianCompression,
    DeviceSampling,
    Bernoulli,
    ModelCompression,
    DataGeneration,
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::HessianCompression => 1,
            Purpose::DeviceSampling => 2,
            Purpose::Bernoulli => 3,
            Purpose::ModelCompression => 4,
            Purpose::DataGeneration => 5,
            Purpose::Test => 6,
        }
    }
}

/// Sentinel device id for server-side streams.
pub const SERVER: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub device: u64,
    pub round: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, device: u64, round: u64, purpose: Purpose) -> Self {
        Self { seed, device, round, purpose }
    }

    pub fn server(seed: u64, round: u64, purpose: Purpose) -> Self {
        Self::new(seed, SERVER, round, purpose)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn stream(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut bytes = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ mix(self.device),
            splitmix64(&mut state) ^ mix(self.round.wrapping_add(0x5851_F42D_4C95_7F2D)),
            splitmix64(&mut state) ^ mix(self.purpose.tag()),
        ];
        for (chunk, w) in bytes.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    mix(*state)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
