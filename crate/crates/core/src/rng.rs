//! Counter-derived random streams.
//!
//! Every random stream in the crate is addressed by a [`StreamKey`]
//! `(master seed, experiment id, replication index)` plus a stream index
//! inside that replication. Two runs that address the same stream see the
//! same draws regardless of how replications are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Experiment identifiers used to separate stream families under one seed.
pub mod experiment {
    pub const QUEUE: u64 = 0x5153_494d;
    pub const UPPER_WALK: u64 = 0x5550_5752;
    pub const LOWER_WALK: u64 = 0x4c4f_5752;
    pub const LINDLEY: u64 = 0x4c49_4e44;
    pub const MOMENTS: u64 = 0x4d4f_4d54;
    pub const VARIANCE: u64 = 0x5641_5246;
    pub const GAUSS: u64 = 0x4741_5553;
    pub const DIST: u64 = 0x4449_5354;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub experiment: u64,
    pub replication: u64,
}

impl StreamKey {
    pub fn new(seed: u64, experiment: u64, replication: u64) -> Self {
        Self {
            seed,
            experiment,
            replication,
        }
    }

    pub fn with_replication(self, replication: u64) -> Self {
        Self {
            replication,
            ..self
        }
    }

    /// Generator for stream `stream` of this replication.
    pub fn rng(&self, stream: u64) -> SimRng {
        let mut seed = [0u8; 32];
        let mut state = self.seed ^ 0x243f_6a88_85a3_08d3;
        for (i, word) in [self.experiment, self.replication, 0x1319_8a2e, 0x0370_7344]
            .into_iter()
            .enumerate()
        {
            state = splitmix64(state ^ word.rotate_left(17 * i as u32));
            seed[i * 8..(i + 1) * 8].copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
