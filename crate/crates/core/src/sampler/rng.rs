//! Counter-based random streams.
//!
//! Every random draw in a sweep comes from a generator keyed by
//! `(seed, chain, iteration, block, site)`, so results do not depend on
//! thread scheduling or on the order in which sites are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameter blocks of a sweep, used as stream keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Block {
    Init = 0,
    Latent = 1,
    Mixture = 2,
    Effects = 3,
    Edges = 4,
    EdgeProbability = 5,
    Basis = 6,
    Noise = 7,
    Refit = 8,
}

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(keys: &[u64]) -> u64 {
    keys.iter().fold(0x6A09_E667_F3BC_C908, |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Generator for one site of one block in one iteration.
pub fn site_rng(seed: u64, chain: u64, iteration: u64, block: Block, site: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, chain, iteration, block as u64, site]))
}

/// Generator for a named sub-stream of a run (e.g. `"simulation"`, `"demo"`).
pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut keys = vec![seed, u64::MAX];
    keys.extend(name.bytes().map(u64::from));
    ChaCha8Rng::seed_from_u64(mix(&keys))
}

/// Stream coordinates of one sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepStreams {
    pub seed: u64,
    pub chain: u64,
    pub iteration: u64,
}

impl SweepStreams {
    pub fn site(&self, block: Block, site: u64) -> ChaCha8Rng {
        site_rng(self.seed, self.chain, self.iteration, block, site)
    }

    pub fn block(&self, block: Block) -> ChaCha8Rng {
        self.site(block, 0)
    }
}
