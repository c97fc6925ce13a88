//! Seeded random-number streams.
//!
//! One root seed drives a whole run. Every consumer of randomness gets its
//! own ChaCha stream keyed by a documented stream id, so adding draws to one
//! consumer (say, a policy's randomization) never perturbs another (the
//! arrival sample). That is what makes common-random-number comparisons
//! across policies valid.
//!
//! Stream key layout (`stream` argument of [`stream_rng`]):
//!
//! | range                    | consumer                              |
//! |--------------------------|---------------------------------------|
//! | `ARRIVALS + t`           | per-type arrival process of type `t`  |
//! | `MERGED_ARRIVALS`        | merged-mode arrival times             |
//! | `MERGED_TYPES`           | merged-mode type choices              |
//! | `SERVICE + i`            | service-duration draws of worker `i`  |
//! | `POLICY`                 | policy randomization                  |
//! | `SOLVER_START + s`       | random start `s` of the PT solver     |
//! | `GENERATOR`              | synthetic instance generation         |

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub const ARRIVALS: u64 = 1 << 32;
pub const MERGED_ARRIVALS: u64 = 2 << 32;
pub const MERGED_TYPES: u64 = (2 << 32) + 1;
pub const SERVICE: u64 = 3 << 32;
pub const POLICY: u64 = 4 << 32;
pub const SOLVER_START: u64 = 5 << 32;
pub const GENERATOR: u64 = 6 << 32;

/// ChaCha generator for the given root seed, positioned on `stream`.
pub fn stream_rng(root_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a root seed and a path of indices
/// (splitmix64 chaining). Used by the experiment harness so that the seed of
/// (sweep point, policy, replication) is independent of iteration order.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(root ^ 0x9e37_79b9_7f4a_7c15);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part.wrapping_add(0xbf58_476d_1ce4_e5b9)));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
