//! Named random substreams derived from one root seed.
//!
//! Every consumer of randomness asks for its own stream by name plus a path
//! of indices (iteration, domain, ...). Streams are independent of the order
//! in which they are requested, so adding a consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed value of substream `name` at `path` under `root`.
pub fn derive(root: u64, name: &str, path: &[u64]) -> u64 {
    let mut h = splitmix(root ^ fnv1a(name));
    for &p in path {
        h = splitmix(h ^ splitmix(p));
    }
    h
}

pub fn substream(root: u64, name: &str, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, name, path))
}
