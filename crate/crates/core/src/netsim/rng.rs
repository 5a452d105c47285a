use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams. Each node owns one stream per purpose so the
/// draws of one node never shift those of another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Purpose {
    Placement = 1,
    Shadowing = 2,
    Channel = 3,
    BeaconPhase = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn stream(seed: u64, node: u16, purpose: Purpose) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed) ^ (u64::from(node) << 8 | purpose as u64));
    ChaCha8Rng::seed_from_u64(key)
}
