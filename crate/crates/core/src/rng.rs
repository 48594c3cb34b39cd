//! Seeded random streams.
//!
//! A stream is addressed by a seed and a path of indices (replicate, node,
//! sample, ...). Streams are derived by hashing, so the draws of one address
//! never depend on how many other streams were consumed before it.

use rand::SeedableRng;
pub use rand_pcg::Pcg64Mcg as StreamRng;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `seed` at the given index path.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut a = mix(seed);
    let mut b = mix(seed ^ 0xD1B5_4A32_D192_ED03);
    for &p in path {
        a = mix(a ^ mix(p));
        b = mix(b.rotate_left(17) ^ p);
    }
    StreamRng::from_seed((((a as u128) << 64) | (b as u128 | 1)).to_le_bytes())
}
