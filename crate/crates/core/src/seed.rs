//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(master, stream, index)`.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    mix(mix(master ^ mix(stream)) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples an index from a discrete distribution by inversion. Falls back to
/// the last index with positive mass when rounding leaves `u` above the total.
pub fn sample_index<R: rand::Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
