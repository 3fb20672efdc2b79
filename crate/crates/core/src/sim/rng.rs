use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for a tuple of coordinates under one seed.
pub(crate) fn stream(seed: u64, parts: &[u64]) -> Xoshiro256PlusPlus {
    let key = parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)));
    Xoshiro256PlusPlus::seed_from_u64(key)
}

/// Standard normal draw clamped to `[-bound, bound]`.
pub(crate) fn clamped_normal(rng: &mut impl Rng, bound: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z.clamp(-bound, bound)
}

pub(crate) fn normal_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}
