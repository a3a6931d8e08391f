use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used for every stochastic choice in the crate.
pub type LabRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed; used to give workers, episodes and
/// evaluation runs their own streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw (Box–Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Index drawn from a discrete distribution given by `probs` (need not be
/// exactly normalised).
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f32]) -> usize {
    let total: f64 = probs.iter().map(|&p| p as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        u -= p as f64;
        if u < 0.0 {
            return i;
        }
    }
    // rounding left a sliver: fall back to the last action with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
