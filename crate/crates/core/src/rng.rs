//! Deterministic, seed-splittable randomness.
//!
//! Every stochastic routine in this crate draws from ChaCha8: counter-based,
//! platform-independent, and cheap to fork into independent streams. A master
//! seed plus a component label yields a reproducible stream regardless of
//! what other components consumed.

use rand::{RngCore, SeedableRng};

pub type Rng = rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a; used to map component labels to ChaCha streams.
fn fnv1a64(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn seed_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream for a named component under one master seed.
pub fn derive_rng(seed: u64, label: &str) -> Rng {
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(fnv1a64(label));
    r
}

/// Fork a child generator. The parent advances; the child is an independent
/// stream seeded from the parent's output.
pub fn split(rng: &mut Rng) -> Rng {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    Rng::from_seed(seed)
}
