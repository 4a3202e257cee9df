//! Deterministic counter-keyed random streams for counting-noise synthesis.
//!
//! Every interferogram point owns an independent stream derived from
//! (seed, scenario id, point index), so identical inputs give bit-identical
//! counts no matter in which order or on which thread points are sampled.
//! FNV-1a hashes the scenario id because std's `DefaultHasher` is not stable
//! across toolchain releases.

use std::convert::Infallible;

use rand::rand_core::TryRng;
use rand_distr::{Distribution, Poisson};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Weyl increment of the SplitMix64 sequence.
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// FNV-1a over raw bytes; stable, collision-tolerant (keys are few and the
/// stream only needs decorrelation, not cryptographic strength).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 stream owned by one (seed, scenario, point) triple.
#[derive(Debug, Clone)]
pub struct PointRng {
    state: u64,
}

impl PointRng {
    pub fn new(seed: u64, scenario: &str, index: u64) -> Self {
        // Decorrelate the three key parts before they meet: adjacent indices
        // and similar scenario ids must not produce related streams.
        let mut state = seed ^ fnv1a64(scenario.as_bytes()).rotate_left(17);
        state = state.wrapping_add(index.wrapping_mul(GOLDEN));
        // One warm-up step so even all-zero keys leave the origin.
        splitmix64(&mut state);
        Self { state }
    }
}

// Infallible TryRng makes PointRng a full rand::Rng through the blanket
// impl, which is what the distribution samplers require.
impl TryRng for PointRng {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        Ok((splitmix64(&mut self.state) >> 32) as u32)
    }

    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        Ok(splitmix64(&mut self.state))
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> Result<(), Infallible> {
        for chunk in dst.chunks_mut(8) {
            let bytes = splitmix64(&mut self.state).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
        Ok(())
    }
}

/// One Poisson draw keyed by (seed, scenario, index). `lambda <= 0` yields 0
/// counts (an exactly dark point has no distribution to sample).
pub fn poisson_count(seed: u64, scenario: &str, index: u64, lambda: f64) -> u64 {
    assert!(lambda.is_finite(), "Poisson mean must be finite, got {lambda}");
    if lambda <= 0.0 {
        return 0;
    }
    let mut rng = PointRng::new(seed, scenario, index);
    let draw: f64 = Poisson::new(lambda)
        .expect("positive finite lambda")
        .sample(&mut rng);
    draw as u64
}
