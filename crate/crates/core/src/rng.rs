//! Counter-based Gaussian streams.
//!
//! Each `(seed, chain_id)` pair selects an independent ChaCha20 keystream:
//! the key is derived from `seed` via `SeedableRng::seed_from_u64` and
//! `chain_id` is the 64-bit ChaCha stream number. The position inside the
//! stream is the `counter`, measured in 64-bit words consumed.
//!
//! Gaussians come from the Box–Muller transform. Each pair of
//! normals consumes exactly two words:
//!
//! ```text
//! u1 = ((w1 >> 11) + 1) * 2^-53      in (0, 1]
//! u2 =  (w2 >> 11)      * 2^-53      in [0, 1)
//! z0 = sqrt(-2 ln u1) * cos(2π u2)
//! z1 = sqrt(-2 ln u1) * sin(2π u2)
//! ```
//!
//! A request for `n` normals advances the counter by `2 * ceil(n / 2)`; for
//! odd `n` the trailing `z1` is discarded.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Identifier recorded in run metadata. Bump the suffix if the transform changes.
pub const RNG_ID: &str = "chacha20-stream/box-muller-pair/v1";

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    chain_id: u64,
    counter: u64,
    core: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, chain_id: u64) -> Self {
        Self::at(seed, chain_id, 0)
    }

    /// Reconstruct a stream positioned after `counter` words.
    pub fn at(seed: u64, chain_id: u64, counter: u64) -> Self {
        let mut core = ChaCha20Rng::seed_from_u64(seed);
        core.set_stream(chain_id);
        core.set_word_pos(2 * counter as u128);
        Self {
            seed,
            chain_id,
            counter,
            core,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain_id(&self) -> u64 {
        self.chain_id
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent sub-stream for shard `index`, sharing the seed.
    pub fn substream(&self, index: u64) -> RandomStream {
        RandomStream::new(self.seed, mix_chain(self.chain_id, index))
    }

    fn next_word(&mut self) -> u64 {
        self.counter += 1;
        self.core.next_u64()
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = ((self.next_word() >> 11) + 1) as f64 * INV_2_53;
        let u2 = (self.next_word() >> 11) as f64 * INV_2_53;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fill `out` with standard normals.
    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    pub fn gaussian(&mut self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.fill_gaussian(&mut out);
        out
    }
}

/// Draw `n` standard normals from `stream`.
pub fn gaussian_draw(stream: &mut RandomStream, n: usize) -> Vec<f64> {
    stream.gaussian(n)
}

// splitmix64 finaliser over the (chain, index) pair
fn mix_chain(chain_id: u64, index: u64) -> u64 {
    let mut z = chain_id
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
