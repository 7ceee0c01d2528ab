//! Seeded randomness shared by task generation, policies and distractors.
//!
//! The streams are fixed bit-for-bit and reproducible in other languages.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const FNV64_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV64_PRIME: u64 = 0x0000_0100_0000_01B3;
const FNV32_OFFSET: u32 = 0x811C_9DC5;
const FNV32_PRIME: u32 = 0x0100_0193;

const ALPHANUMERIC: &[u8; 62] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

/// SplitMix64 generator (Steele, Lea & Flood constants).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `0..bound` by the multiply-high reduction
    /// `(x * bound) >> 64`. `bound` must be non-zero.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform index into a collection of `len` items.
    #[inline]
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Inclusive range draw.
    pub fn range_inclusive(&mut self, low: usize, high: usize) -> usize {
        debug_assert!(low <= high);
        low + self.index(high - low + 1)
    }

    /// Random alphanumeric token with a length drawn from `min_len..=max_len`.
    /// The length is drawn first, then one character per position.
    pub fn token(&mut self, min_len: usize, max_len: usize) -> String {
        let len = self.range_inclusive(min_len, max_len);
        self.token_of_len(len)
    }

    pub fn token_of_len(&mut self, len: usize) -> String {
        (0..len)
            .map(|_| ALPHANUMERIC[self.index(ALPHANUMERIC.len())] as char)
            .collect()
    }

    /// Capitalised alphabetic word, used where the text should read as a name.
    pub fn name(&mut self, min_len: usize, max_len: usize) -> String {
        const LOWER: &[u8; 26] = b"abcdefghijklmnopqrstuvwxyz";
        let len = self.range_inclusive(min_len, max_len);
        (0..len)
            .map(|i| {
                let c = LOWER[self.index(LOWER.len())] as char;
                if i == 0 {
                    c.to_ascii_uppercase()
                } else {
                    c
                }
            })
            .collect()
    }

    /// Reservoir sampling (Algorithm R) of `k` indices out of `0..n`.
    ///
    /// The first `k` indices fill the reservoir; for each later index `i`
    /// one draw `j = below(i + 1)` is consumed and `j < k` replaces slot `j`.
    pub fn reservoir(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut picked: Vec<usize> = (0..k).collect();
        for i in k..n {
            let j = self.index(i + 1);
            if j < k {
                picked[j] = i;
            }
        }
        picked
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV64_OFFSET, |hash, &b| {
        (hash ^ b as u64).wrapping_mul(FNV64_PRIME)
    })
}

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV32_OFFSET, |hash, &b| {
        (hash ^ b as u32).wrapping_mul(FNV32_PRIME)
    })
}

/// Seed for the episode stream: `base_seed ^ fnv1a64(task_name) ^ index`.
pub fn episode_seed(base_seed: u64, task_name: &str, episode_index: u64) -> u64 {
    base_seed ^ fnv1a64(task_name.as_bytes()) ^ episode_index
}

/// Generator for one episode of one task.
pub fn episode_rng(base_seed: u64, task_name: &str, episode_index: u64) -> SplitMix64 {
    SplitMix64::new(episode_seed(base_seed, task_name, episode_index))
}
