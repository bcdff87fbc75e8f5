use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream tags into an independent seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(base: u64, tags: &[u64]) -> SeededRng {
    SeededRng::seed_from_u64(derive_seed(base, tags))
}

// Stream tags keep independent consumers of one run seed apart.
pub(crate) mod stream {
    pub const RESET: u64 = 1;
    pub const STEP: u64 = 2;
    pub const PROMPT: u64 = 3;
    pub const NEGATIVES: u64 = 4;
    pub const SAMPLING: u64 = 5;
    pub const JUDGE_INIT: u64 = 6;
    pub const JUDGE_TRAIN: u64 = 7;
    pub const AGENT_INIT: u64 = 8;
    pub const AGENT_NOISE: u64 = 9;
    pub const REPLAY: u64 = 10;
    pub const FIXED_SET: u64 = 11;
    pub const RANDOM_AGENT: u64 = 12;
    pub const GRADIENT_PROBE: u64 = 13;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_separate_streams() {
        assert_ne!(derive_seed(7, &[1]), derive_seed(7, &[2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }
}
