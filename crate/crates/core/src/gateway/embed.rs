/// Offline text embedder: signed feature hashing over lowercase word tokens.
///
/// Texts that share content words get a positive dot product; texts with no
/// words in common are orthogonal unless two tokens collide in a bucket.
/// Output depends only on `(text, dimension, seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

pub const DEFAULT_DIMENSION: usize = 32;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "do", "for", "from", "has", "have", "i", "in", "is", "it", "its",
    "me", "my", "of", "on", "or", "our", "should", "so", "that", "the", "their", "there", "this", "to", "was", "we",
    "what", "with", "you", "your",
];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, 0)
    }
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn tokens(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| !STOPWORDS.contains(&t.as_str()))
            .collect()
    }

    /// Unnormalized hashed counts. Never all-zero for non-empty input.
    pub fn raw(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in Self::tokens(text) {
            let h = fnv1a(self.seed, token.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dimension as u64) as usize] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            let h = fnv1a(self.seed, text.as_bytes());
            v[(h % self.dimension as u64) as usize] = 1.0;
        }
        v
    }
}
