use super::{check_length, EmbedError, Embedder, EmbeddingVector, MIN_DIM};

const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a_64(s: &str) -> u64 {
    s.bytes().fold(FNV_OFFSET_BASIS, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Deterministic hashed-feature embedder.
///
/// Text is lowercased and split into maximal alphanumeric runs. Each token
/// contributes itself plus every character trigram it contains. A feature
/// `f` hashes to `h = fnv1a_64(f)`; it adds `+1` (top bit of `h` clear) or
/// `-1` (top bit set) to bucket `h % dim`. The result is L2-normalized.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_DIM {
            return Err(EmbedError::Config(format!(
                "dim must be at least {MIN_DIM}, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    fn accumulate(&self, feature: &str, buckets: &mut [f64]) {
        let h = fnv1a_64(feature);
        let bucket = (h % self.dim as u64) as usize;
        buckets[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_length(text)?;
        let mut buckets = vec![0.0f64; self.dim];
        let mut trigram = String::new();
        for token in tokens(text) {
            self.accumulate(&token, &mut buckets);
            let chars: Vec<char> = token.chars().collect();
            for window in chars.windows(3) {
                trigram.clear();
                trigram.extend(window);
                self.accumulate(&trigram, &mut buckets);
            }
        }
        Ok(EmbeddingVector::normalized(buckets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_test_vectors() {
        assert_eq!(fnv1a_64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_and_featureless_text_is_zero() {
        let e = ReferenceEmbedder::new(64).unwrap();
        assert!(e.embed("").unwrap().is_zero());
        assert!(e.embed("  ?! -- ").unwrap().is_zero());
    }

    #[test]
    fn single_letter_lands_in_its_bucket() {
        // "a" has one feature (no trigrams); top bit of its hash is set.
        let e = ReferenceEmbedder::new(16).unwrap();
        let v = e.embed("A").unwrap();
        let bucket = (0xaf63dc4c8601ec8cu64 % 16) as usize;
        for (i, &x) in v.as_slice().iter().enumerate() {
            assert_eq!(x, if i == bucket { -1.0 } else { 0.0 });
        }
    }

    #[test]
    fn lowercasing_and_tokenization() {
        let e = ReferenceEmbedder::new(256).unwrap();
        assert_eq!(
            e.embed("Matter, ENERGY").unwrap(),
            e.embed("matter energy").unwrap()
        );
    }

    #[test]
    fn distinct_words_differ() {
        let e = ReferenceEmbedder::new(8).unwrap();
        assert_ne!(e.embed("matter").unwrap(), e.embed("energy").unwrap());
    }

    #[test]
    fn rejects_long_input() {
        let e = ReferenceEmbedder::new(32).unwrap();
        let text = "x".repeat(513);
        assert!(matches!(
            e.embed(&text),
            Err(EmbedError::InputTooLong { len: 513, .. })
        ));
        assert!(e.embed(&"x".repeat(512)).is_ok());
    }

    #[test]
    fn self_cosine_is_one() {
        let e = ReferenceEmbedder::new(256).unwrap();
        let v = e.embed("Photosynthesis converts light energy").unwrap();
        assert!((v.cosine(&v) - 1.0).abs() < 1e-6);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }
}
