use serde::{Deserialize, Serialize};

use super::ProviderError;

/// Dimension of scripted (hashed) embeddings.
pub const SCRIPTED_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "embedding has zero dimensions".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidRequest(
                "embedding contains non-finite values".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either vector is zero or dimensions differ.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.dimension() != b.dimension() {
        return 0.0;
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Lowercased alphanumeric tokens; punctuation separates and is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag-of-tokens hashed into `dimension` buckets and L2-normalized. Word
/// order does not matter.
pub fn hash_embedding(
    text: &str,
    seed: u64,
    dimension: usize,
) -> Result<EmbeddingVector, ProviderError> {
    if dimension == 0 {
        return Err(ProviderError::InvalidRequest(
            "dimension must be positive".into(),
        ));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ProviderError::InvalidRequest(
            "text has no tokens to embed".into(),
        ));
    }
    let mut values = vec![0.0; dimension];
    for token in &tokens {
        values[(fnv1a(seed, token.as_bytes()) % dimension as u64) as usize] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    EmbeddingVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_lowercased_and_stripped() {
        assert_eq!(
            tokenize("Which routes, serve Bologna?"),
            vec!["which", "routes", "serve", "bologna"]
        );
    }

    #[test]
    fn identical_text_has_unit_self_similarity() {
        let a = hash_embedding("How many routes does TPER run?", 42, SCRIPTED_DIMENSION).unwrap();
        let b = hash_embedding("How many routes does TPER run?", 42, SCRIPTED_DIMENSION).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_order_does_not_matter() {
        let a = hash_embedding("routes serving Bologna", 7, 64).unwrap();
        let b = hash_embedding("Bologna serving routes", 7, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn punctuation_only_text_is_rejected() {
        assert!(hash_embedding("?!", 1, 8).is_err());
        assert!(hash_embedding("", 1, 8).is_err());
    }
}
