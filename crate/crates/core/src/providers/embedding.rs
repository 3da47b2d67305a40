//! Embedding vectors and the deterministic hashed-trigram mock embedder.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use super::ProviderError;

/// Dimension of the mock embedder's vectors.
pub const MOCK_DIMENSION: usize = 256;

/// Cosine similarity value in `[-1, 1]`.
pub type Similarity = f64;

/// Similarities are snapped to a 1e-12 grid so that mathematically equal
/// scores compare equal regardless of summation order.
pub fn quantize(similarity: f64) -> Similarity {
    ((similarity * 1e12).round() / 1e12).clamp(-1.0, 1.0)
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Normalizes `values`; the all-zero vector is rejected.
    pub fn normalized(values: Vec<f64>) -> Result<Self, ProviderError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ProviderError::MalformedResponse(
                "embedding has zero or non-finite norm".into(),
            ));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Quantized cosine similarity. Mismatched dimensions score 0.
    pub fn cosine(&self, other: &Vector) -> Similarity {
        if self.0.len() != other.0.len() {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        quantize(dot / (self.norm() * other.norm()))
    }

    /// Base64 of the little-endian 32-bit float encoding.
    pub fn to_base64_f32(&self) -> String {
        let mut bytes = Vec::with_capacity(self.0.len() * 4);
        for v in &self.0 {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        BASE64.encode(bytes)
    }

    /// Inverse of [`Vector::to_base64_f32`]. Values keep their 32-bit
    /// precision so that re-encoding is byte-identical; the norm is within
    /// f32 rounding of 1.
    pub fn from_base64_f32(encoded: &str) -> Result<Self, ProviderError> {
        let bytes = BASE64
            .decode(encoded)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad base64 embedding: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(ProviderError::MalformedResponse(
                "embedding byte length is not a multiple of 4".into(),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ProviderError::MalformedResponse(
                "stored embedding has zero or non-finite norm".into(),
            ));
        }
        Ok(Self(values))
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vector, ProviderError>;
}

/// Case-folded character trigrams hashed (FNV-1a) into 256 count buckets,
/// then L2-normalized. Inputs shorter than three characters form one gram.
#[derive(Debug, Clone, Default)]
pub struct MockEmbedder {
    latency: Duration,
}

impl MockEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(latency: Duration) -> Self {
        Self { latency }
    }

    /// Raw bucket counts before normalization.
    pub fn counts(text: &str) -> [u32; MOCK_DIMENSION] {
        let folded: Vec<char> = text.trim().to_lowercase().chars().collect();
        let mut counts = [0u32; MOCK_DIMENSION];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            counts[(fnv1a64(s.as_bytes()) % MOCK_DIMENSION as u64) as usize] += 1;
        };
        if folded.len() < 3 {
            add(&folded);
        } else {
            folded.windows(3).for_each(add);
        }
        counts
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        Vector::normalized(Self::counts(text).iter().map(|&c| c as f64).collect())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
