use crate::crop::Crop;
use crate::error::{ensure, Error, Result};
use crate::synth::ObservationSignature;

/// Tolerance on the norm of a unit embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalize `v`; fails if it has zero (or non-finite) length.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::DegenerateEmbedding(format!(
                "cannot normalize a vector of length {n}"
            )));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    /// Wrap an already-normalized vector, checking its norm.
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        ensure!(
            (n - 1.0).abs() <= UNIT_NORM_TOLERANCE,
            Validation,
            "embedding norm is {n}, expected 1"
        );
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Cosine similarity, which for unit vectors is the dot product.
    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        ensure!(
            self.dim() == other.dim(),
            Validation,
            "embedding dimensions differ: {} vs {}",
            self.dim(),
            other.dim()
        );
        Ok(dot(&self.0, &other.0))
    }
}

/// Geometry-side encoder: floorplan crop to embedding.
pub trait CropEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_crop(&self, crop: &Crop) -> Result<Embedding>;
}

/// Visual-side encoder: observation to embedding.
pub trait SignatureEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_signature(&self, signature: &ObservationSignature) -> Result<Embedding>;
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Pull a gradient taken at `raw / ‖raw‖` back to `raw`.
pub fn normalize_backward(raw: &[f64], grad_unit: &[f64]) -> Vec<f64> {
    let n = norm(raw);
    let u: Vec<f64> = raw.iter().map(|x| x / n).collect();
    let ug = dot(&u, grad_unit);
    grad_unit.iter().zip(&u).map(|(g, ui)| (g - ui * ug) / n).collect()
}
