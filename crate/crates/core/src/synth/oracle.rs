use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::observe::{ObservationSignature, TEXTURE_BINS};
use crate::contrastive::{CropEmbedder, Embedding, SignatureEmbedder};
use crate::crop::Crop;
use crate::error::{ensure, Error, Result};
use crate::floorplan::FanSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleEmbedderSpec {
    pub dim: usize,
    pub seed: u64,
    /// Depths are clipped here on both sides; at most half the crop side.
    pub clip_m: f64,
    /// Weight of the texture histogram relative to the depth block.
    pub texture_weight: f64,
    pub fan: FanSpec,
}

impl Default for OracleEmbedderSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            seed: 0,
            clip_m: 2.5,
            texture_weight: 2.0,
            fan: FanSpec::default(),
        }
    }
}

/// Reference embedder for both sides: a ray fan clipped to `clip_m` plus a
/// texture histogram, pushed through one shared seeded Gaussian projection.
/// Crops are read by re-casting the fan inside the crop raster.
#[derive(Debug, Clone)]
pub struct OracleEmbedder {
    spec: OracleEmbedderSpec,
    projection: Vec<f64>,
}

impl OracleEmbedder {
    pub fn new(spec: OracleEmbedderSpec) -> Result<Self> {
        spec.fan.validate()?;
        ensure!(spec.dim >= 1, Config, "oracle embedding dimension must be positive");
        ensure!(
            spec.clip_m.is_finite() && spec.clip_m > 0.0,
            Config,
            "clip distance must be positive, got {}",
            spec.clip_m
        );
        ensure!(
            spec.texture_weight.is_finite() && spec.texture_weight >= 0.0,
            Config,
            "texture weight must be non-negative"
        );
        let n = spec.dim * (spec.fan.n_rays + TEXTURE_BINS);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let projection = (0..n)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Ok(Self { spec, projection })
    }

    pub fn spec(&self) -> &OracleEmbedderSpec {
        &self.spec
    }

    fn features(&self, depths: &[f64], hist: &[u32]) -> Vec<f64> {
        let clip = self.spec.clip_m;
        let total: u32 = hist.iter().sum();
        let mut f: Vec<f64> = depths.iter().map(|&d| (d.min(clip) / clip - 0.5) * 2.0).collect();
        f.extend(hist.iter().map(|&h| {
            if total == 0 {
                0.0
            } else {
                self.spec.texture_weight * h as f64 / total as f64
            }
        }));
        f
    }

    fn embed_features(&self, f: &[f64]) -> Result<Embedding> {
        let z: Vec<f64> = self
            .projection
            .chunks(f.len())
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect();
        Embedding::normalized(z).map_err(|_| {
            Error::DegenerateEmbedding(format!(
                "oracle projection (seed {}) mapped the input to zero; choose another seed",
                self.spec.seed
            ))
        })
    }

    /// Depths and texture histogram read off a crop, as the signature side sees them.
    pub fn crop_view(&self, crop: &Crop) -> Result<(Vec<f64>, Vec<u32>)> {
        let mut hist = vec![0u32; TEXTURE_BINS];
        let depths = crop
            .cast_fan(&self.spec.fan, self.spec.clip_m)?
            .into_iter()
            .map(|(d, t)| {
                hist[t as usize] += 1;
                d
            })
            .collect();
        Ok((depths, hist))
    }
}

impl SignatureEmbedder for OracleEmbedder {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed_signature(&self, signature: &ObservationSignature) -> Result<Embedding> {
        ensure!(
            signature.depths.len() == self.spec.fan.n_rays && signature.texture_histogram.len() == TEXTURE_BINS,
            Validation,
            "signature has {} rays and {} texture bins, embedder expects {} and {TEXTURE_BINS}",
            signature.depths.len(),
            signature.texture_histogram.len(),
            self.spec.fan.n_rays
        );
        self.embed_features(&self.features(&signature.depths, &signature.texture_histogram))
    }
}

impl CropEmbedder for OracleEmbedder {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed_crop(&self, crop: &Crop) -> Result<Embedding> {
        let (d, h) = self.crop_view(crop)?;
        self.embed_features(&self.features(&d, &h))
    }
}
