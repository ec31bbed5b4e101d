//! Candidate re-ranking: observation-to-crop similarities become a softmax
//! distribution over the top candidates, which is blended with the
//! depth-based scores to pick the final pose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::{CropEmbedder, Embedding, SignatureEmbedder};
use crate::crop::{extract_crops, CropSpec};
use crate::error::{ensure, Error, Result};
use crate::floorplan::{FanSpec, FloorPlan, Pose};
use crate::pose_scoring::{top_x, CandidateSet, GtRayTable, PoseGrid, PoseGridSpec, ProbMap, DEFAULT_TOP_X};
use crate::synth::ObservationSignature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisambigConfig {
    /// Weight of the similarity distribution; 0 keeps the depth ranking.
    pub w: f64,
    pub softmax_temperature: f64,
    /// Number of candidates taken from the depth-based map.
    pub x: usize,
}

impl Default for DisambigConfig {
    fn default() -> Self {
        Self {
            w: 0.5,
            softmax_temperature: 1.0,
            x: DEFAULT_TOP_X,
        }
    }
}

impl DisambigConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!((0.0..=1.0).contains(&self.w), Validation, "w must lie in [0, 1], got {}", self.w);
        ensure!(
            self.softmax_temperature.is_finite() && self.softmax_temperature > 0.0,
            Validation,
            "softmax temperature must be positive, got {}",
            self.softmax_temperature
        );
        ensure!(self.x >= 1, Validation, "candidate count must be at least 1");
        Ok(())
    }
}

/// `softmax(scores / temperature)`, computed with a max shift.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    ensure!(!scores.is_empty(), EmptyDomain, "softmax over an empty list");
    ensure!(
        temperature.is_finite() && temperature > 0.0,
        Validation,
        "temperature must be positive, got {temperature}"
    );
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - m) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Similarity distribution of the query against each candidate crop.
pub fn build_dpm(query: &Embedding, crops: &[Embedding], temperature: f64) -> Result<Vec<f64>> {
    if crops.is_empty() {
        return Err(Error::EmptyDomain("no candidate crops".into()));
    }
    let sims = crops.iter().map(|c| query.dot(c)).collect::<Result<Vec<_>>>()?;
    softmax(&sims, temperature)
}

/// Depth scores restricted to the candidates and renormalized to sum to 1.
pub fn candidate_dafpm(candidates: &CandidateSet) -> Result<Vec<f64>> {
    let total: f64 = candidates.iter().map(|c| c.score).sum();
    ensure!(total > 0.0, EmptyDomain, "candidate scores sum to zero");
    Ok(candidates.iter().map(|c| c.score / total).collect())
}

/// Blend `(1 − w)·dafpm + w·dpm` over the candidates and pick the best.
///
/// Ties go to the earlier candidate, i.e. the one ranked higher by depth score
/// and then by lower grid index. Returns the winning position and fused scores.
pub fn fuse(candidates: &CandidateSet, dpm: &[f64], w: f64) -> Result<(usize, Vec<f64>)> {
    ensure!(
        dpm.len() == candidates.len(),
        Validation,
        "dpm has {} entries for {} candidates",
        dpm.len(),
        candidates.len()
    );
    ensure!((0.0..=1.0).contains(&w), Validation, "w must lie in [0, 1], got {w}");
    let base = candidate_dafpm(candidates)?;
    let fused: Vec<f64> = base.iter().zip(dpm).map(|(d, p)| (1.0 - w) * d + w * p).collect();
    let mut best = 0;
    for (i, &f) in fused.iter().enumerate() {
        if f > fused[best] {
            best = i;
        }
    }
    Ok((best, fused))
}

/// [`fuse`] under a full config, returning the selected pose.
pub fn fuse_and_select(candidates: &CandidateSet, dpm: &[f64], config: &DisambigConfig) -> Result<(Pose, Vec<f64>)> {
    config.validate()?;
    let (best, fused) = fuse(candidates, dpm, config.w)?;
    Ok((candidates.candidates[best].pose, fused))
}

/// Frozen visual-side and geometry-side encoders used together at query time.
#[derive(Clone, Copy)]
pub struct EmbedderPair<'a> {
    pub visual: &'a dyn SignatureEmbedder,
    pub geometry: &'a dyn CropEmbedder,
}

/// Every intermediate of one localization query.
#[derive(Debug, Clone)]
pub struct Localization {
    pub pose: Pose,
    pub dafpm: ProbMap,
    pub candidates: CandidateSet,
    /// Cosine similarity of the query to each candidate crop.
    pub similarities: Vec<f64>,
    pub dpm: Vec<f64>,
    pub fused: Vec<f64>,
}

impl Localization {
    /// Re-run only the fusion step with another weight.
    pub fn refuse(&self, w: f64) -> Result<(Pose, Vec<f64>)> {
        let (best, fused) = fuse(&self.candidates, &self.dpm, w)?;
        Ok((self.candidates.candidates[best].pose, fused))
    }
}

/// A map with its precomputed ground-truth fans, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct Localizer<'m> {
    map: &'m FloorPlan,
    table: GtRayTable,
    sigma: f64,
    crop: CropSpec,
}

impl<'m> Localizer<'m> {
    pub fn new(map: &'m FloorPlan, grid: &PoseGridSpec, fan: &FanSpec, sigma: f64, crop: CropSpec) -> Result<Self> {
        let table = GtRayTable::build(map, PoseGrid::new(map, grid)?, fan)?;
        Ok(Self { map, table, sigma, crop })
    }

    pub fn table(&self) -> &GtRayTable {
        &self.table
    }

    pub fn map(&self) -> &FloorPlan {
        self.map
    }

    /// Change the crop geometry without recasting the ground-truth fans.
    pub fn set_crop(&mut self, crop: CropSpec) {
        self.crop = crop;
    }

    pub fn dafpm(&self, pred: &[f64]) -> Result<ProbMap> {
        self.table.score(pred, self.sigma)
    }

    /// Depth-only answer: the single best pose of the depth-based map.
    pub fn localize_depth_only(&self, pred: &[f64]) -> Result<Pose> {
        crate::pose_scoring::argmax_pose(&self.dafpm(pred)?)
    }

    /// Full pipeline: depth map, top-X, crops, similarity distribution, fusion.
    pub fn localize(
        &self,
        pred: &[f64],
        signature: &ObservationSignature,
        embedders: EmbedderPair<'_>,
        config: &DisambigConfig,
    ) -> Result<Localization> {
        config.validate()?;
        let dafpm = self.dafpm(pred)?;
        let candidates = top_x(&dafpm, config.x)?;
        self.finish(dafpm, candidates, signature, embedders, config)
    }

    /// Continue the pipeline from an existing depth map and candidate set.
    pub fn finish(
        &self,
        dafpm: ProbMap,
        candidates: CandidateSet,
        signature: &ObservationSignature,
        embedders: EmbedderPair<'_>,
        config: &DisambigConfig,
    ) -> Result<Localization> {
        ensure!(
            embedders.visual.dim() == embedders.geometry.dim(),
            Validation,
            "visual embedder has dimension {}, geometry embedder {}",
            embedders.visual.dim(),
            embedders.geometry.dim()
        );
        let query = embedders.visual.embed_signature(signature)?;
        let crops = extract_crops(self.map, &candidates.poses(), &self.crop)?;
        let crop_embs = crops
            .par_iter()
            .map(|c| embedders.geometry.embed_crop(c))
            .collect::<Result<Vec<_>>>()?;
        let similarities = crop_embs.iter().map(|c| query.dot(c)).collect::<Result<Vec<_>>>()?;
        let dpm = softmax(&similarities, config.softmax_temperature)?;
        let (pose, fused) = fuse_and_select(&candidates, &dpm, config)?;
        Ok(Localization {
            pose,
            dafpm,
            candidates,
            similarities,
            dpm,
            fused,
        })
    }
}
