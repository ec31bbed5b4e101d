use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embedding::{normalize_backward, CropEmbedder, Embedding};
use super::loss::{point_info_nce_grad, ContrastiveBatch, Denominator, PairTerm, DEFAULT_TAU};
use super::mining::{MinedSet, Sample};
use crate::crop::{Crop, WALL_PX};
use crate::error::{ensure, Error, Result};
use crate::floorplan::FanSpec;

/// Texture ids at or above this share the last histogram bucket.
pub const TEXTURE_BUCKETS: usize = 16;

/// Fixed, non-trainable crop features fed to the linear map. Every mode ends
/// with a constant bias term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CropFeatureSpec {
    /// `pool × pool` wall-fraction grid plus a crop-wide texture histogram.
    Pooled { pool: usize },
    /// A ray fan cast from the crop center: depths clipped at `clip_m` and
    /// rescaled to `[-1, 1]`, plus the histogram of textures the rays reach.
    RayProfile { fan: FanSpec, clip_m: f64 },
}

impl Default for CropFeatureSpec {
    fn default() -> Self {
        CropFeatureSpec::RayProfile {
            fan: FanSpec::default(),
            clip_m: 2.5,
        }
    }
}

impl CropFeatureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CropFeatureSpec::Pooled { pool } => ensure!(*pool >= 1, Config, "feature pooling must be at least 1"),
            CropFeatureSpec::RayProfile { fan, clip_m } => {
                fan.validate()?;
                ensure!(
                    clip_m.is_finite() && *clip_m > 0.0,
                    Config,
                    "clip distance must be positive, got {clip_m}"
                );
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        let body = match self {
            CropFeatureSpec::Pooled { pool } => pool * pool,
            CropFeatureSpec::RayProfile { fan, .. } => fan.n_rays,
        };
        body + TEXTURE_BUCKETS + 1
    }

    pub fn features(&self, crop: &Crop) -> Result<Vec<f64>> {
        let mut f = Vec::with_capacity(self.n_features());
        let mut buckets = [0usize; TEXTURE_BUCKETS];
        let total = match self {
            CropFeatureSpec::Pooled { pool } => {
                let p = *pool;
                let s = crop.size;
                f.resize(p * p, 0.0);
                let mut counts = vec![0usize; p * p];
                for v in 0..s {
                    let bv = v * p / s;
                    for u in 0..s {
                        let b = bv * p + u * p / s;
                        counts[b] += 1;
                        if crop.at(0, u, v) == WALL_PX {
                            f[b] += 1.0;
                        }
                    }
                }
                for (x, n) in f.iter_mut().zip(&counts) {
                    if *n > 0 {
                        *x /= *n as f64;
                    }
                }
                if crop.channels > 1 {
                    for &t in crop.channel(1) {
                        buckets[(t as usize).min(TEXTURE_BUCKETS - 1)] += 1;
                    }
                }
                s * s
            }
            CropFeatureSpec::RayProfile { fan, clip_m } => {
                for (d, t) in crop.cast_fan(fan, *clip_m)? {
                    f.push((d.min(*clip_m) / clip_m - 0.5) * 2.0);
                    buckets[(t as usize).min(TEXTURE_BUCKETS - 1)] += 1;
                }
                fan.n_rays
            }
        };
        f.extend(buckets.iter().map(|&n| n as f64 / total as f64));
        f.push(1.0);
        Ok(f)
    }
}

/// Geometry-side embedder: `normalize(W · features(crop))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCropEmbedder {
    pub features: CropFeatureSpec,
    pub dim: usize,
    /// Row-major `dim × features.n_features()` weights.
    pub weights: Vec<f64>,
}

impl LinearCropEmbedder {
    /// Gaussian initialization scaled by `1/√F`.
    pub fn init(features: CropFeatureSpec, dim: usize, seed: u64) -> Result<Self> {
        ensure!(dim >= 2, Config, "embedding dimension must be at least 2, got {dim}");
        features.validate()?;
        let f = features.n_features();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (f as f64).sqrt();
        let weights = (0..dim * f)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Ok(Self { features, dim, weights })
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.weights.chunks(x.len()).map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum()).collect()
    }

    pub fn embed_features(&self, x: &[f64]) -> Result<Embedding> {
        Embedding::normalized(self.project(x))
    }
}

impl CropEmbedder for LinearCropEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_crop(&self, crop: &Crop) -> Result<Embedding> {
        self.embed_features(&self.features.features(crop)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Heavy-ball momentum coefficient; 0 gives plain gradient descent.
    pub momentum: f64,
    pub temperature: f64,
    pub denominator: Denominator,
    pub features: CropFeatureSpec,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 1000,
            learning_rate: 0.5,
            momentum: 0.9,
            temperature: DEFAULT_TAU,
            // the as-printed form has no lower bound once negatives are
            // pushed away, and stops separating positives from each other
            denominator: Denominator::WithPositive,
            features: CropFeatureSpec::default(),
            seed: 0,
        }
    }
}

/// One anchor's frozen visual embedding and its mined crops.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub anchor: Embedding,
    pub mined: MinedSet,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub embedder: LinearCropEmbedder,
    /// Mean loss per anchor, evaluated before each update, plus the final value.
    pub loss_trace: Vec<f64>,
}

struct Featurized {
    anchors: Vec<Vec<f64>>,
    positives: Vec<Vec<f64>>,
    pos_negatives: Vec<Vec<f64>>,
    ori_negatives: Vec<Vec<f64>>,
    terms: Vec<PairTerm>,
}

fn featurize(examples: &[TrainingExample], spec: &CropFeatureSpec) -> Result<Featurized> {
    let feats = |samples: &[Sample]| -> Result<Vec<Vec<f64>>> {
        samples.par_iter().map(|s| spec.features(&s.crop)).collect()
    };
    let mut out = Featurized {
        anchors: Vec::new(),
        positives: Vec::new(),
        pos_negatives: Vec::new(),
        ori_negatives: Vec::new(),
        terms: Vec::new(),
    };
    for (i, ex) in examples.iter().enumerate() {
        out.anchors.push(ex.anchor.as_slice().to_vec());
        out.positives.push(spec.features(&ex.mined.positive.crop)?);
        let p0 = out.pos_negatives.len();
        out.pos_negatives.extend(feats(&ex.mined.pos_negatives)?);
        let o0 = out.ori_negatives.len();
        out.ori_negatives.extend(feats(&ex.mined.ori_negatives)?);
        out.terms.push(PairTerm {
            anchor: i,
            positive: i,
            pos_negatives: (p0..out.pos_negatives.len()).collect(),
            ori_negatives: (o0..out.ori_negatives.len()).collect(),
        });
    }
    Ok(out)
}

/// Full-batch training of the geometry-side linear embedder against frozen
/// visual-side anchors.
pub fn train_linear_embedder(examples: &[TrainingExample], spec: &TrainSpec) -> Result<TrainingOutcome> {
    ensure!(!examples.is_empty(), Config, "training needs at least one example");
    ensure!(
        examples
            .iter()
            .all(|e| !e.mined.pos_negatives.is_empty() || !e.mined.ori_negatives.is_empty()),
        Config,
        "every training example needs at least one negative"
    );
    ensure!(
        spec.learning_rate.is_finite() && spec.learning_rate >= 0.0,
        Config,
        "learning rate must be non-negative"
    );
    let e_dim = examples[0].anchor.dim();
    ensure!(
        examples.iter().all(|e| e.anchor.dim() == e_dim) && e_dim == spec.dim,
        Config,
        "anchor embeddings must all have dimension {}",
        spec.dim
    );

    let mut model = LinearCropEmbedder::init(spec.features.clone(), spec.dim, spec.seed)?;
    let data = featurize(examples, &spec.features)?;
    let n_feat = spec.features.n_features();
    let scale = 1.0 / examples.len() as f64;
    let mut velocity = vec![0.0; model.weights.len()];
    let mut trace = Vec::with_capacity(spec.epochs + 1);

    for epoch in 0..=spec.epochs {
        let project_all = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> { xs.iter().map(|x| model.project(x)).collect() };
        let raw_pos = project_all(&data.positives);
        let raw_pn = project_all(&data.pos_negatives);
        let raw_on = project_all(&data.ori_negatives);
        // a projection that overflows or collapses counts as divergence
        let unit = |raw: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
            raw.iter()
                .map(|z| {
                    Embedding::normalized(z.clone())
                        .map(Embedding::into_vec)
                        .map_err(|_| Error::TrainingFailure { epoch, loss: f64::NAN })
                })
                .collect()
        };
        let batch = ContrastiveBatch {
            anchors: data.anchors.clone(),
            positives: unit(&raw_pos)?,
            pos_negatives: unit(&raw_pn)?,
            ori_negatives: unit(&raw_on)?,
            terms: data.terms.clone(),
            temperature: spec.temperature,
        };
        let (loss, grad) = point_info_nce_grad(&batch, spec.denominator)?;
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure { epoch, loss });
        }
        trace.push(loss);
        if epoch == spec.epochs {
            break;
        }

        let mut gw = vec![0.0; model.weights.len()];
        let groups = [
            (&raw_pos, &grad.positives, &data.positives),
            (&raw_pn, &grad.pos_negatives, &data.pos_negatives),
            (&raw_on, &grad.ori_negatives, &data.ori_negatives),
        ];
        for (raws, grads, feats) in groups {
            for ((z, g), x) in raws.iter().zip(grads).zip(feats) {
                let dz = normalize_backward(z, g);
                for (row, d) in gw.chunks_mut(n_feat).zip(&dz) {
                    for (w, xi) in row.iter_mut().zip(x) {
                        *w += d * xi;
                    }
                }
            }
        }
        for ((w, v), g) in model.weights.iter_mut().zip(&mut velocity).zip(&gw) {
            *v = spec.momentum * *v - spec.learning_rate * scale * g;
            *w += *v;
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingFailure {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    Ok(TrainingOutcome {
        embedder: model,
        loss_trace: trace,
    })
}

/// Fraction of examples whose positive crop outscores every other candidate.
///
/// Candidates for example `i` are its own positive and negatives, topped up
/// with other examples' positives until `n_candidates` are reached.
pub fn retrieval_accuracy(
    embedder: &dyn CropEmbedder,
    examples: &[TrainingExample],
    n_candidates: usize,
) -> Result<f64> {
    ensure!(!examples.is_empty(), EmptyDomain, "no examples to evaluate");
    let positives: Vec<Embedding> = examples
        .iter()
        .map(|e| embedder.embed_crop(&e.mined.positive.crop))
        .collect::<Result<_>>()?;
    let mut hits = 0usize;
    for (i, ex) in examples.iter().enumerate() {
        let target = ex.anchor.dot(&positives[i])?;
        let mut rivals = Vec::with_capacity(n_candidates);
        for s in ex.mined.pos_negatives.iter().chain(&ex.mined.ori_negatives) {
            if rivals.len() + 1 >= n_candidates {
                break;
            }
            rivals.push(ex.anchor.dot(&embedder.embed_crop(&s.crop)?)?);
        }
        let mut j = (i + 1) % examples.len();
        while rivals.len() + 1 < n_candidates && j != i {
            rivals.push(ex.anchor.dot(&positives[j])?);
            j = (j + 1) % examples.len();
        }
        if rivals.iter().all(|&r| target > r) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::Pose;
    use crate::contrastive::mining::Role;

    fn crop_with(fill: impl Fn(usize, usize) -> (u8, u8)) -> Crop {
        let s = 20;
        let mut pixels = vec![0u8; 2 * s * s];
        for v in 0..s {
            for u in 0..s {
                let (o, t) = fill(u, v);
                pixels[v * s + u] = o;
                pixels[s * s + v * s + u] = t;
            }
        }
        Crop {
            size: s,
            channels: 2,
            pixels,
            meters_per_px: 0.25,
            source_pose: Pose::new(0.0, 0.0, 0.0),
        }
    }

    fn sample(role: Role, crop: Crop) -> Sample {
        Sample {
            role,
            map: 0,
            pose: crop.source_pose,
            crop,
        }
    }

    fn toy_examples() -> Vec<TrainingExample> {
        let mut out = Vec::new();
        for k in 0..4u8 {
            let side = k as usize;
            let wall = move |u: usize, v: usize| match side {
                0 => v < 3,
                1 => u >= 17,
                2 => v >= 17,
                _ => u < 3,
            };
            let positive = crop_with(|u, v| (wall(u, v) as u8, 1 + k % 2));
            let flipped = positive.rotated_quarters(2);
            let other = crop_with(|u, v| (wall(u, v) as u8, 2 - k % 2));
            let mut a = vec![0.0; 4];
            a[side] = 1.0;
            out.push(TrainingExample {
                anchor: Embedding::from_unit(a).unwrap(),
                mined: MinedSet {
                    anchor: k as usize,
                    positive: sample(Role::Positive, positive),
                    pos_negatives: vec![sample(Role::InnerNeg, other)],
                    ori_negatives: vec![sample(Role::OriNeg, flipped)],
                },
            });
        }
        out
    }

    #[test]
    fn features_shape() {
        let spec = CropFeatureSpec::Pooled { pool: 4 };
        let c = crop_with(|u, _| ((u < 10) as u8, 3));
        let f = spec.features(&c).unwrap();
        assert_eq!(f.len(), 16 + TEXTURE_BUCKETS + 1);
        assert_eq!(&f[..4], &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(f[16 + 3], 1.0);
        assert_eq!(*f.last().unwrap(), 1.0);
    }

    #[test]
    fn ray_profile_reads_wall_ahead() {
        let spec = CropFeatureSpec::default();
        let CropFeatureSpec::RayProfile { fan, .. } = &spec else { unreachable!() };
        let n = fan.n_rays;
        // wall rows 0..3 sit 1.75 m ahead of the center
        let f = spec.features(&crop_with(|_, v| ((v < 3) as u8, 3))).unwrap();
        assert_eq!(f.len(), spec.n_features());
        let nearest = f[..n].iter().copied().fold(f64::INFINITY, f64::min);
        assert!((nearest - 0.4).abs() < 0.05, "{nearest}");
        assert!(f[..n].iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(f[n + 3], 1.0);
        assert_eq!(f[n + TEXTURE_BUCKETS], 1.0);
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let ex = toy_examples();
        let spec = TrainSpec {
            dim: 4,
            epochs: 5,
            learning_rate: 0.0,
            features: CropFeatureSpec::Pooled { pool: 4 },
            ..TrainSpec::default()
        };
        let out = train_linear_embedder(&ex, &spec).unwrap();
        let init = LinearCropEmbedder::init(spec.features.clone(), 4, spec.seed).unwrap();
        assert_eq!(out.embedder, init);
        assert_eq!(out.loss_trace.len(), 6);
        assert!(out.loss_trace.iter().all(|&l| l == out.loss_trace[0]));
    }

    #[test]
    fn training_reduces_loss_and_retrieves() {
        let ex = toy_examples();
        let spec = TrainSpec {
            dim: 4,
            epochs: 200,
            features: CropFeatureSpec::Pooled { pool: 4 },
            ..TrainSpec::default()
        };
        let out = train_linear_embedder(&ex, &spec).unwrap();
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
        assert_eq!(retrieval_accuracy(&out.embedder, &ex, 4).unwrap(), 1.0);
    }

    #[test]
    fn training_errors() {
        let mut ex = toy_examples();
        let spec = TrainSpec {
            dim: 4,
            features: CropFeatureSpec::Pooled { pool: 4 },
            ..TrainSpec::default()
        };
        assert!(matches!(train_linear_embedder(&[], &spec), Err(Error::Config(_))));
        ex[0].mined.pos_negatives.clear();
        ex[0].mined.ori_negatives.clear();
        assert!(matches!(train_linear_embedder(&ex, &spec), Err(Error::Config(_))));
        let ex = toy_examples();
        let wild = TrainSpec {
            learning_rate: 1e300,
            momentum: 0.0,
            ..spec.clone()
        };
        assert!(matches!(
            train_linear_embedder(&ex, &wild),
            Err(Error::TrainingFailure { .. })
        ));
    }
}
