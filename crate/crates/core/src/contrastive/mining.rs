use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crop::{extract_crop, Crop, CropSpec};
use crate::error::{ensure, Error, Result};
use crate::floorplan::{FloorPlan, Pose};

/// Maximum draws per sampled pose before giving up.
pub const MAX_RETRIES: usize = 1000;

/// Slack applied to the ground-truth pose when sampling positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSpec {
    pub pos_b_m: f64,
    pub ang_b_rad: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            pos_b_m: 0.5,
            ang_b_rad: 0.26,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningSpec {
    /// Distance band `[lo, hi]` for same-map position negatives.
    pub inner_neg_dist_m: [f64; 2],
    pub ori_neg_rotation_rad: f64,
    pub n_inner: usize,
    pub n_cross: usize,
    pub n_ori: usize,
    pub seed: u64,
}

impl Default for MiningSpec {
    fn default() -> Self {
        Self {
            inner_neg_dist_m: [1.5, 3.0],
            ori_neg_rotation_rad: PI,
            n_inner: 1,
            n_cross: 8,
            n_ori: 1,
            seed: 0,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.pos_b_m >= 0.0 && self.ang_b_rad >= 0.0,
            Validation,
            "perturbation bounds must be non-negative"
        );
        Ok(())
    }
}

impl MiningSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.inner_neg_dist_m;
        ensure!(
            lo >= 0.0 && lo < hi,
            Config,
            "inner negative band must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
        );
        ensure!(
            self.n_inner + self.n_cross + self.n_ori > 0,
            Config,
            "mining must produce at least one negative"
        );
        Ok(())
    }
}

/// Maps plus the ground-truth anchor poses drawn on them.
#[derive(Debug, Clone)]
pub struct MiningDataset {
    pub maps: Vec<FloorPlan>,
    pub anchors: Vec<Anchor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub map: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Positive,
    InnerNeg,
    CrossNeg,
    OriNeg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub role: Role,
    pub map: usize,
    pub pose: Pose,
    pub crop: Crop,
}

/// Everything mined for one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedSet {
    pub anchor: usize,
    pub positive: Sample,
    /// Inner-map negatives first, then cross-map negatives.
    pub pos_negatives: Vec<Sample>,
    pub ori_negatives: Vec<Sample>,
}

fn retry<T>(rng: &mut ChaCha8Rng, what: &str, mut draw: impl FnMut(&mut ChaCha8Rng) -> Option<T>) -> Result<T> {
    for _ in 0..MAX_RETRIES {
        if let Some(v) = draw(rng) {
            return Ok(v);
        }
    }
    Err(Error::MiningExhausted {
        what: what.to_string(),
        attempts: MAX_RETRIES,
    })
}

/// Random stream for one anchor, independent of how anchors are scheduled.
fn anchor_rng(seed: u64, anchor: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(anchor as u64);
    rng
}

/// Mine the positive and both negative families for one anchor.
pub fn mine_samples(
    data: &MiningDataset,
    anchor_index: usize,
    perturb: &PerturbSpec,
    mining: &MiningSpec,
    crop: &CropSpec,
) -> Result<MinedSet> {
    perturb.validate()?;
    mining.validate()?;
    ensure!(!data.maps.is_empty(), Config, "mining dataset has no maps");
    ensure!(
        mining.n_cross == 0 || data.maps.len() >= 2,
        Config,
        "cross-map negatives need at least two maps, dataset has {}",
        data.maps.len()
    );
    let anchor = *data
        .anchors
        .get(anchor_index)
        .ok_or_else(|| Error::Validation(format!("anchor {anchor_index} out of range")))?;
    ensure!(anchor.map < data.maps.len(), Validation, "anchor {anchor_index} names a missing map");
    let map = &data.maps[anchor.map];
    let gt = anchor.pose;
    let mut rng = anchor_rng(mining.seed, anchor_index);
    let sample = |role, m: usize, pose: Pose| -> Result<Sample> {
        Ok(Sample {
            role,
            map: m,
            pose,
            crop: extract_crop(&data.maps[m], &pose, crop)?,
        })
    };

    let positive = retry(&mut rng, "positive", |rng| {
        let dir = rng.random::<f64>() * TAU;
        let mag = rng.random::<f64>() * perturb.pos_b_m;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let dth = sign * rng.random::<f64>() * perturb.ang_b_rad;
        let p = Pose::new(gt.x + mag * dir.cos(), gt.y + mag * dir.sin(), gt.theta + dth);
        map.is_free_at(p.x, p.y).then_some(p)
    })?;
    let positive = sample(Role::Positive, anchor.map, positive)?;

    let [lo, hi] = mining.inner_neg_dist_m;
    let mut pos_negatives = Vec::with_capacity(mining.n_inner + mining.n_cross);
    for _ in 0..mining.n_inner {
        let p = retry(&mut rng, "inner negative", |rng| {
            // area-uniform over the annulus
            let r = (lo * lo + rng.random::<f64>() * (hi * hi - lo * lo)).sqrt();
            let dir = rng.random::<f64>() * TAU;
            let th = rng.random::<f64>() * TAU;
            let p = Pose::new(gt.x + r * dir.cos(), gt.y + r * dir.sin(), th);
            map.is_free_at(p.x, p.y).then_some(p)
        })?;
        pos_negatives.push(sample(Role::InnerNeg, anchor.map, p)?);
    }
    for _ in 0..mining.n_cross {
        let (m, p) = retry(&mut rng, "cross-map negative", |rng| {
            let mut m = rng.random_range(0..data.maps.len() - 1);
            if m >= anchor.map {
                m += 1;
            }
            let other = &data.maps[m];
            let (w, h) = other.extent_m();
            let [ox, oy] = other.origin();
            let p = Pose::new(
                ox + rng.random::<f64>() * w,
                oy + rng.random::<f64>() * h,
                rng.random::<f64>() * TAU,
            );
            other.is_free_at(p.x, p.y).then_some((m, p))
        })?;
        pos_negatives.push(sample(Role::CrossNeg, m, p)?);
    }

    let mut ori_negatives = Vec::with_capacity(mining.n_ori);
    for i in 0..mining.n_ori {
        let jitter = if i == 0 {
            0.0
        } else {
            rng.random_range(-FRAC_PI_2..FRAC_PI_2)
        };
        let p = gt.rotated(mining.ori_neg_rotation_rad + jitter);
        ori_negatives.push(sample(Role::OriNeg, anchor.map, p)?);
    }

    Ok(MinedSet {
        anchor: anchor_index,
        positive,
        pos_negatives,
        ori_negatives,
    })
}

/// Mine every anchor in parallel; the output is independent of thread count.
pub fn mine_all(data: &MiningDataset, perturb: &PerturbSpec, mining: &MiningSpec, crop: &CropSpec) -> Result<Vec<MinedSet>> {
    (0..data.anchors.len())
        .into_par_iter()
        .map(|i| mine_samples(data, i, perturb, mining, crop))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_world, WorldSpec};

    fn dataset(n_maps: u64) -> MiningDataset {
        let mut maps = Vec::new();
        let mut anchors = Vec::new();
        for s in 0..n_maps {
            let w = generate_world(&WorldSpec {
                seed: s,
                n_gt_poses: 10,
                ..WorldSpec::default()
            })
            .unwrap();
            anchors.extend(w.gt_poses.iter().map(|&pose| Anchor {
                map: s as usize,
                pose,
            }));
            maps.push(w.map);
        }
        MiningDataset { maps, anchors }
    }

    #[test]
    fn zero_perturbation_reproduces_gt_crop() {
        let data = dataset(2);
        let perturb = PerturbSpec {
            pos_b_m: 0.0,
            ang_b_rad: 0.0,
        };
        let spec = CropSpec::default();
        let set = mine_samples(&data, 3, &perturb, &MiningSpec::default(), &spec).unwrap();
        let a = data.anchors[3];
        assert_eq!(set.positive.pose, a.pose);
        assert_eq!(set.positive.crop, extract_crop(&data.maps[a.map], &a.pose, &spec).unwrap());
    }

    #[test]
    fn inner_negatives_respect_band() {
        let data = dataset(2);
        let mining = MiningSpec {
            n_inner: 5,
            ..MiningSpec::default()
        };
        let sets = mine_all(&data, &PerturbSpec::default(), &mining, &CropSpec::default()).unwrap();
        for set in &sets {
            let gt = data.anchors[set.anchor].pose;
            let inner: Vec<_> = set.pos_negatives.iter().filter(|s| s.role == Role::InnerNeg).collect();
            assert_eq!(inner.len(), 5);
            for s in inner {
                let d = s.pose.distance_to(&gt);
                assert!((1.5 - 1e-12..=3.0 + 1e-12).contains(&d), "{d}");
                assert_eq!(s.map, data.anchors[set.anchor].map);
            }
            let cross = set.pos_negatives.iter().filter(|s| s.role == Role::CrossNeg);
            assert!(cross.clone().count() == 8);
            assert!(cross.into_iter().all(|s| s.map != data.anchors[set.anchor].map));
            let pd = set.positive.pose.distance_to(&gt);
            assert!(pd < 0.5);
        }
    }

    #[test]
    fn half_turn_negative_is_rotated_crop() {
        let data = dataset(2);
        let spec = CropSpec::default();
        let perturb = PerturbSpec {
            pos_b_m: 0.0,
            ang_b_rad: 0.0,
        };
        for i in 0..data.anchors.len() {
            let set = mine_samples(&data, i, &perturb, &MiningSpec::default(), &spec).unwrap();
            assert_eq!(set.ori_negatives[0].crop.pixels, set.positive.crop.rotated_quarters(2).pixels);
        }
    }

    #[test]
    fn mining_is_deterministic() {
        let data = dataset(3);
        let m = MiningSpec {
            seed: 9,
            n_ori: 3,
            ..MiningSpec::default()
        };
        let a = mine_all(&data, &PerturbSpec::default(), &m, &CropSpec::default()).unwrap();
        let b: Vec<_> = (0..data.anchors.len())
            .map(|i| mine_samples(&data, i, &PerturbSpec::default(), &m, &CropSpec::default()).unwrap())
            .collect();
        assert_eq!(a, b);
        let c = mine_all(
            &data,
            &PerturbSpec::default(),
            &MiningSpec { seed: 10, ..m },
            &CropSpec::default(),
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn configuration_errors() {
        let data = dataset(1);
        let r = mine_samples(&data, 0, &PerturbSpec::default(), &MiningSpec::default(), &CropSpec::default());
        assert!(matches!(r, Err(Error::Config(_))));
        let none = MiningSpec {
            n_inner: 0,
            n_cross: 0,
            n_ori: 0,
            ..MiningSpec::default()
        };
        let r = mine_samples(&data, 0, &PerturbSpec::default(), &none, &CropSpec::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn exhausted_when_band_leaves_map() {
        let data = dataset(1);
        let far = MiningSpec {
            inner_neg_dist_m: [100.0, 101.0],
            n_cross: 0,
            ..MiningSpec::default()
        };
        let r = mine_samples(&data, 0, &PerturbSpec::default(), &far, &CropSpec::default());
        assert!(matches!(r, Err(Error::MiningExhausted { .. })));
    }
}
