use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::floorplan::{traverse, FanSpec, FloorPlan, Pose};

/// Length of a texture histogram: one bin per possible texture id.
pub const TEXTURE_BINS: usize = 256;

/// Error model applied to rendered depths to imitate a ray predictor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian depth noise.
    pub depth_sigma_m: f64,
    /// Probability that a ray drops out and reads `max_range`.
    pub dropout_prob: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.depth_sigma_m.is_finite() && self.depth_sigma_m >= 0.0,
            Validation,
            "depth sigma must be non-negative, got {}",
            self.depth_sigma_m
        );
        ensure!(
            (0.0..=1.0).contains(&self.dropout_prob),
            Validation,
            "dropout probability must lie in [0, 1], got {}",
            self.dropout_prob
        );
        Ok(())
    }
}

/// What a camera at a pose "sees": noiseless ray depths and the texture ids of
/// the surfaces those rays end on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSignature {
    pub depths: Vec<f64>,
    /// Count per texture id; sums to the number of rays.
    pub texture_histogram: Vec<u32>,
    pub noise: NoiseSpec,
    pub fov_rad: f64,
    pub max_range_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Noisy depths handed to the localizer.
    pub predicted: Vec<f64>,
    pub signature: ObservationSignature,
}

/// Noiseless depths plus the histogram of texture ids at each ray's last free cell.
pub fn visible_texture_histogram(map: &FloorPlan, pose: &Pose, fan: &FanSpec) -> Result<(Vec<f64>, Vec<u32>)> {
    fan.validate()?;
    let (gx, gy) = map.to_grid(pose.x, pose.y);
    let start = map
        .cell_of_grid(gx, gy)
        .ok_or(Error::OutOfBounds { x: pose.x, y: pose.y })?;
    if map.is_wall(start.0, start.1) {
        return Err(Error::OccupiedOrigin { x: pose.x, y: pose.y });
    }
    let mut depths = Vec::with_capacity(fan.n_rays);
    let mut hist = vec![0u32; TEXTURE_BINS];
    for i in 0..fan.n_rays {
        let b = pose.theta + fan.offset(i);
        let t = traverse(map, gx, gy, start, b.cos(), b.sin(), fan.max_range_m);
        depths.push(t.depth);
        hist[map.texture_id(t.last_free.0, t.last_free.1) as usize] += 1;
    }
    Ok((depths, hist))
}

/// Render the fan at `pose`, corrupt it with `noise`, and attach the signature.
pub fn simulate_observation(
    map: &FloorPlan,
    pose: &Pose,
    fan: &FanSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Observation> {
    noise.validate()?;
    let (depths, hist) = visible_texture_histogram(map, pose, fan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predicted = depths
        .iter()
        .map(|&d| {
            // always draw both values so the stream does not depend on the knobs
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            if u < noise.dropout_prob {
                fan.max_range_m
            } else {
                (d + noise.depth_sigma_m * z).clamp(0.0, fan.max_range_m)
            }
        })
        .collect();
    Ok(Observation {
        predicted,
        signature: ObservationSignature {
            depths,
            texture_histogram: hist,
            noise: *noise,
            fov_rad: fan.fov_rad,
            max_range_m: fan.max_range_m,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::render_gt_rays;
    use crate::synth::{generate_world, WorldSpec};

    #[test]
    fn noiseless_observation_equals_rendered_fan() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let fan = FanSpec::gibson();
        let pose = world.gt_poses[0];
        let obs = simulate_observation(&world.map, &pose, &fan, &NoiseSpec::default(), 3).unwrap();
        assert_eq!(obs.predicted, render_gt_rays(&world.map, &pose, &fan).unwrap().depths);
        assert_eq!(obs.signature.texture_histogram.iter().sum::<u32>(), 40);
    }

    #[test]
    fn noisy_observation_is_reproducible() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let fan = FanSpec::gibson();
        let noise = NoiseSpec {
            depth_sigma_m: 0.1,
            dropout_prob: 0.1,
        };
        let pose = world.gt_poses[1];
        let a = simulate_observation(&world.map, &pose, &fan, &noise, 11).unwrap();
        let b = simulate_observation(&world.map, &pose, &fan, &noise, 11).unwrap();
        let c = simulate_observation(&world.map, &pose, &fan, &noise, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.predicted, c.predicted);
        assert_eq!(a.signature.depths, c.signature.depths);
        assert!(a.predicted.iter().all(|d| (0.0..=fan.max_range_m).contains(d)));
    }

    #[test]
    fn twin_poses_share_depths_not_texture() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let fan = FanSpec::gibson();
        for pose in world.gt_poses.iter().take(20) {
            let twin = world.twin_of(pose).unwrap();
            let a = simulate_observation(&world.map, pose, &fan, &NoiseSpec::default(), 0).unwrap();
            let b = simulate_observation(&world.map, &twin, &fan, &NoiseSpec::default(), 0).unwrap();
            for (p, q) in a.signature.depths.iter().zip(&b.signature.depths) {
                assert!((p - q).abs() < 1e-9);
            }
            assert_ne!(a.signature.texture_histogram, b.signature.texture_histogram);
        }
    }

    #[test]
    fn rejects_bad_noise() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let bad = NoiseSpec {
            depth_sigma_m: -1.0,
            dropout_prob: 0.0,
        };
        assert!(simulate_observation(&world.map, &world.gt_poses[0], &FanSpec::gibson(), &bad, 0).is_err());
    }
}
