//! Pose-centered, heading-aligned floorplan crops.
//!
//! Crop pixel `(u, v)` (column, row) sits at `right = (u + ½ − S/2)·m` and
//! `forward = (S/2 − v − ½)·m` in the camera frame, so the camera looks up the
//! raster and column index grows to the camera's right.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::floorplan::{traverse, write_pgm, Cell, FanSpec, FloorPlan, Pose};

/// Occupancy raster value for a wall pixel.
pub const WALL_PX: u8 = 1;
/// Occupancy raster value for a free pixel.
pub const FREE_PX: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropChannels {
    OccupancyOnly,
    #[default]
    OccupancyTexture,
}

impl CropChannels {
    pub fn count(self) -> usize {
        match self {
            CropChannels::OccupancyOnly => 1,
            CropChannels::OccupancyTexture => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropSpec {
    pub side_m: f64,
    /// Pixels per side; `None` means `round(side_m / map resolution)`.
    pub out_px: Option<usize>,
    pub channels: CropChannels,
    /// Occupancy value written for samples outside the map.
    pub pad_occupancy: u8,
    /// Texture id written for samples outside the map.
    pub pad_texture: u8,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            side_m: 5.0,
            out_px: None,
            channels: CropChannels::OccupancyTexture,
            pad_occupancy: WALL_PX,
            pad_texture: 0,
        }
    }
}

impl CropSpec {
    pub fn with_side(side_m: f64) -> Self {
        Self {
            side_m,
            ..Self::default()
        }
    }

    pub fn pixels_for(&self, map: &FloorPlan) -> usize {
        self.out_px
            .unwrap_or_else(|| (self.side_m / map.resolution()).round() as usize)
    }

    fn validate(&self, px: usize) -> Result<()> {
        ensure!(
            self.side_m.is_finite() && self.side_m > 0.0,
            Validation,
            "crop side must be positive, got {}",
            self.side_m
        );
        ensure!(px >= 2, Validation, "crop needs at least 2 pixels per side, got {px}");
        Ok(())
    }
}

/// Square raster of `channels × size × size` values (channel-major, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub size: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
    pub meters_per_px: f64,
    pub source_pose: Pose,
}

impl Crop {
    #[inline]
    pub fn at(&self, channel: usize, u: usize, v: usize) -> u8 {
        self.pixels[(channel * self.size + v) * self.size + u]
    }

    pub fn channel(&self, channel: usize) -> &[u8] {
        let n = self.size * self.size;
        &self.pixels[channel * n..(channel + 1) * n]
    }

    /// The raster turned by `k` quarter turns, matching a crop taken with the
    /// heading advanced by `k·π/2`.
    pub fn rotated_quarters(&self, k: i32) -> Crop {
        let s = self.size;
        let mut cur = self.pixels.clone();
        for _ in 0..k.rem_euclid(4) {
            let mut next = vec![0u8; cur.len()];
            for ch in 0..self.channels {
                let base = ch * s * s;
                for v in 0..s {
                    for u in 0..s {
                        next[base + v * s + u] = cur[base + u * s + (s - 1 - v)];
                    }
                }
            }
            cur = next;
        }
        Crop {
            pixels: cur,
            source_pose: self.source_pose.rotated(k as f64 * FRAC_PI_2),
            ..self.clone()
        }
    }

    /// Cast `fan` from the crop center with camera-forward = crop-up. Returns
    /// each ray's depth (capped at `max_range`) and the texture id of the
    /// last free pixel it crossed.
    pub fn cast_fan(&self, fan: &FanSpec, max_range: f64) -> Result<Vec<(f64, u8)>> {
        let s = self.size;
        let m = self.meters_per_px;
        let occ = self
            .channel(0)
            .iter()
            .map(|&p| if p == WALL_PX { Cell::Wall } else { Cell::Free })
            .collect();
        let tex = (self.channels > 1).then(|| self.channel(1).to_vec());
        let half = s as f64 / 2.0;
        let plan = FloorPlan::new(s, s, m, [-half * m, -half * m], occ, tex)?;
        let start = (s / 2, s / 2);
        Ok((0..fan.n_rays)
            .map(|i| {
                // crop-up is decreasing row, i.e. -y in raster space
                let b = -FRAC_PI_2 + fan.offset(i);
                let t = traverse(&plan, half, half, start, b.cos(), b.sin(), max_range);
                (t.depth, plan.texture_id(t.last_free.0, t.last_free.1))
            })
            .collect())
    }

    /// Write one graymap per channel: occupancy as black walls on white,
    /// texture ids verbatim. Returns the file names written.
    pub fn write_pgms(&self, dir: &Path, stem: &str) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for ch in 0..self.channels {
            let (name, data): (String, Vec<u8>) = if ch == 0 {
                (
                    format!("{stem}_occ.pgm"),
                    self.channel(0).iter().map(|&p| if p == WALL_PX { 0 } else { 255 }).collect(),
                )
            } else {
                (format!("{stem}_tex.pgm"), self.channel(ch).to_vec())
            };
            write_pgm(&dir.join(&name), self.size, self.size, &data)?;
            names.push(name);
        }
        Ok(names)
    }
}

/// Heading unit vector with exact values at quarter turns.
fn heading_axes(theta: f64) -> (f64, f64) {
    let quarters = (theta / FRAC_PI_2).round();
    if (theta - quarters * FRAC_PI_2).abs() < 1e-9 {
        match (quarters as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (theta.cos(), theta.sin())
    }
}

/// Nearest-neighbor crop centered on the camera, camera-forward = crop-up.
pub fn extract_crop(map: &FloorPlan, pose: &Pose, spec: &CropSpec) -> Result<Crop> {
    let size = spec.pixels_for(map);
    spec.validate(size)?;
    if map.cell_of(pose.x, pose.y).is_none() {
        return Err(Error::OutOfBounds { x: pose.x, y: pose.y });
    }
    let channels = spec.channels.count();
    let m = spec.side_m / size as f64;
    let half = size as f64 / 2.0;
    let (fx, fy) = heading_axes(pose.theta);
    let (rx, ry) = (-fy, fx);

    let plane = size * size;
    let mut pixels = vec![0u8; channels * plane];
    for v in 0..size {
        let fwd = (half - v as f64 - 0.5) * m;
        for u in 0..size {
            let right = (u as f64 + 0.5 - half) * m;
            let x = pose.x + fwd * fx + right * rx;
            let y = pose.y + fwd * fy + right * ry;
            let at = v * size + u;
            match map.cell_of(x, y) {
                Some((c, r)) => {
                    pixels[at] = if map.is_wall(c, r) { WALL_PX } else { FREE_PX };
                    if channels > 1 {
                        pixels[plane + at] = map.texture_id(c, r);
                    }
                }
                None => {
                    pixels[at] = spec.pad_occupancy;
                    if channels > 1 {
                        pixels[plane + at] = spec.pad_texture;
                    }
                }
            }
        }
    }
    Ok(Crop {
        size,
        channels,
        pixels,
        meters_per_px: m,
        source_pose: *pose,
    })
}

/// Crops for many poses, extracted in parallel; output order follows `poses`.
pub fn extract_crops(map: &FloorPlan, poses: &[Pose], spec: &CropSpec) -> Result<Vec<Crop>> {
    poses.par_iter().map(|p| extract_crop(map, p, spec)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropIndexEntry {
    pub files: Vec<String>,
    pub pose: Pose,
}

/// Export crops as graymaps plus an `index.json` mapping files to poses.
pub fn export_crops(crops: &[Crop], dir: &Path, prefix: &str) -> Result<Vec<CropIndexEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = Vec::with_capacity(crops.len());
    for (i, crop) in crops.iter().enumerate() {
        let files = crop.write_pgms(dir, &format!("{prefix}{i:04}"))?;
        index.push(CropIndexEntry {
            files,
            pose: crop.source_pose,
        });
    }
    let path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
