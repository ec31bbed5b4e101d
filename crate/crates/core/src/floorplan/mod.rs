//! Occupancy floorplans, poses, and exact grid ray casting.
//!
//! A [`FloorPlan`] is a row-major grid. Cell `(col, row)` covers the world
//! rectangle `[ox + col·res, ox + (col+1)·res) × [oy + row·res, oy + (row+1)·res)`
//! and its center sits at `origin + (c + 0.5)·res`. Headings are measured from
//! the +x axis toward +y.

mod io;
mod raycast;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub use io::{load_floorplan, read_pgm, save_floorplan, write_pgm, MapMetadata};
pub use raycast::{cast_ray, render_gt_rays, trace_ray, RayTrace};
pub(crate) use raycast::traverse;

/// Occupancy state of one map cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Cell {
    Free = 0,
    Wall = 1,
}

impl Cell {
    #[inline]
    pub fn is_wall(self) -> bool {
        self == Cell::Wall
    }
}

/// Multi-channel occupancy grid with metric resolution. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    occupancy: Vec<Cell>,
    texture: Option<Vec<u8>>,
}

impl FloorPlan {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: [f64; 2],
        occupancy: Vec<Cell>,
        texture: Option<Vec<u8>>,
    ) -> Result<Self> {
        ensure!(width > 0 && height > 0, Validation, "map must have at least one cell, got {width}x{height}");
        ensure!(
            resolution.is_finite() && resolution > 0.0,
            Validation,
            "resolution must be positive, got {resolution}"
        );
        ensure!(
            origin.iter().all(|v| v.is_finite()),
            Validation,
            "origin must be finite"
        );
        ensure!(
            occupancy.len() == width * height,
            Validation,
            "occupancy has {} cells, expected {}",
            occupancy.len(),
            width * height
        );
        if let Some(tex) = &texture {
            ensure!(
                tex.len() == width * height,
                Validation,
                "texture layer has {} cells, expected {}",
                tex.len(),
                width * height
            );
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            occupancy,
            texture,
        })
    }

    /// A map with every cell free.
    pub fn empty(width: usize, height: usize, resolution: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            resolution,
            [0.0, 0.0],
            vec![Cell::Free; width * height],
            None,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    /// World extent (width, height) in meters.
    pub fn extent_m(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn occupancy(&self) -> &[Cell] {
        &self.occupancy
    }

    pub fn texture(&self) -> Option<&[u8]> {
        self.texture.as_deref()
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> Cell {
        self.occupancy[self.index(col, row)]
    }

    #[inline]
    pub fn is_wall(&self, col: usize, row: usize) -> bool {
        self.cell(col, row).is_wall()
    }

    /// Texture id of a cell; 0 when the map has no texture layer.
    #[inline]
    pub fn texture_id(&self, col: usize, row: usize) -> u8 {
        match &self.texture {
            Some(tex) => tex[self.index(col, row)],
            None => 0,
        }
    }

    /// Continuous grid coordinates (in cells) of a world point.
    #[inline]
    pub fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.resolution,
            (y - self.origin[1]) / self.resolution,
        )
    }

    /// Cell containing a world point, or `None` outside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (gx, gy) = self.to_grid(x, y);
        self.cell_of_grid(gx, gy)
    }

    #[inline]
    pub(crate) fn cell_of_grid(&self, gx: f64, gy: f64) -> Option<(usize, usize)> {
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (col, row) = (gx.floor() as usize, gy.floor() as usize);
        (col < self.width && row < self.height).then_some((col, row))
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// True when the point lies in a free cell inside the map.
    pub fn is_free_at(&self, x: f64, y: f64) -> bool {
        matches!(self.cell_of(x, y), Some((c, r)) if !self.is_wall(c, r))
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupancy.iter().filter(|c| !c.is_wall()).count()
    }

    /// Copy of this map with one cell replaced.
    pub fn with_cell(&self, col: usize, row: usize, cell: Cell) -> Self {
        let mut out = self.clone();
        let idx = out.index(col, row);
        out.occupancy[idx] = cell;
        out
    }

    /// Copy of this map with a texture layer attached.
    pub fn with_texture(self, texture: Vec<u8>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.resolution,
            self.origin,
            self.occupancy,
            Some(texture),
        )
    }
}

/// Headings are stored on a lattice of 2^-30 rad so that equivalent headings
/// (θ and θ + 2πk) compare and render identically.
const HEADING_QUANTUM: f64 = 1.0 / (1u64 << 30) as f64;

/// Wrap an angle into `[0, 2π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    let snapped = (wrapped / HEADING_QUANTUM).round() * HEADING_QUANTUM;
    if snapped >= TAU {
        0.0
    } else {
        snapped
    }
}

/// Smallest absolute difference between two headings, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Planar camera pose. `theta` is always canonical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(deserialize_with = "de_theta")]
    pub theta: f64,
}

fn de_theta<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    f64::deserialize(d).map(canonical_angle)
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: canonical_angle(theta),
        }
    }

    pub fn rotated(&self, delta: f64) -> Self {
        Self::new(self.x, self.y, self.theta + delta)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.theta)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Bearing layout of a ray fan relative to the camera heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaySpacing {
    /// Rays spread at equal angles over the field of view, left to right.
    Equiangular,
    /// Caller-provided bearing offsets (radians, relative to the heading).
    Explicit(Vec<f64>),
}

/// Ray count, field of view and range shared by predicted and rendered fans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FanSpec {
    pub n_rays: usize,
    pub fov_rad: f64,
    pub max_range_m: f64,
    pub spacing: RaySpacing,
}

impl Default for FanSpec {
    fn default() -> Self {
        Self::gibson()
    }
}

impl FanSpec {
    pub const DEFAULT_RAYS: usize = 40;
    pub const DEFAULT_MAX_RANGE: f64 = 10.0;

    /// 40 rays over a 108° horizontal field of view.
    pub fn gibson() -> Self {
        Self {
            n_rays: Self::DEFAULT_RAYS,
            fov_rad: 108f64.to_radians(),
            max_range_m: Self::DEFAULT_MAX_RANGE,
            spacing: RaySpacing::Equiangular,
        }
    }

    /// 40 rays over an 80° horizontal field of view.
    pub fn structured3d() -> Self {
        Self {
            fov_rad: 80f64.to_radians(),
            ..Self::gibson()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_rays >= 2, Validation, "a ray fan needs at least 2 rays, got {}", self.n_rays);
        ensure!(
            self.fov_rad > 0.0 && self.fov_rad < TAU,
            Validation,
            "fov must lie in (0, 2π), got {}",
            self.fov_rad
        );
        ensure!(
            self.max_range_m.is_finite() && self.max_range_m > 0.0,
            Validation,
            "max range must be positive, got {}",
            self.max_range_m
        );
        if let RaySpacing::Explicit(offsets) = &self.spacing {
            ensure!(
                offsets.len() == self.n_rays,
                Validation,
                "explicit spacing lists {} offsets for {} rays",
                offsets.len(),
                self.n_rays
            );
        }
        Ok(())
    }

    /// Bearing offset of ray `i` relative to the heading.
    #[inline]
    pub fn offset(&self, i: usize) -> f64 {
        match &self.spacing {
            RaySpacing::Equiangular => {
                self.fov_rad * (i as f64 / (self.n_rays - 1) as f64 - 0.5)
            }
            RaySpacing::Explicit(offsets) => offsets[i],
        }
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.n_rays).map(|i| self.offset(i)).collect()
    }
}

/// Metric depths along a fan of bearings.
#[derive(Debug, Clone, PartialEq)]
pub struct RayFan {
    pub depths: Vec<f64>,
    /// `false` where the ray left the map or exceeded `max_range`.
    pub hits: Vec<bool>,
    pub fov: f64,
    pub max_range: f64,
}

impl RayFan {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// World bearing of ray `i` for an equiangular fan at `heading`.
    pub fn bearing(&self, heading: f64, i: usize) -> f64 {
        let n = self.depths.len();
        heading + self.fov * (i as f64 / (n - 1) as f64 - 0.5)
    }
}
