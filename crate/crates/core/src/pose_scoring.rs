//! Pose-space discretization, ray-agreement scoring (the depth-aware pose
//! probability map) and candidate extraction.

use std::cmp::Ordering;
use std::f64::consts::TAU;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::floorplan::{traverse, write_pgm, FanSpec, FloorPlan, Pose};

/// Discretization of the pose space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseGridSpec {
    /// Spacing of position cells. `None` picks the map resolution when it is
    /// at least 0.1 m, otherwise 0.1 m.
    pub cell_stride_m: Option<f64>,
    pub n_orientations: usize,
}

impl Default for PoseGridSpec {
    fn default() -> Self {
        Self {
            cell_stride_m: None,
            n_orientations: 36,
        }
    }
}

impl PoseGridSpec {
    pub fn stride_for(&self, map: &FloorPlan) -> f64 {
        self.cell_stride_m.unwrap_or_else(|| {
            if map.resolution() >= 0.1 {
                map.resolution()
            } else {
                0.1
            }
        })
    }
}

/// A pose grid resolved against a concrete map: `rows × cols × O` poses.
///
/// Linear index is row-major with orientation minor:
/// `(row * cols + col) * O + o`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrid {
    pub stride: f64,
    pub rows: usize,
    pub cols: usize,
    pub n_orientations: usize,
    origin: [f64; 2],
    /// Per position cell: true when the cell center lies in free space.
    mask: Vec<bool>,
}

impl PoseGrid {
    pub fn new(map: &FloorPlan, spec: &PoseGridSpec) -> Result<Self> {
        let stride = spec.stride_for(map);
        ensure!(
            stride.is_finite() && stride > 0.0,
            Validation,
            "cell stride must be positive, got {stride}"
        );
        ensure!(spec.n_orientations >= 1, Validation, "need at least one orientation bin");
        let (w_m, h_m) = map.extent_m();
        // tolerate w_m / stride landing a hair below an integer
        let cols = (w_m / stride + 1e-9).floor() as usize;
        let rows = (h_m / stride + 1e-9).floor() as usize;
        ensure!(cols > 0 && rows > 0, Validation, "stride {stride} exceeds the map extent");

        let origin = map.origin();
        let mut mask = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = origin[0] + (c as f64 + 0.5) * stride;
                let y = origin[1] + (r as f64 + 0.5) * stride;
                mask.push(map.is_free_at(x, y));
            }
        }
        Ok(Self {
            stride,
            rows,
            cols,
            n_orientations: spec.n_orientations,
            origin,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.n_orientations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_free(&self, index: usize) -> bool {
        self.mask[index / self.n_orientations]
    }

    pub fn free_pose_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count() * self.n_orientations
    }

    /// `(row, col, orientation)` of a linear index.
    #[inline]
    pub fn unravel(&self, index: usize) -> (usize, usize, usize) {
        let o = index % self.n_orientations;
        let cell = index / self.n_orientations;
        (cell / self.cols, cell % self.cols, o)
    }

    #[inline]
    pub fn ravel(&self, row: usize, col: usize, o: usize) -> usize {
        (row * self.cols + col) * self.n_orientations + o
    }

    /// Heading at the center of orientation bin `o`.
    #[inline]
    pub fn heading(&self, o: usize) -> f64 {
        TAU * o as f64 / self.n_orientations as f64
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin[0] + (col as f64 + 0.5) * self.stride,
            self.origin[1] + (row as f64 + 0.5) * self.stride,
        )
    }

    pub fn pose(&self, index: usize) -> Pose {
        let (r, c, o) = self.unravel(index);
        let (x, y) = self.cell_center(r, c);
        Pose::new(x, y, self.heading(o))
    }

    /// Linear index of the grid pose nearest to `pose`, if inside the grid.
    pub fn nearest_index(&self, pose: &Pose) -> Option<usize> {
        let gx = (pose.x - self.origin[0]) / self.stride;
        let gy = (pose.y - self.origin[1]) / self.stride;
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (c, r) = (gx.floor() as usize, gy.floor() as usize);
        if c >= self.cols || r >= self.rows {
            return None;
        }
        let bins = self.n_orientations as f64;
        let o = (pose.theta / TAU * bins).round() as usize % self.n_orientations;
        Some(self.ravel(r, c, o))
    }
}

/// Ground-truth fans for every free grid pose, cast once per map.
#[derive(Debug, Clone)]
pub struct GtRayTable {
    grid: PoseGrid,
    fan: FanSpec,
    /// Position-cell index for each free cell, in ascending order.
    free_cells: Vec<usize>,
    /// `free_cells.len() × O × N` depths.
    depths: Vec<f64>,
}

impl GtRayTable {
    pub fn build(map: &FloorPlan, grid: PoseGrid, fan: &FanSpec) -> Result<Self> {
        fan.validate()?;
        let free_cells: Vec<usize> = (0..grid.rows * grid.cols).filter(|&i| grid.mask[i]).collect();
        let n = fan.n_rays;
        let per_cell = grid.n_orientations * n;
        let offsets = fan.offsets();

        let mut depths = vec![0.0; free_cells.len() * per_cell];
        depths
            .par_chunks_mut(per_cell)
            .zip(free_cells.par_iter())
            .for_each(|(out, &cell)| {
                let (x, y) = grid.cell_center(cell / grid.cols, cell % grid.cols);
                let (gx, gy) = map.to_grid(x, y);
                let start = map.cell_of_grid(gx, gy).expect("masked cells lie inside the map");
                for o in 0..grid.n_orientations {
                    let heading = Pose::new(x, y, grid.heading(o)).theta;
                    for (i, off) in offsets.iter().enumerate() {
                        let b = heading + off;
                        out[o * n + i] =
                            traverse(map, gx, gy, start, b.cos(), b.sin(), fan.max_range_m).depth;
                    }
                }
            });
        Ok(Self {
            grid,
            fan: fan.clone(),
            free_cells,
            depths,
        })
    }

    pub fn grid(&self) -> &PoseGrid {
        &self.grid
    }

    pub fn fan(&self) -> &FanSpec {
        &self.fan
    }

    /// Ground-truth depths for a free grid pose.
    pub fn rays(&self, index: usize) -> Option<&[f64]> {
        let cell = index / self.grid.n_orientations;
        let o = index % self.grid.n_orientations;
        let slot = self.free_cells.binary_search(&cell).ok()?;
        let n = self.fan.n_rays;
        let start = (slot * self.grid.n_orientations + o) * n;
        Some(&self.depths[start..start + n])
    }

    /// Score every free pose by `exp(−mean|pred − gt| / σ)` and normalize.
    pub fn score(&self, pred: &[f64], sigma: f64) -> Result<ProbMap> {
        let n = self.fan.n_rays;
        ensure!(
            pred.len() == n,
            Validation,
            "prediction has {} rays, the ground-truth fans have {n}",
            pred.len()
        );
        ensure!(sigma.is_finite() && sigma > 0.0, Validation, "sigma must be positive, got {sigma}");
        if self.free_cells.is_empty() {
            return Err(Error::EmptyDomain("the map has no free pose cells".into()));
        }

        let inv_n = 1.0 / n as f64;
        let errors: Vec<f64> = self
            .depths
            .par_chunks(n)
            .map(|gt| pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() * inv_n)
            .collect();
        // shift by the best error so the exponent never underflows everywhere
        let best = errors.iter().copied().fold(f64::INFINITY, f64::min);

        let o = self.grid.n_orientations;
        let mut values = vec![0.0; self.grid.len()];
        for (slot, &cell) in self.free_cells.iter().enumerate() {
            for k in 0..o {
                values[cell * o + k] = (-(errors[slot * o + k] - best) / sigma).exp();
            }
        }
        ProbMap::from_unnormalized(self.grid.clone(), values)
    }
}

/// Normalized pose posterior over a [`PoseGrid`]. Masked entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    grid: PoseGrid,
    values: Vec<f64>,
}

impl ProbMap {
    /// Zero masked entries and normalize the rest with a sequential sum.
    pub fn from_unnormalized(grid: PoseGrid, mut values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == grid.len(),
            Validation,
            "{} values for a grid of {} poses",
            values.len(),
            grid.len()
        );
        let mut total = 0.0;
        for (i, v) in values.iter_mut().enumerate() {
            if !grid.is_free(i) {
                *v = 0.0;
            }
            ensure!(v.is_finite() && *v >= 0.0, Validation, "score {i} is {v}");
            total += *v;
        }
        if !(total > 0.0) {
            return Err(Error::EmptyDomain("all pose scores are zero".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &PoseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Sum over the free entries.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Maximum over orientations per position cell, row-major.
    pub fn max_over_orientations(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.grid.n_orientations)
            .map(|c| c.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Binary tensor: `DPMF`, then rows, cols, O as u32 LE, then f32 LE values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(b"DPMF");
        for dim in [self.grid.rows, self.grid.cols, self.grid.n_orientations] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// 8-bit visualization: per-cell maximum, scaled so the peak is 255.
    pub fn to_graymap(&self) -> Vec<u8> {
        let cells = self.max_over_orientations();
        let peak = cells.iter().copied().fold(0.0, f64::max);
        cells
            .iter()
            .map(|v| if peak > 0.0 { (255.0 * v / peak).round() as u8 } else { 0 })
            .collect()
    }

    pub fn write_graymap(&self, path: &Path) -> Result<()> {
        write_pgm(path, self.grid.cols, self.grid.rows, &self.to_graymap())
    }
}

/// Decoded `DPMF` tensor: `(rows, cols, O, values)`.
pub fn read_prob_tensor(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    ensure!(bytes.len() >= 16 && &bytes[..4] == b"DPMF", Validation, "missing DPMF header");
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (rows, cols, o) = (dim(0), dim(1), dim(2));
    let count = rows * cols * o;
    ensure!(
        bytes.len() == 16 + 4 * count,
        Validation,
        "DPMF payload has {} bytes, expected {}",
        bytes.len() - 16,
        4 * count
    );
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, o, values))
}

/// Build the depth-aware pose probability map for one ray prediction.
pub fn build_dafpm(
    map: &FloorPlan,
    pred: &[f64],
    grid: &PoseGridSpec,
    fan: &FanSpec,
    sigma: f64,
) -> Result<ProbMap> {
    let grid = PoseGrid::new(map, grid)?;
    if grid.free_pose_count() == 0 {
        return Err(Error::EmptyDomain("the map has no free pose cells".into()));
    }
    GtRayTable::build(map, grid, fan)?.score(pred, sigma)
}

pub const DEFAULT_SIGMA: f64 = 0.5;

/// Descending by score, then ascending by index.
#[inline]
fn rank(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b]
        .partial_cmp(&values[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Index of the most probable pose; ties go to the lowest linear index.
pub fn argmax_index(pmap: &ProbMap) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in pmap.values.iter().enumerate() {
        if v > 0.0 && best.is_none_or(|b| v > pmap.values[b]) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::EmptyDomain("probability map is all zero".into()))
}

pub fn argmax_pose(pmap: &ProbMap) -> Result<Pose> {
    argmax_index(pmap).map(|i| pmap.grid.pose(i))
}

/// One ranked pose hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pose: Pose,
    pub index: usize,
    pub score: f64,
}

/// Top poses in non-increasing score order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Candidate> {
        self.candidates.iter()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.candidates.iter().map(|c| c.pose).collect()
    }
}

pub const DEFAULT_TOP_X: usize = 100;

/// The `x` highest-scoring free poses (all of them when fewer exist).
pub fn top_x(pmap: &ProbMap, x: usize) -> Result<CandidateSet> {
    ensure!(x >= 1, Validation, "candidate count must be at least 1");
    let mut idx: Vec<usize> = (0..pmap.values.len()).filter(|&i| pmap.grid.is_free(i)).collect();
    if idx.is_empty() {
        return Err(Error::EmptyDomain("no free poses".into()));
    }
    let values = &pmap.values;
    if x < idx.len() {
        idx.select_nth_unstable_by(x - 1, |&a, &b| rank(values, a, b));
        idx.truncate(x);
    }
    idx.sort_unstable_by(|&a, &b| rank(values, a, b));
    Ok(CandidateSet {
        candidates: idx
            .into_iter()
            .map(|i| Candidate {
                pose: pmap.grid.pose(i),
                index: i,
                score: values[i],
            })
            .collect(),
    })
}
