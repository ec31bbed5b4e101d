use super::{FanSpec, FloorPlan, Pose, RayFan};
use crate::error::{Error, Result};

/// Full result of tracing one ray through the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayTrace {
    /// Distance to the near boundary of the first wall cell, or `max_range`.
    pub depth: f64,
    pub hit: bool,
    /// Last free cell visited before the wall (or before leaving the map).
    pub last_free: (usize, usize),
}

/// Cast one ray and return `(depth, hit)`.
///
/// Uses Amanatides-Woo traversal: every crossed cell is visited exactly once
/// and the depth is the exact parametric distance at which the ray enters the
/// first wall cell. Rays that leave the map or run past `max_range` report
/// `max_range` with `hit = false`.
pub fn cast_ray(map: &FloorPlan, x: f64, y: f64, bearing: f64, max_range: f64) -> Result<(f64, bool)> {
    trace_ray(map, x, y, bearing, max_range).map(|t| (t.depth, t.hit))
}

/// Like [`cast_ray`] but also reports the last free cell on the ray.
pub fn trace_ray(map: &FloorPlan, x: f64, y: f64, bearing: f64, max_range: f64) -> Result<RayTrace> {
    let (gx, gy) = map.to_grid(x, y);
    let (col, row) = map.cell_of_grid(gx, gy).ok_or(Error::OutOfBounds { x, y })?;
    if map.is_wall(col, row) {
        return Err(Error::OccupiedOrigin { x, y });
    }
    Ok(traverse(map, gx, gy, (col, row), bearing.cos(), bearing.sin(), max_range))
}

/// Grid traversal from continuous grid coordinates. The starting cell is not
/// tested for occupancy.
pub(crate) fn traverse(
    map: &FloorPlan,
    gx: f64,
    gy: f64,
    start: (usize, usize),
    dir_x: f64,
    dir_y: f64,
    max_range: f64,
) -> RayTrace {
    let max_t = max_range / map.resolution();
    let (w, h) = (map.width() as isize, map.height() as isize);
    let mut col = start.0 as isize;
    let mut row = start.1 as isize;

    let (step_x, t_delta_x, mut t_max_x) = axis_setup(gx, col, dir_x);
    let (step_y, t_delta_y, mut t_max_y) = axis_setup(gy, row, dir_y);

    let mut last_free = start;
    let miss = |last_free| RayTrace {
        depth: max_range,
        hit: false,
        last_free,
    };

    loop {
        let t = if t_max_x <= t_max_y {
            col += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            row += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };

        if t > max_t || !t.is_finite() {
            return miss(last_free);
        }
        if col < 0 || row < 0 || col >= w || row >= h {
            return miss(last_free);
        }
        let cell = (col as usize, row as usize);
        if map.is_wall(cell.0, cell.1) {
            return RayTrace {
                depth: t * map.resolution(),
                hit: true,
                last_free,
            };
        }
        last_free = cell;
    }
}

#[inline]
fn axis_setup(g: f64, cell: isize, dir: f64) -> (isize, f64, f64) {
    if dir > 0.0 {
        (1, 1.0 / dir, ((cell + 1) as f64 - g) / dir)
    } else if dir < 0.0 {
        (-1, -1.0 / dir, (g - cell as f64) / -dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Render the ground-truth fan seen from `pose`.
///
/// Ray `i` points along `pose.theta + fan.offset(i)`.
pub fn render_gt_rays(map: &FloorPlan, pose: &Pose, fan: &FanSpec) -> Result<RayFan> {
    fan.validate()?;
    let (gx, gy) = map.to_grid(pose.x, pose.y);
    let start = map
        .cell_of_grid(gx, gy)
        .ok_or(Error::OutOfBounds { x: pose.x, y: pose.y })?;
    if map.is_wall(start.0, start.1) {
        return Err(Error::OccupiedOrigin { x: pose.x, y: pose.y });
    }
    let mut depths = Vec::with_capacity(fan.n_rays);
    let mut hits = Vec::with_capacity(fan.n_rays);
    for i in 0..fan.n_rays {
        let bearing = pose.theta + fan.offset(i);
        let t = traverse(map, gx, gy, start, bearing.cos(), bearing.sin(), fan.max_range_m);
        depths.push(t.depth);
        hits.push(t.hit);
    }
    Ok(RayFan {
        depths,
        hits,
        fov: fan.fov_rad,
        max_range: fan.max_range_m,
    })
}
