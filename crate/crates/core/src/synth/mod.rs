//! Synthetic floorplans with controlled repetition, plus simulated
//! observations standing in for camera images.
//!
//! Room interiors carry a distinct texture id per room; walls and everything
//! outside the building have texture 0.

mod observe;
mod oracle;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{render_gt_rays, Cell, FanSpec, FloorPlan, Pose};

pub use observe::{
    simulate_observation, visible_texture_histogram, NoiseSpec, Observation, ObservationSignature,
    TEXTURE_BINS,
};
pub use oracle::{OracleEmbedder, OracleEmbedderSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Layout {
    /// Two congruent sealed rooms sharing one wall.
    TwinRooms,
    /// `rooms` copies of one room template above a shared corridor.
    Corridor { rooms: usize },
    /// Recursive binary partition into rooms joined by doors.
    RandomPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub layout: Layout,
    pub extent_m: [f64; 2],
    pub resolution_m: f64,
    /// Interior side of the repeated room template.
    pub room_m: f64,
    pub seed: u64,
    /// Number of ground-truth poses to sample.
    pub n_gt_poses: usize,
    /// Minimum distance from a sampled pose to the nearest wall cell.
    pub clearance_m: f64,
    /// Sampled poses must see a median depth of at least this along `view_fan`,
    /// which rules out cameras staring into a nearby wall. 0 disables the check.
    pub min_view_depth_m: f64,
    pub view_fan: FanSpec,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            layout: Layout::TwinRooms,
            extent_m: [12.0, 6.0],
            resolution_m: 0.1,
            room_m: 5.0,
            seed: 7,
            n_gt_poses: 200,
            clearance_m: 0.3,
            min_view_depth_m: 1.0,
            view_fan: FanSpec::default(),
        }
    }
}

/// A generated map with its room bookkeeping and sampled ground-truth poses.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub map: FloorPlan,
    pub gt_poses: Vec<Pose>,
    /// Room interiors as `(col0, row0, col1, row1)` half-open cell rectangles,
    /// indexed by texture id − 1.
    pub rooms: Vec<[usize; 4]>,
    /// Cell offset between congruent rooms, for repeated layouts.
    pub room_pitch_cells: Option<usize>,
}

impl World {
    /// Texture id of the room containing a point (0 outside any room).
    pub fn room_at(&self, x: f64, y: f64) -> u8 {
        match self.map.cell_of(x, y) {
            Some((c, r)) => self
                .rooms
                .iter()
                .position(|&[c0, r0, c1, r1]| (c0..c1).contains(&c) && (r0..r1).contains(&r))
                .map_or(0, |i| (i + 1) as u8),
            None => 0,
        }
    }

    /// The congruent counterpart of `pose` in the other twin room.
    pub fn twin_of(&self, pose: &Pose) -> Option<Pose> {
        let pitch = self.room_pitch_cells? as f64 * self.map.resolution();
        match self.room_at(pose.x, pose.y) {
            1 => Some(pose.translated(pitch, 0.0)),
            2 => Some(pose.translated(-pitch, 0.0)),
            _ => None,
        }
    }
}

struct Canvas {
    w: usize,
    h: usize,
    occ: Vec<Cell>,
    tex: Vec<u8>,
}

impl Canvas {
    fn walls(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            occ: vec![Cell::Wall; w * h],
            tex: vec![0; w * h],
        }
    }

    fn fill(&mut self, [c0, r0, c1, r1]: [usize; 4], cell: Cell, tex: u8) {
        for r in r0..r1.min(self.h) {
            for c in c0..c1.min(self.w) {
                self.occ[r * self.w + c] = cell;
                self.tex[r * self.w + c] = if cell.is_wall() { 0 } else { tex };
            }
        }
    }

    fn into_map(self, res: f64) -> Result<FloorPlan> {
        FloorPlan::new(self.w, self.h, res, [0.0, 0.0], self.occ, Some(self.tex))
    }
}

/// Wall stubs and a pillar in room-local cell coordinates, stamped identically
/// into every copy of the room so the copies stay congruent.
#[derive(Debug, Clone)]
struct RoomTemplate {
    n: usize,
    features: Vec<[usize; 4]>,
}

impl RoomTemplate {
    fn sample(n: usize, res: f64, rng: &mut ChaCha8Rng) -> Self {
        let cells = |m: f64| ((m / res).round() as usize).max(1);
        let thick = cells(0.2);
        let mut features = Vec::new();
        if n >= cells(2.0) {
            // 0, 1, 2 and 3 stubs on the four walls in shuffled order, so no
            // rotation or reflection of the room maps it onto itself
            let mut counts = [0usize, 1, 2, 3];
            counts.shuffle(rng);
            let lo = n * 15 / 100;
            let hi = (n * 85 / 100).saturating_sub(thick).max(lo);
            for (side, &count) in counts.iter().enumerate() {
                let mut placed: Vec<usize> = Vec::new();
                for _ in 0..count {
                    let mut along = rng.random_range(lo..=hi);
                    for _ in 0..32 {
                        if placed.iter().all(|&p| p.abs_diff(along) >= 4 * thick) {
                            break;
                        }
                        along = rng.random_range(lo..=hi);
                    }
                    placed.push(along);
                    let depth = rng.random_range(cells(0.4)..=cells(1.0).min(n / 4).max(cells(0.4)));
                    let rect = match side {
                        0 => [along, 0, along + thick, depth],
                        1 => [along, n - depth, along + thick, n],
                        2 => [0, along, depth, along + thick],
                        _ => [n - depth, along, n, along + thick],
                    };
                    features.push(rect);
                }
            }
            let margin = cells(1.2);
            if n > 2 * margin + cells(0.7) {
                let pw = rng.random_range(cells(0.4)..=cells(0.7));
                let ph = rng.random_range(cells(0.4)..=cells(0.7));
                let pc = rng.random_range(margin..=n - margin - pw);
                let pr = rng.random_range(margin..=n - margin - ph);
                features.push([pc, pr, pc + pw, pr + ph]);
            }
        }
        Self { n, features }
    }

    fn stamp(&self, canvas: &mut Canvas, col0: usize, row0: usize, tex: u8) -> [usize; 4] {
        let rect = [col0, row0, col0 + self.n, row0 + self.n];
        canvas.fill(rect, Cell::Free, tex);
        for &[c0, r0, c1, r1] in &self.features {
            canvas.fill([col0 + c0, row0 + r0, col0 + c1, row0 + r1], Cell::Wall, 0);
        }
        rect
    }
}

fn grid_dims(spec: &WorldSpec) -> Result<(usize, usize)> {
    if !(spec.resolution_m > 0.0) {
        return Err(Error::Config(format!("resolution must be positive, got {}", spec.resolution_m)));
    }
    let w = (spec.extent_m[0] / spec.resolution_m).round();
    let h = (spec.extent_m[1] / spec.resolution_m).round();
    if !(w >= 1.0 && h >= 1.0) {
        return Err(Error::Config("extent must cover at least one cell".into()));
    }
    Ok((w as usize, h as usize))
}

fn twin_rooms(spec: &WorldSpec, rng: &mut ChaCha8Rng) -> Result<(Canvas, Vec<[usize; 4]>, usize)> {
    let (w, h) = grid_dims(spec)?;
    let n = (spec.room_m / spec.resolution_m).round() as usize;
    if n < 2 || w < 2 * n + 3 || h < n + 2 {
        return Err(Error::Config(format!(
            "twin rooms of {} m need at least {:.2} m × {:.2} m, extent is {} m × {} m",
            spec.room_m,
            (2 * n + 3) as f64 * spec.resolution_m,
            (n + 2) as f64 * spec.resolution_m,
            spec.extent_m[0],
            spec.extent_m[1]
        )));
    }
    let template = RoomTemplate::sample(n, spec.resolution_m, rng);
    let mut canvas = Canvas::walls(w, h);
    let rooms = (0..2)
        .map(|k| template.stamp(&mut canvas, 1 + k * (n + 1), 1, (k + 1) as u8))
        .collect();
    Ok((canvas, rooms, n + 1))
}

fn corridor(spec: &WorldSpec, k: usize, rng: &mut ChaCha8Rng) -> Result<(Canvas, Vec<[usize; 4]>, usize)> {
    let (w, h) = grid_dims(spec)?;
    let res = spec.resolution_m;
    let n = (spec.room_m / res).round() as usize;
    let hall = ((1.2 / res).round() as usize).max(1);
    let door = ((0.9 / res).round() as usize).clamp(1, n.max(1));
    if k == 0 || k > 254 {
        return Err(Error::Config(format!("corridor needs 1..=254 rooms, got {k}")));
    }
    if n < 2 || w < k * (n + 1) + 1 || h < n + hall + 3 {
        return Err(Error::Config(format!(
            "{k} rooms of {} m with a corridor do not fit in {} m × {} m",
            spec.room_m, spec.extent_m[0], spec.extent_m[1]
        )));
    }
    let template = RoomTemplate::sample(n, res, rng);
    let door_at = rng.random_range(n / 4..=(3 * n / 4).saturating_sub(door).max(n / 4));
    let mut canvas = Canvas::walls(w, h);
    let mut rooms: Vec<[usize; 4]> = (0..k)
        .map(|i| template.stamp(&mut canvas, 1 + i * (n + 1), 1, (i + 1) as u8))
        .collect();
    let hall_rect = [1, n + 2, k * (n + 1), n + 2 + hall];
    canvas.fill(hall_rect, Cell::Free, (k + 1) as u8);
    for i in 0..k {
        let c0 = 1 + i * (n + 1) + door_at;
        canvas.fill([c0, n + 1, c0 + door, n + 2], Cell::Free, (k + 1) as u8);
    }
    rooms.push(hall_rect);
    Ok((canvas, rooms, n + 1))
}

fn random_partition(spec: &WorldSpec, rng: &mut ChaCha8Rng) -> Result<(Canvas, Vec<[usize; 4]>)> {
    let (w, h) = grid_dims(spec)?;
    let res = spec.resolution_m;
    let min_room = ((2.0 / res).round() as usize).max(2);
    let door = ((0.8 / res).round() as usize).max(1);
    if w < min_room + 2 || h < min_room + 2 {
        return Err(Error::Config(format!(
            "random partition needs at least {:.1} m per side",
            (min_room + 2) as f64 * res
        )));
    }
    let mut leaves = Vec::new();
    // (door rect, true when cut through a vertical wall)
    let mut doors: Vec<([usize; 4], bool)> = Vec::new();
    let mut stack = vec![[1, 1, w - 1, h - 1]];
    while let Some(rect @ [c0, r0, c1, r1]) = stack.pop() {
        let (rw, rh) = (c1 - c0, r1 - r0);
        let can_x = rw >= 2 * min_room + 1;
        let can_y = rh >= 2 * min_room + 1;
        let stop = leaves.len() + stack.len() >= 200 || (!can_x && !can_y) || rng.random_bool(0.15);
        if stop {
            leaves.push(rect);
            continue;
        }
        let split_x = if can_x && can_y { rw >= rh } else { can_x };
        if split_x {
            let s = rng.random_range(c0 + min_room..=c1 - min_room - 1);
            let d = rng.random_range(r0..=r1 - door.min(rh));
            doors.push(([s, d, s + 1, d + door.min(rh)], true));
            stack.push([c0, r0, s, r1]);
            stack.push([s + 1, r0, c1, r1]);
        } else {
            let s = rng.random_range(r0 + min_room..=r1 - min_room - 1);
            let d = rng.random_range(c0..=c1 - door.min(rw));
            doors.push(([d, s, d + door.min(rw), s + 1], false));
            stack.push([c0, r0, c1, s]);
            stack.push([c0, s + 1, c1, r1]);
        }
    }
    let mut canvas = Canvas::walls(w, h);
    for (i, rect) in leaves.iter().enumerate() {
        canvas.fill(*rect, Cell::Free, (i + 1) as u8);
    }
    for &(d, vertical) in &doors {
        // a door takes the texture of the room on its left / upper side
        let (c, r) = if vertical { (d[0] - 1, d[1]) } else { (d[0], d[1] - 1) };
        let tex = canvas.tex[r * w + c];
        canvas.fill(d, Cell::Free, tex);
    }
    for &[c0, r0, c1, r1] in &leaves {
        // occasional free-standing pillar
        let (rw, rh) = (c1 - c0, r1 - r0);
        let p = ((0.4 / res).round() as usize).max(1);
        if rw > 4 * p && rh > 4 * p && rng.random_bool(0.5) {
            let pc = rng.random_range(c0 + 2 * p..=c1 - 3 * p);
            let pr = rng.random_range(r0 + 2 * p..=r1 - 3 * p);
            canvas.fill([pc, pr, pc + p, pr + p], Cell::Wall, 0);
        }
    }
    Ok((canvas, leaves))
}

/// Number of 4-connected free components.
pub fn free_components(map: &FloorPlan) -> usize {
    let (w, h) = (map.width(), map.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || map.occupancy()[start].is_wall() {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (c, r) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && !map.occupancy()[j].is_wall() {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
    }
    count
}

/// Cells whose center is at least `clearance` from every wall cell center.
pub fn clear_cells(map: &FloorPlan, clearance_m: f64) -> Vec<(usize, usize)> {
    let k = (clearance_m / map.resolution()).ceil() as isize;
    let (w, h) = (map.width() as isize, map.height() as isize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if map.is_wall(c as usize, r as usize) {
                continue;
            }
            let clear = (-k..=k).all(|dr| {
                (-k..=k).all(|dc| {
                    let (cc, rr) = (c + dc, r + dr);
                    if cc < 0 || rr < 0 || cc >= w || rr >= h {
                        return false;
                    }
                    let dist = ((dc * dc + dr * dr) as f64).sqrt() * map.resolution();
                    dist >= clearance_m || !map.is_wall(cc as usize, rr as usize)
                })
            });
            if clear {
                out.push((c as usize, r as usize));
            }
        }
    }
    out
}

/// Uniformly sample poses over clear free cells (continuous position, heading).
pub fn sample_free_poses(map: &FloorPlan, n: usize, clearance_m: f64, rng: &mut impl Rng) -> Result<Vec<Pose>> {
    let cells = clear_cells(map, clearance_m);
    if cells.is_empty() && n > 0 {
        return Err(Error::EmptyDomain(format!("no free cell has {clearance_m} m clearance")));
    }
    Ok((0..n).map(|_| draw_pose(map, &cells, rng)).collect())
}

fn draw_pose(map: &FloorPlan, cells: &[(usize, usize)], rng: &mut impl Rng) -> Pose {
    let (res, o) = (map.resolution(), map.origin());
    let (c, r) = cells[rng.random_range(0..cells.len())];
    let x = o[0] + (c as f64 + rng.random::<f64>()) * res;
    let y = o[1] + (r as f64 + rng.random::<f64>()) * res;
    Pose::new(x, y, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Draw poses one at a time until `n_gt_poses` pass the view-depth check.
fn sample_view_poses(map: &FloorPlan, spec: &WorldSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Pose>> {
    let cells = clear_cells(map, spec.clearance_m);
    if cells.is_empty() {
        if spec.n_gt_poses == 0 {
            return Ok(Vec::new());
        }
        return Err(Error::EmptyDomain(format!("no free cell has {} m clearance", spec.clearance_m)));
    }
    let budget = 1000 * spec.n_gt_poses.max(1);
    let mut out = Vec::with_capacity(spec.n_gt_poses);
    for _ in 0..budget {
        if out.len() == spec.n_gt_poses {
            break;
        }
        let pose = draw_pose(map, &cells, rng);
        if spec.min_view_depth_m > 0.0 {
            let mut d = render_gt_rays(map, &pose, &spec.view_fan)?.depths;
            d.sort_by(f64::total_cmp);
            if d[d.len() / 2] < spec.min_view_depth_m {
                continue;
            }
        }
        out.push(pose);
    }
    if out.len() < spec.n_gt_poses {
        return Err(Error::EmptyDomain(format!(
            "only {} of {} poses met the view-depth requirement",
            out.len(),
            spec.n_gt_poses
        )));
    }
    Ok(out)
}

/// Build the map for `spec` and sample its ground-truth poses.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (canvas, rooms, pitch) = match spec.layout {
        Layout::TwinRooms => {
            let (c, r, p) = twin_rooms(spec, &mut rng)?;
            (c, r, Some(p))
        }
        Layout::Corridor { rooms } => {
            let (c, r, p) = corridor(spec, rooms, &mut rng)?;
            (c, r, Some(p))
        }
        Layout::RandomPartition => {
            let (c, r) = random_partition(spec, &mut rng)?;
            (c, r, None)
        }
    };
    let map = canvas.into_map(spec.resolution_m)?;
    let mut pose_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pose_rng.set_stream(1);
    let gt_poses = sample_view_poses(&map, spec, &mut pose_rng)?;
    Ok(World {
        map,
        gt_poses,
        rooms,
        room_pitch_cells: pitch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twin_rooms_are_congruent_and_distinct() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let map = &world.map;
        assert_eq!((map.width(), map.height()), (120, 60));
        assert_eq!(world.rooms.len(), 2);
        let [a, b] = [world.rooms[0], world.rooms[1]];
        assert_eq!(a[2] - a[0], 50);
        assert_eq!(b[0] - a[0], 51);
        // occupancy sub-grids including their walls match cell for cell
        for r in 0..52 {
            for c in 0..52 {
                assert_eq!(map.cell(c, r), map.cell(c + 51, r), "({c}, {r})");
            }
        }
        let (c, r) = (a[0], a[1]);
        assert!(!map.is_wall(c, r));
        assert_eq!((map.texture_id(c, r), map.texture_id(c + 51, r)), (1, 2));
        assert_eq!(map.texture_id(0, 0), 0);
        assert_eq!(world.room_at(2.0, 2.0), 1);
        assert_eq!(world.room_at(7.0, 2.0), 2);
        assert_eq!(world.gt_poses.len(), 200);
        for p in &world.gt_poses {
            assert!(map.is_free_at(p.x, p.y));
            let twin = world.twin_of(p).unwrap();
            assert!(map.is_free_at(twin.x, twin.y));
            assert_ne!(world.room_at(twin.x, twin.y), world.room_at(p.x, p.y));
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = generate_world(&WorldSpec::default()).unwrap();
        let b = generate_world(&WorldSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_world(&WorldSpec { seed: 99, ..WorldSpec::default() }).unwrap();
        assert_ne!(a.map, c.map);
    }

    #[test]
    fn too_small_extent_is_rejected() {
        let spec = WorldSpec {
            extent_m: [8.0, 6.0],
            ..WorldSpec::default()
        };
        assert!(matches!(generate_world(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn corridor_layouts_connect() {
        for k in [1, 3] {
            let spec = WorldSpec {
                layout: Layout::Corridor { rooms: k },
                extent_m: [k as f64 * 5.1 + 0.2, 7.6],
                ..WorldSpec::default()
            };
            let world = generate_world(&spec).unwrap();
            assert_eq!(free_components(&world.map), 1, "k = {k}");
            assert_eq!(world.rooms.len(), k + 1);
        }
    }

    #[test]
    fn random_partitions_connect_with_distinct_textures() {
        for seed in 0..8 {
            let spec = WorldSpec {
                layout: Layout::RandomPartition,
                extent_m: [16.0, 12.0],
                seed,
                n_gt_poses: 20,
                ..WorldSpec::default()
            };
            let world = generate_world(&spec).unwrap();
            assert_eq!(free_components(&world.map), 1, "seed {seed}");
            let mut ids: Vec<u8> = (0..world.rooms.len()).map(|i| (i + 1) as u8).collect();
            ids.dedup();
            assert_eq!(ids.len(), world.rooms.len());
            assert!(world.rooms.len() >= 2);
        }
    }

    #[test]
    fn twin_rooms_each_connected() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        // sealed twins: one component per room
        assert_eq!(free_components(&world.map), 2);
    }
}
