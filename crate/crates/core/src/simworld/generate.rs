//! Seeded procedural scenes.
//!
//! All scenes use 0.1 m cells with the grid origin at (0, 0). Every attempt draws from
//! one ChaCha stream seeded by the scene seed, so a seed always yields the same scene.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::palette::{categories, category_style, CategoryStyle};
use super::scene::{ObjectInstance, Scene};
use super::{default_intrinsics, render};
use crate::geometry::{CellIndex, GridSpec, Pose, SensorConfig};
use crate::planner::{inflate, PlanningConfig};

pub const RESOLUTION: f64 = 0.1;
pub const MAX_ATTEMPTS: usize = 20;
/// Success radius the generator guarantees a reachable goal region for.
pub const GENERATION_SUCCESS_DISTANCE: f64 = 1.0;
/// Largest share of any spawn view the multiscale target's part may cover.
pub const MULTISCALE_PART_LIMIT: f64 = 0.02;

const CLEARANCE: usize = 6;
const DOOR: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Maze,
    Multiscale,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Maze => "maze",
            Difficulty::Multiscale => "multiscale",
        })
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "maze" => Ok(Difficulty::Maze),
            "multiscale" => Ok(Difficulty::Multiscale),
            other => Err(format!("unknown difficulty {other:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("no valid {difficulty} scene for seed {seed} after {attempts} attempts")]
    GenerationFailed {
        seed: u64,
        difficulty: Difficulty,
        attempts: usize,
    },
}

/// Generates the scene for `seed`, retrying up to [`MAX_ATTEMPTS`] layouts until the
/// target is reachable (and, for multiscale, small enough in every spawn view).
pub fn generate_scene(seed: u64, difficulty: Difficulty) -> Result<Scene, GenerationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let scene = match difficulty {
            Difficulty::Easy => easy(&mut rng, seed),
            Difficulty::Maze => maze(&mut rng, seed),
            Difficulty::Multiscale => multiscale(&mut rng, seed),
        };
        if let Some(scene) = scene {
            return Ok(scene);
        }
    }
    Err(GenerationError::GenerationFailed {
        seed,
        difficulty,
        attempts: MAX_ATTEMPTS,
    })
}

/// Direction the back of an object faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    North,
    South,
    East,
    West,
}

const SIDES: [Side; 4] = [Side::North, Side::South, Side::East, Side::West];

/// Interior rows `r0..r1`, cols `c0..c1`.
#[derive(Debug, Clone, Copy)]
struct Room {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

struct Layout {
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    keepout: Vec<bool>,
    occupied: Vec<bool>,
    objects: Vec<ObjectInstance>,
}

impl Layout {
    fn new(rows: usize, cols: usize) -> Self {
        let mut l = Self {
            rows,
            cols,
            walls: vec![false; rows * cols],
            keepout: vec![false; rows * cols],
            occupied: vec![false; rows * cols],
            objects: Vec::new(),
        };
        l.hline(0, 0, cols - 1);
        l.hline(rows - 1, 0, cols - 1);
        l.vline(0, 0, rows - 1);
        l.vline(cols - 1, 0, rows - 1);
        l
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    fn hline(&mut self, row: usize, c0: usize, c1: usize) {
        for c in c0..=c1 {
            let i = self.idx(row, c);
            self.walls[i] = true;
        }
    }

    fn vline(&mut self, col: usize, r0: usize, r1: usize) {
        for r in r0..=r1 {
            let i = self.idx(r, col);
            self.walls[i] = true;
        }
    }

    /// Opens rows `r0..r1` x cols `c0..c1` and keeps furniture `margin` cells away.
    fn door(&mut self, r0: usize, r1: usize, c0: usize, c1: usize, margin: usize) {
        for r in r0..r1 {
            for c in c0..c1 {
                let i = self.idx(r, c);
                self.walls[i] = false;
            }
        }
        for r in r0.saturating_sub(margin)..(r1 + margin).min(self.rows) {
            for c in c0.saturating_sub(margin)..(c1 + margin).min(self.cols) {
                let i = self.idx(r, c);
                self.keepout[i] = true;
            }
        }
    }

    /// Places a `(depth, width)` object with its back to `side` of `room` at offset
    /// `along` from the room's low edge; fails on overlap or crowding.
    #[allow(clippy::too_many_arguments)]
    fn place(
        &mut self,
        room: Room,
        style: &CategoryStyle,
        depth: usize,
        width: usize,
        part_rows: usize,
        side: Side,
        along: usize,
    ) -> bool {
        let (r0, r1, c0, c1) = match side {
            Side::North => (room.r1.wrapping_sub(depth), room.r1, room.c0 + along, room.c0 + along + width),
            Side::South => (room.r0, room.r0 + depth, room.c0 + along, room.c0 + along + width),
            Side::East => (room.r0 + along, room.r0 + along + width, room.c1.wrapping_sub(depth), room.c1),
            Side::West => (room.r0 + along, room.r0 + along + width, room.c0, room.c0 + depth),
        };
        if r1 > room.r1 || c1 > room.c1 || r0 < room.r0 || c0 < room.c0 || r0 >= r1 || c0 >= c1 {
            return false;
        }
        for r in r0..r1 {
            for c in c0..c1 {
                let i = self.idx(r, c);
                if self.walls[i] || self.keepout[i] || self.occupied[i] {
                    return false;
                }
            }
        }
        for r in r0.saturating_sub(CLEARANCE)..(r1 + CLEARANCE).min(self.rows) {
            for c in c0.saturating_sub(CLEARANCE)..(c1 + CLEARANCE).min(self.cols) {
                if self.occupied[self.idx(r, c)] {
                    return false;
                }
            }
        }
        let mut cells = Vec::new();
        let mut part_cells = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                let i = self.idx(r, c);
                self.occupied[i] = true;
                let cell = CellIndex::new(r, c);
                cells.push(cell);
                let is_part = part_rows == 0
                    || match side {
                        Side::North => r >= r1 - part_rows,
                        Side::South => r < r0 + part_rows,
                        Side::East => c >= c1 - part_rows,
                        Side::West => c < c0 + part_rows,
                    };
                if is_part {
                    part_cells.push(cell);
                }
            }
        }
        self.objects.push(ObjectInstance {
            category: style.name.to_string(),
            cells,
            part_cells,
            height: style.height,
            part_low: style.part_low,
        });
        true
    }

    /// Tries random rooms, sides and offsets.
    fn place_random(
        &mut self,
        rng: &mut ChaCha8Rng,
        rooms: &[Room],
        style: &CategoryStyle,
        footprint: (usize, usize),
        part_rows: usize,
    ) -> bool {
        let (depth, width) = footprint;
        for _ in 0..60 {
            let room = *rooms.choose(rng).expect("at least one room");
            let side = *SIDES.choose(rng).expect("four sides");
            let span = match side {
                Side::North | Side::South => room.c1 - room.c0,
                Side::East | Side::West => room.r1 - room.r0,
            };
            if span < width {
                continue;
            }
            let along = rng.random_range(0..=span - width);
            if self.place(room, style, depth, width, part_rows, side, along) {
                return true;
            }
        }
        false
    }

    /// Picks a spawn well clear of obstacles with a reachable goal region, at least
    /// `min_distance` (straight line) and `min_path` (planned) from the target.
    fn finish(
        self,
        rng: &mut ChaCha8Rng,
        target: &str,
        seed: u64,
        difficulty: Difficulty,
        candidates: Option<Vec<CellIndex>>,
        min_distance: f64,
        min_path: f64,
    ) -> Option<Scene> {
        let spec = GridSpec::new(RESOLUTION, self.rows, self.cols, 0.0, 0.0).ok()?;
        let blocked: Vec<bool> = self
            .walls
            .iter()
            .zip(&self.occupied)
            .map(|(w, o)| *w || *o)
            .collect();
        let crowded = inflate(&blocked, self.rows, self.cols, 3);
        let mut cells: Vec<CellIndex> = candidates.unwrap_or_else(|| {
            (0..spec.len())
                .filter(|&i| !crowded[i])
                .map(|i| spec.cell_at(i))
                .collect()
        });
        cells.retain(|c| !crowded[spec.index(*c)]);
        cells.shuffle(rng);
        let heading = rng.random_range(0..12) as f64 * PI / 6.0;
        let placeholder = {
            let c = *cells.first()?;
            let (x, y) = spec.cell_center(c);
            Pose::new(x, y, heading)
        };
        let scene = Scene::new(
            spec,
            &self.walls,
            self.objects,
            placeholder,
            target,
            seed,
            difficulty,
        )
        .ok()?;
        let planning = PlanningConfig::default();
        for c in cells.into_iter().take(40) {
            let (x, y) = spec.cell_center(c);
            if scene.distance_to_target(x, y) < min_distance {
                continue;
            }
            match scene.shortest_path_length(x, y, GENERATION_SUCCESS_DISTANCE, &planning) {
                Some(d) if d >= min_path => return scene.with_spawn(Pose::new(x, y, heading)).ok(),
                _ => {}
            }
        }
        None
    }
}

fn style(name: &str) -> &'static CategoryStyle {
    category_style(name).expect("built-in category")
}

fn easy(rng: &mut ChaCha8Rng, seed: u64) -> Option<Scene> {
    let rows = rng.random_range(80..=110);
    let cols = rng.random_range(100..=140);
    let mut l = Layout::new(rows, cols);
    let vx = rng.random_range(cols * 35 / 100..=cols * 65 / 100);
    l.vline(vx, 0, rows - 1);
    let dr = rng.random_range(2..rows - 2 - DOOR);
    l.door(dr, dr + DOOR, vx, vx + 1, 8);
    let mut rooms = vec![
        Room { r0: 1, r1: rows - 1, c0: 1, c1: vx },
        Room { r0: 1, r1: rows - 1, c0: vx + 1, c1: cols - 1 },
    ];
    if rng.random_bool(0.7) {
        let i = rng.random_range(0..2);
        let room = rooms.remove(i);
        let h = room.r1 - room.r0;
        let hy = room.r0 + rng.random_range(h * 35 / 100..=h * 65 / 100);
        l.hline(hy, room.c0 - 1, room.c1);
        let dc = rng.random_range(room.c0 + 1..room.c1 - 1 - DOOR);
        l.door(hy, hy + 1, dc, dc + DOOR, 8);
        rooms.push(Room { r0: room.r0, r1: hy, ..room });
        rooms.push(Room { r0: hy + 1, ..room });
    }
    let mut cats = categories();
    cats.shuffle(rng);
    let target = cats[0];
    let n_distractors = rng.random_range(2..=3);
    for (i, cat) in cats.iter().take(1 + n_distractors).enumerate() {
        let s = style(cat);
        if !l.place_random(rng, &rooms, s, s.footprint, s.part_rows) && i == 0 {
            return None;
        }
    }
    l.finish(rng, target, seed, Difficulty::Easy, None, 2.0, 1.5)
}

const MAZE_CELLS: usize = 8;
const MAZE_PITCH: usize = 12;
/// Maze partitions are waist high: below the camera, so the layout is seen over them.
pub const MAZE_WALL_HEIGHT: f64 = 0.6;

struct Maze {
    n: usize,
    /// `h[r][c]`: wall between coarse cells (r, c) and (r + 1, c).
    h: Vec<Vec<bool>>,
    /// `v[r][c]`: wall between coarse cells (r, c) and (r, c + 1).
    v: Vec<Vec<bool>>,
}

impl Maze {
    fn divide(&mut self, rng: &mut ChaCha8Rng, r0: usize, c0: usize, h: usize, w: usize) {
        if h < 2 || w < 2 {
            return;
        }
        let horizontal = if h != w { h > w } else { rng.random_bool(0.5) };
        if horizontal {
            let k = rng.random_range(1..h);
            let gap = c0 + rng.random_range(0..w);
            for c in c0..c0 + w {
                self.h[r0 + k - 1][c] = c != gap;
            }
            self.divide(rng, r0, c0, k, w);
            self.divide(rng, r0 + k, c0, h - k, w);
        } else {
            let k = rng.random_range(1..w);
            let gap = r0 + rng.random_range(0..h);
            for r in r0..r0 + h {
                self.v[r][c0 + k - 1] = r != gap;
            }
            self.divide(rng, r0, c0, h, k);
            self.divide(rng, r0, c0 + k, h, w - k);
        }
    }

    /// Closed sides of a coarse cell, boundary included.
    fn closed(&self, r: usize, c: usize) -> [bool; 4] {
        let n = self.n;
        [
            r + 1 == n || self.h[r][c],
            r == 0 || self.h[r - 1][c],
            c + 1 == n || self.v[r][c],
            c == 0 || self.v[r][c - 1],
        ]
    }
}

fn maze(rng: &mut ChaCha8Rng, seed: u64) -> Option<Scene> {
    let n = MAZE_CELLS;
    let mut m = Maze {
        n,
        h: vec![vec![false; n]; n - 1],
        v: vec![vec![false; n - 1]; n],
    };
    m.divide(rng, 0, 0, n, n);
    // a few loops
    for _ in 0..n / 2 {
        if rng.random_bool(0.5) {
            let (r, c) = (rng.random_range(0..n - 1), rng.random_range(0..n));
            m.h[r][c] = false;
        } else {
            let (r, c) = (rng.random_range(0..n), rng.random_range(0..n - 1));
            m.v[r][c] = false;
        }
    }
    let size = n * MAZE_PITCH + 1;
    let mut l = Layout::new(size, size);
    for r in 0..n {
        for c in 0..n {
            if r + 1 < n && m.h[r][c] {
                l.hline((r + 1) * MAZE_PITCH, c * MAZE_PITCH, (c + 1) * MAZE_PITCH);
            }
            if c + 1 < n && m.v[r][c] {
                l.vline((c + 1) * MAZE_PITCH, r * MAZE_PITCH, (r + 1) * MAZE_PITCH);
            }
        }
    }
    let room_of = |r: usize, c: usize| Room {
        r0: r * MAZE_PITCH + 1,
        r1: (r + 1) * MAZE_PITCH,
        c0: c * MAZE_PITCH + 1,
        c1: (c + 1) * MAZE_PITCH,
    };
    // dead ends, with the side facing away from their single opening
    let mut dead_ends: Vec<(usize, usize, Side)> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let closed = m.closed(r, c);
            if closed.iter().filter(|x| **x).count() == 3 {
                let side = match closed.iter().position(|x| !*x) {
                    Some(0) => Side::South,
                    Some(1) => Side::North,
                    Some(2) => Side::West,
                    _ => Side::East,
                };
                dead_ends.push((r, c, side));
            }
        }
    }
    if dead_ends.is_empty() {
        return None;
    }
    dead_ends.shuffle(rng);
    let mut small = vec!["chair", "toilet", "plant", "tv"];
    small.shuffle(rng);
    let n_distractors = rng.random_range(2..=3).min(dead_ends.len() - 1);
    let mut used = Vec::new();
    for (i, cat) in small.iter().take(1 + n_distractors).enumerate() {
        let (r, c, side) = dead_ends[i];
        let s = style(cat);
        let (depth, width) = s.footprint;
        let along = (MAZE_PITCH - 1 - width) / 2;
        if !l.place(room_of(r, c), s, depth, width, s.part_rows, side, along) {
            return None;
        }
        used.push((r, c));
    }
    let centers: Vec<CellIndex> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .filter(|rc| !used.contains(rc))
        .map(|(r, c)| CellIndex::new(r * MAZE_PITCH + MAZE_PITCH / 2, c * MAZE_PITCH + MAZE_PITCH / 2))
        .collect();
    l.finish(rng, small[0], seed, Difficulty::Maze, Some(centers), 3.0, 4.0)?
        .with_wall_height(MAZE_WALL_HEIGHT)
        .ok()
}

const ALCOVE_DEPTH: usize = 24;
const MULTISCALE_TARGET: &str = "chair";
const MULTISCALE_TARGET_SIZE: usize = 3;

fn multiscale(rng: &mut ChaCha8Rng, seed: u64) -> Option<Scene> {
    let rows = rng.random_range(110..=130);
    let cols = rng.random_range(150..=180);
    let mut l = Layout::new(rows, cols);
    let k = rng.random_range(3..=4);
    let bottom = ALCOVE_DEPTH + 1;
    let top = rows - 2 - ALCOVE_DEPTH;
    l.hline(bottom, 0, cols - 1);
    l.hline(top, 0, cols - 1);
    let mut alcoves = Vec::new();
    let span = (cols - 2) / k;
    for band in [(1, bottom), (top + 1, rows - 1)] {
        for a in 0..k {
            let c0 = 1 + a * span;
            let c1 = if a + 1 == k { cols - 1 } else { c0 + span - 1 };
            if a + 1 < k {
                l.vline(c1, band.0, band.1 - 1);
            }
            let opening = 14;
            let oc = rng.random_range(c0 + 2..c1 - 2 - opening);
            let wall_row = if band.0 == 1 { bottom } else { top };
            l.door(wall_row, wall_row + 1, oc, oc + opening, 6);
            alcoves.push(Room { r0: band.0, r1: band.1, c0, c1 });
        }
    }
    let hall = Room {
        r0: bottom + 1,
        r1: top,
        c0: 1,
        c1: cols - 1,
    };
    let chair = style(MULTISCALE_TARGET);
    let where_ = if rng.random_bool(0.5) { alcoves.clone() } else { vec![hall] };
    if !l.place_random(
        rng,
        &where_,
        chair,
        (MULTISCALE_TARGET_SIZE, MULTISCALE_TARGET_SIZE),
        1,
    ) {
        return None;
    }
    let mut rooms = alcoves;
    rooms.push(hall);
    let mut distractors = vec!["sofa", "bed", "tv", "plant"];
    distractors.shuffle(rng);
    for cat in distractors.iter().take(rng.random_range(3..=4)) {
        let s = style(cat);
        l.place_random(rng, &rooms, s, s.footprint, s.part_rows);
    }
    let hall_cells: Vec<CellIndex> = (hall.r0..hall.r1)
        .flat_map(|r| (hall.c0..hall.c1).map(move |c| CellIndex::new(r, c)))
        .collect();
    let scene = l.finish(
        rng,
        MULTISCALE_TARGET,
        seed,
        Difficulty::Multiscale,
        Some(hall_cells),
        6.0,
        6.0,
    )?;
    (max_part_fraction(&scene) < MULTISCALE_PART_LIMIT).then_some(scene)
}

/// Largest share of pixels showing the target's part colour over the twelve headings
/// available at the spawn point.
pub fn max_part_fraction(scene: &Scene) -> f64 {
    let k = default_intrinsics();
    let sensor = SensorConfig::default();
    let part = style(scene.target()).part;
    let spawn = scene.spawn();
    (0..12)
        .map(|i| {
            let pose = Pose::new(spawn.x, spawn.y, spawn.theta + i as f64 * PI / 6.0);
            let obs = render(scene, &pose, &k, &sensor).expect("spawn is free");
            super::count_color(&obs.rgb, part) as f64 / (k.width * k.height) as f64
        })
        .fold(0.0, f64::max)
}
