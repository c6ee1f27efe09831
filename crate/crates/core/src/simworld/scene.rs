//! Ground-truth scenes and their run-length text format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::generate::Difficulty;
use super::palette::{category_style, FLOOR_COLOR, WALL_COLOR};
use super::RayHit;
use crate::gamap::Occupancy;
use crate::geometry::{CellIndex, GridSpec, Pose};
use crate::planner::{fast_march, traversal_costs, DistanceField, PlanError, PlanningConfig};

/// Height of full walls and of the scene boundary (meters).
pub const WALL_HEIGHT: f64 = 2.5;

fn full_wall_height() -> f64 {
    WALL_HEIGHT
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scene: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Free,
    Wall,
    /// Index into [`Scene::objects`].
    Object(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: String,
    pub cells: Vec<CellIndex>,
    /// Sub-footprint rising to `height`; it shows the part colour above `part_low`.
    pub part_cells: Vec<CellIndex>,
    pub height: f64,
    /// Top of the remaining cells.
    pub part_low: f64,
}

/// An immutable ground-truth world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    spec: GridSpec,
    cells: Vec<CellKind>,
    is_part: Vec<bool>,
    heights: Vec<f64>,
    objects: Vec<ObjectInstance>,
    spawn: Pose,
    target: String,
    seed: u64,
    difficulty: Difficulty,
    wall_height: f64,
}

impl Scene {
    /// Builds a scene from a wall mask and objects; object cells override walls.
    pub fn new(
        spec: GridSpec,
        walls: &[bool],
        objects: Vec<ObjectInstance>,
        spawn: Pose,
        target: &str,
        seed: u64,
        difficulty: Difficulty,
    ) -> Result<Self, SceneError> {
        spec.validate()
            .map_err(|e| SceneError::Format(e.to_string()))?;
        if walls.len() != spec.len() {
            return Err(SceneError::Format(format!(
                "{} wall cells for a {}x{} grid",
                walls.len(),
                spec.rows,
                spec.cols
            )));
        }
        if objects.len() > u16::MAX as usize {
            return Err(SceneError::Format("too many objects".into()));
        }
        let mut cells: Vec<CellKind> = walls
            .iter()
            .map(|&w| if w { CellKind::Wall } else { CellKind::Free })
            .collect();
        let mut is_part = vec![false; spec.len()];
        let mut heights: Vec<f64> = walls
            .iter()
            .map(|&w| if w { WALL_HEIGHT } else { 0.0 })
            .collect();
        for (i, obj) in objects.iter().enumerate() {
            if category_style(&obj.category).is_none() {
                return Err(SceneError::Format(format!(
                    "unknown category {}",
                    obj.category
                )));
            }
            if !(obj.part_low > 0.0 && obj.part_low <= obj.height) {
                return Err(SceneError::Format(format!(
                    "object {i} has bad heights"
                )));
            }
            for c in &obj.cells {
                if !spec.contains(*c) {
                    return Err(SceneError::Format(format!("object {i} leaves the grid")));
                }
                cells[spec.index(*c)] = CellKind::Object(i as u16);
                heights[spec.index(*c)] = obj.part_low;
            }
            for c in &obj.part_cells {
                if !obj.cells.contains(c) {
                    return Err(SceneError::Format(format!(
                        "object {i} part cell outside its footprint"
                    )));
                }
                is_part[spec.index(*c)] = true;
                heights[spec.index(*c)] = obj.height;
            }
        }
        if !objects.iter().any(|o| o.category == target) {
            return Err(SceneError::Format(format!("no {target} in scene")));
        }
        let scene = Self {
            spec,
            cells,
            is_part,
            heights,
            objects,
            spawn,
            target: target.to_string(),
            seed,
            difficulty,
            wall_height: WALL_HEIGHT,
        };
        if !scene.is_free_point(spawn.x, spawn.y) {
            return Err(SceneError::Format("spawn is not in free space".into()));
        }
        Ok(scene)
    }

    /// The same scene with a different spawn pose.
    pub fn with_spawn(mut self, spawn: Pose) -> Result<Self, SceneError> {
        if !self.is_free_point(spawn.x, spawn.y) {
            return Err(SceneError::Format("spawn is not in free space".into()));
        }
        self.spawn = spawn;
        Ok(self)
    }

    /// The same scene with interior walls of height `h`; rays pass over walls lower
    /// than [`WALL_HEIGHT`]. The boundary stays full height.
    pub fn with_wall_height(mut self, h: f64) -> Result<Self, SceneError> {
        if !(h > 0.0 && h <= WALL_HEIGHT) {
            return Err(SceneError::Format(format!(
                "wall height {h} outside (0, {WALL_HEIGHT}]"
            )));
        }
        for (kind, height) in self.cells.iter().zip(self.heights.iter_mut()) {
            if *kind == CellKind::Wall {
                *height = h;
            }
        }
        self.wall_height = h;
        Ok(self)
    }

    pub fn wall_height(&self) -> f64 {
        self.wall_height
    }

    /// The same scene searched for another category present in it.
    pub fn with_target(mut self, target: &str) -> Result<Self, SceneError> {
        if !self.objects.iter().any(|o| o.category == target) {
            return Err(SceneError::Format(format!("no {target} in scene")));
        }
        self.target = target.to_string();
        Ok(self)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cell(&self, row: usize, col: usize) -> CellKind {
        self.cells[row * self.spec.cols + col]
    }

    pub fn kind_at(&self, cell: CellIndex) -> CellKind {
        self.cells[self.spec.index(cell)]
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn spawn(&self) -> Pose {
        self.spawn
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    /// Ground-truth obstacle mask (walls and furniture).
    pub fn obstacle_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|k| *k != CellKind::Free).collect()
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.spec
            .cell_of_xy(x, y)
            .is_some_and(|c| self.kind_at(c) == CellKind::Free)
    }

    pub fn is_target(&self, kind: CellKind) -> bool {
        match kind {
            CellKind::Object(i) => self.objects[i as usize].category == self.target,
            _ => false,
        }
    }

    /// Cells belonging to instances of the target category.
    pub fn target_cells(&self) -> Vec<CellIndex> {
        self.objects
            .iter()
            .filter(|o| o.category == self.target)
            .flat_map(|o| o.cells.iter().copied())
            .collect()
    }

    /// Horizontal distance from `(x, y)` to the nearest target footprint square.
    pub fn distance_to_target(&self, x: f64, y: f64) -> f64 {
        let res = self.spec.resolution;
        self.target_cells()
            .into_iter()
            .map(|c| {
                let x0 = self.spec.origin_x + c.col as f64 * res;
                let y0 = self.spec.origin_y + c.row as f64 * res;
                let dx = (x0 - x).max(0.0).max(x - (x0 + res));
                let dy = (y0 - y).max(0.0).max(y - (y0 + res));
                dx.hypot(dy)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Free cells whose centre lies within `success_distance` of the target.
    pub fn goal_region(&self, success_distance: f64) -> Vec<CellIndex> {
        let cells = self.target_cells();
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for c in &cells {
            r0 = r0.min(c.row);
            r1 = r1.max(c.row);
            c0 = c0.min(c.col);
            c1 = c1.max(c.col);
        }
        if cells.is_empty() {
            return Vec::new();
        }
        let pad = (success_distance / self.spec.resolution).ceil() as usize + 1;
        let mut out = Vec::new();
        for row in r0.saturating_sub(pad)..=(r1 + pad).min(self.spec.rows - 1) {
            for col in c0.saturating_sub(pad)..=(c1 + pad).min(self.spec.cols - 1) {
                let cell = CellIndex::new(row, col);
                if self.kind_at(cell) != CellKind::Free {
                    continue;
                }
                let (x, y) = self.spec.cell_center(cell);
                if self.distance_to_target(x, y) <= success_distance {
                    out.push(cell);
                }
            }
        }
        out
    }

    /// Geodesic distance field over the ground truth, planned like the agent plans.
    pub fn distance_field(
        &self,
        x: f64,
        y: f64,
        planning: &PlanningConfig,
    ) -> Result<DistanceField, PlanError> {
        let source = self
            .spec
            .cell_of_xy(x, y)
            .ok_or(PlanError::SourceBlocked(CellIndex::new(0, 0)))?;
        let occupancy: Vec<Occupancy> = self
            .cells
            .iter()
            .map(|k| match k {
                CellKind::Free => Occupancy::Free,
                _ => Occupancy::Obstacle,
            })
            .collect();
        let cost = traversal_costs(&self.spec, &occupancy, source, planning);
        fast_march(self.spec.rows, self.spec.cols, self.spec.resolution, &cost, source)
    }

    /// Shortest planned distance from `(x, y)` to the goal region, if reachable.
    pub fn shortest_path_length(
        &self,
        x: f64,
        y: f64,
        success_distance: f64,
        planning: &PlanningConfig,
    ) -> Option<f64> {
        let field = self.distance_field(x, y, planning).ok()?;
        let d = self
            .goal_region(success_distance)
            .into_iter()
            .map(|c| field.get(c))
            .fold(f64::INFINITY, f64::min);
        d.is_finite().then_some(d)
    }

    /// Top of whatever occupies the cell (0 for free cells).
    pub fn cell_height(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.spec.cols + col]
    }

    /// Colour of a surface point at height `h` inside the hit cell.
    pub fn surface_color(&self, hit: &RayHit, h: f64) -> [u8; 3] {
        match hit.kind {
            CellKind::Free => FLOOR_COLOR,
            CellKind::Wall => WALL_COLOR,
            CellKind::Object(i) => {
                let obj = &self.objects[i as usize];
                let style = category_style(&obj.category).expect("validated category");
                let part = self.is_part[hit.row * self.spec.cols + hit.col];
                if part && h >= obj.part_low {
                    style.part
                } else {
                    style.body
                }
            }
        }
    }

    /// True when the straight segment between two points crosses only free cells.
    pub fn segment_is_free(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        let len = (x1 - x0).hypot(y1 - y0);
        let n = (len / (self.spec.resolution * 0.25)).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            self.is_free_point(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        })
    }

    pub fn to_file(&self) -> SceneFile {
        let rows = (0..self.spec.rows)
            .map(|r| {
                let line: Vec<bool> = (0..self.spec.cols)
                    .map(|c| self.cell(r, c) == CellKind::Wall)
                    .collect();
                encode_rle(&line)
            })
            .collect();
        SceneFile {
            seed: self.seed,
            difficulty: self.difficulty,
            resolution: self.spec.resolution,
            rows: self.spec.rows,
            cols: self.spec.cols,
            origin: [self.spec.origin_x, self.spec.origin_y],
            target: self.target.clone(),
            spawn: [self.spawn.x, self.spawn.y, self.spawn.theta],
            walls: rows,
            wall_height: self.wall_height,
            objects: self.objects.clone(),
        }
    }

    pub fn from_file(file: &SceneFile) -> Result<Self, SceneError> {
        let spec = GridSpec::new(
            file.resolution,
            file.rows,
            file.cols,
            file.origin[0],
            file.origin[1],
        )
        .map_err(|e| SceneError::Format(e.to_string()))?;
        if file.walls.len() != file.rows {
            return Err(SceneError::Format(format!(
                "{} wall rows, expected {}",
                file.walls.len(),
                file.rows
            )));
        }
        let mut walls = Vec::with_capacity(spec.len());
        for (r, line) in file.walls.iter().enumerate() {
            let decoded = decode_rle(line).map_err(|m| SceneError::Format(format!("row {r}: {m}")))?;
            if decoded.len() != file.cols {
                return Err(SceneError::Format(format!(
                    "row {r} has {} cells, expected {}",
                    decoded.len(),
                    file.cols
                )));
            }
            walls.extend(decoded);
        }
        let [x, y, theta] = file.spawn;
        Scene::new(
            spec,
            &walls,
            file.objects.clone(),
            Pose::new(x, y, theta),
            &file.target,
            file.seed,
            file.difficulty,
        )?
        .with_wall_height(file.wall_height)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// ASCII picture: `#` wall, `.` free, letters for objects (upper case for the target).
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for r in (0..self.spec.rows).rev() {
            for c in 0..self.spec.cols {
                out.push(match self.cell(r, c) {
                    CellKind::Free => '.',
                    CellKind::Wall => '#',
                    CellKind::Object(i) => {
                        let obj = &self.objects[i as usize];
                        let ch = obj.category.chars().next().unwrap_or('o');
                        if obj.category == self.target {
                            ch.to_ascii_uppercase()
                        } else {
                            ch
                        }
                    }
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Serialized scene. Wall rows are run-length encoded, e.g. `"12#3.40#"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub seed: u64,
    pub difficulty: Difficulty,
    pub resolution: f64,
    pub rows: usize,
    pub cols: usize,
    pub origin: [f64; 2],
    pub target: String,
    /// `[x, y, theta]`.
    pub spawn: [f64; 3],
    pub walls: Vec<String>,
    #[serde(default = "full_wall_height")]
    pub wall_height: f64,
    pub objects: Vec<ObjectInstance>,
}

fn encode_rle(line: &[bool]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < line.len() {
        let v = line[i];
        let mut j = i;
        while j < line.len() && line[j] == v {
            j += 1;
        }
        out.push_str(&(j - i).to_string());
        out.push(if v { '#' } else { '.' });
        i = j;
    }
    out
}

fn decode_rle(s: &str) -> Result<Vec<bool>, String> {
    let mut out = Vec::new();
    let mut n: Option<usize> = None;
    for ch in s.chars() {
        match ch {
            '0'..='9' => {
                let d = ch as usize - '0' as usize;
                n = Some(n.unwrap_or(0).checked_mul(10).and_then(|v| v.checked_add(d)).ok_or("run too long")?);
            }
            '#' | '.' => {
                let count = n.take().ok_or_else(|| format!("'{ch}' without a count"))?;
                out.extend(std::iter::repeat_n(ch == '#', count));
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    if n.is_some() {
        return Err("trailing count".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        let line = [true, true, false, false, false, true];
        let s = encode_rle(&line);
        assert_eq!(s, "2#3.1#");
        assert_eq!(decode_rle(&s).unwrap(), line);
        assert!(decode_rle("3").is_err());
        assert!(decode_rle("#").is_err());
        assert!(decode_rle("2x").is_err());
    }
}
