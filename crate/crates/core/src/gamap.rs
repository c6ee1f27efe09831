//! The GA map: per-cell attribute scores over an occupancy grid.
//!
//! Each observation is back-projected into the ground grid. Within one observation a
//! cell takes the per-channel maximum of the pixels that land in it; across
//! observations the cell value is merged with the previous one by an [`UpdateMode`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    back_project_depth, to_world, CameraIntrinsics, CellIndex, GridSpec, HeightClass, Pose,
    SensorConfig,
};
use crate::image::DepthImage;
use crate::pyramid::ScoreImage;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cell ({}, {}) outside the map", .0.row, .0.col)]
    OutOfBounds(CellIndex),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed map file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Occupancy {
    #[default]
    Unknown,
    Free,
    Obstacle,
}

impl Occupancy {
    fn symbol(self) -> char {
        match self {
            Occupancy::Unknown => '?',
            Occupancy::Free => '.',
            Occupancy::Obstacle => '#',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        match c {
            '?' => Some(Occupancy::Unknown),
            '.' => Some(Occupancy::Free),
            '#' => Some(Occupancy::Obstacle),
            _ => None,
        }
    }
}

/// How a revisited cell merges its stored score with a new observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    Max,
    Average,
    Replacement,
}

impl std::str::FromStr for UpdateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Self::Max),
            "average" | "avg" => Ok(Self::Average),
            "replacement" | "replace" => Ok(Self::Replacement),
            _ => Err(format!("unknown update mode {s:?}")),
        }
    }
}

/// `old = None` means the cell was never scored.
pub fn update_rule(old: Option<f64>, new: f64, mode: UpdateMode) -> f64 {
    match (old, mode) {
        (None, _) => new,
        (Some(o), UpdateMode::Max) => o.max(new),
        (Some(o), UpdateMode::Average) => (o + new) / 2.0,
        (Some(_), UpdateMode::Replacement) => new,
    }
}

/// One observation projected onto the grid, before it is merged into the map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationFusion {
    /// Cell index to per-channel maximum pixel score.
    pub cell_scores: BTreeMap<usize, Vec<f64>>,
    pub obstacle_cells: BTreeSet<usize>,
    pub floor_cells: BTreeSet<usize>,
    /// Visible floor runs `(from, to, include_to)`: cells on the line are seen free.
    pub free_spans: Vec<(CellIndex, CellIndex, bool)>,
    pub agent_cell: Option<CellIndex>,
    /// Valid points that fell outside the grid.
    pub dropped_points: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    pub scored_cells: usize,
    pub obstacle_cells: usize,
    pub dropped_points: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaMap {
    spec: GridSpec,
    channels: Vec<String>,
    update_mode: UpdateMode,
    /// NaN marks an unobserved cell; cosine scores can be negative so 0 is not a sentinel.
    scores: Vec<f64>,
    occupancy: Vec<Occupancy>,
    visited: Vec<bool>,
    dropped_points: u64,
}

impl GaMap {
    pub fn new(spec: GridSpec, channels: Vec<String>, update_mode: UpdateMode) -> Self {
        let n = spec.len();
        Self {
            scores: vec![f64::NAN; n * channels.len()],
            occupancy: vec![Occupancy::Unknown; n],
            visited: vec![false; n],
            spec,
            channels,
            update_mode,
            dropped_points: 0,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn update_mode(&self) -> UpdateMode {
        self.update_mode
    }

    pub fn dropped_points(&self) -> u64 {
        self.dropped_points
    }

    fn check(&self, cell: CellIndex) -> Result<usize, MapError> {
        if self.spec.contains(cell) {
            Ok(self.spec.index(cell))
        } else {
            Err(MapError::OutOfBounds(cell))
        }
    }

    pub fn occupancy(&self, cell: CellIndex) -> Occupancy {
        self.occupancy[self.spec.index(cell)]
    }

    pub fn occupancy_grid(&self) -> &[Occupancy] {
        &self.occupancy
    }

    /// Overwrites one cell's occupancy.
    pub fn set_occupancy(&mut self, cell: CellIndex, occ: Occupancy) {
        let i = self.spec.index(cell);
        self.occupancy[i] = occ;
    }

    pub fn is_visited(&self, cell: CellIndex) -> bool {
        self.visited[self.spec.index(cell)]
    }

    pub fn mark_visited(&mut self, cell: CellIndex) {
        let i = self.spec.index(cell);
        self.visited[i] = true;
    }

    pub fn is_scored(&self, cell: CellIndex) -> bool {
        let c = self.channels.len();
        c > 0 && !self.scores[self.spec.index(cell) * c].is_nan()
    }

    pub fn score(&self, cell: CellIndex, channel: usize) -> Option<f64> {
        let v = self.scores[self.spec.index(cell) * self.channels.len() + channel];
        (!v.is_nan()).then_some(v)
    }

    /// Writes a score directly, bypassing the update rule.
    pub fn set_scores(&mut self, cell: CellIndex, values: &[f64]) {
        let c = self.channels.len();
        assert_eq!(values.len(), c);
        let i = self.spec.index(cell) * c;
        self.scores[i..i + c].copy_from_slice(values);
    }

    /// Per-channel scores of `cell`, or `None` if it was never scored.
    pub fn scores_at(&self, cell: CellIndex) -> Option<&[f64]> {
        let c = self.channels.len();
        let i = self.spec.index(cell) * c;
        let s = &self.scores[i..i + c];
        (c > 0 && !s[0].is_nan()).then_some(s)
    }

    /// Mean over all channels.
    pub fn channel_mean(&self, cell: CellIndex) -> Result<Option<f64>, MapError> {
        self.check(cell)?;
        Ok(self
            .scores_at(cell)
            .map(|s| s.iter().sum::<f64>() / s.len() as f64))
    }

    /// Projects one scored RGB-D observation onto the grid without touching the map.
    pub fn stage_observation(
        &self,
        scores: &ScoreImage,
        depth: &DepthImage,
        pose: &Pose,
        intrinsics: &CameraIntrinsics,
        sensor: &SensorConfig,
    ) -> Result<ObservationFusion, MapError> {
        if scores.height() != depth.height() || scores.width() != depth.width() {
            return Err(MapError::DimensionMismatch(format!(
                "scores {}x{} vs depth {}x{}",
                scores.height(),
                scores.width(),
                depth.height(),
                depth.width()
            )));
        }
        if depth.height() != intrinsics.height || depth.width() != intrinsics.width {
            return Err(MapError::DimensionMismatch(format!(
                "depth {}x{} vs camera {}x{}",
                depth.height(),
                depth.width(),
                intrinsics.height,
                intrinsics.width
            )));
        }
        if scores.channels() != self.channels.len() {
            return Err(MapError::DimensionMismatch(format!(
                "{} score channels vs {} map channels",
                scores.channels(),
                self.channels.len()
            )));
        }
        let spec = &self.spec;
        let mut out = ObservationFusion {
            agent_cell: spec.cell_of_xy(pose.x, pose.y),
            ..Default::default()
        };
        for q in 0..depth.width() {
            // (horizontal range, world x, world y, surface hit)
            let mut column: Vec<(f64, f64, f64, bool)> = Vec::new();
            for p in 0..depth.height() {
                let d = depth.get(p, q);
                if !sensor.depth_is_valid(d) {
                    continue;
                }
                let Ok(cam) = back_project_depth(intrinsics, p, q, d) else {
                    continue;
                };
                let mut world = to_world(&cam, pose, sensor.camera_height);
                let class = sensor.height_filter.classify(world.z);
                if class == HeightClass::Ignored {
                    continue;
                }
                let (dx, dy) = (world.x - pose.x, world.y - pose.y);
                let range = dx.hypot(dy);
                if class == HeightClass::Obstacle && range > 0.0 {
                    // surface hits sit on cell boundaries; push them into the surface
                    world.x += dx / range * sensor.surface_nudge;
                    world.y += dy / range * sensor.surface_nudge;
                }
                let Some(cell) = spec.cell_of_xy(world.x, world.y) else {
                    out.dropped_points += 1;
                    continue;
                };
                let idx = spec.index(cell);
                let hit = class == HeightClass::Obstacle;
                if hit {
                    out.obstacle_cells.insert(idx);
                } else if range <= sensor.explore_range {
                    out.floor_cells.insert(idx);
                }
                column.push((range, world.x, world.y, hit));
                let px = scores.pixel(p, q);
                out.cell_scores
                    .entry(idx)
                    .and_modify(|cur| {
                        for (c, &v) in cur.iter_mut().zip(px) {
                            *c = c.max(v);
                        }
                    })
                    .or_insert_with(|| px.to_vec());
            }
            self.visible_spans(&mut column, pose, sensor.explore_range, &mut out.free_spans);
        }
        Ok(out)
    }

    /// Floor seen along one image column: from the agent to the first return, then
    /// between consecutive floor returns. Nothing is carved behind a surface hit.
    ///
    /// At equal range a hit sorts after floor returns, so the low rows of a wall face
    /// (classified as floor by height) never start a span behind the wall.
    fn visible_spans(
        &self,
        column: &mut [(f64, f64, f64, bool)],
        pose: &Pose,
        explore_range: f64,
        spans: &mut Vec<(CellIndex, CellIndex, bool)>,
    ) {
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
        let mut prev = (0.0, pose.x, pose.y, false);
        for &pt in column.iter() {
            if prev.0 >= explore_range {
                break;
            }
            if !prev.3 {
                let (end, include) = if pt.0 > explore_range {
                    let t = (explore_range - prev.0) / (pt.0 - prev.0);
                    ((prev.1 + t * (pt.1 - prev.1), prev.2 + t * (pt.2 - prev.2)), true)
                } else {
                    ((pt.1, pt.2), !pt.3)
                };
                if let (Some(a), Some(b)) = (
                    self.spec.cell_of_xy(prev.1, prev.2),
                    self.spec.cell_of_xy(end.0, end.1),
                ) {
                    spans.push((a, b, include));
                }
            }
            prev = pt;
        }
    }

    /// Merges a staged observation: occupancy first, then scores via the update mode.
    pub fn apply_observation(&mut self, fusion: &ObservationFusion) -> FusionStats {
        for &i in &fusion.obstacle_cells {
            self.occupancy[i] = Occupancy::Obstacle;
        }
        for &(from, to, include) in &fusion.free_spans {
            let line = line_cells(from, to);
            let n = if include { line.len() } else { line.len() - 1 };
            for cell in &line[..n] {
                let i = self.spec.index(*cell);
                if self.occupancy[i] == Occupancy::Unknown {
                    self.occupancy[i] = Occupancy::Free;
                }
            }
        }
        if let Some(agent) = fusion.agent_cell {
            let i = self.spec.index(agent);
            if self.occupancy[i] == Occupancy::Unknown {
                self.occupancy[i] = Occupancy::Free;
            }
        }
        for &i in &fusion.floor_cells {
            if self.occupancy[i] == Occupancy::Unknown {
                self.occupancy[i] = Occupancy::Free;
            }
        }
        let c = self.channels.len();
        for (&i, vals) in &fusion.cell_scores {
            let base = i * c;
            for (e, &v) in vals.iter().enumerate() {
                let old = self.scores[base + e];
                let old = (!old.is_nan()).then_some(old);
                self.scores[base + e] = update_rule(old, v, self.update_mode);
            }
        }
        self.dropped_points += fusion.dropped_points;
        FusionStats {
            scored_cells: fusion.cell_scores.len(),
            obstacle_cells: fusion.obstacle_cells.len(),
            dropped_points: fusion.dropped_points,
        }
    }

    /// Back-projects, max-fuses and merges one observation.
    pub fn fuse_observation(
        &mut self,
        scores: &ScoreImage,
        depth: &DepthImage,
        pose: &Pose,
        intrinsics: &CameraIntrinsics,
        sensor: &SensorConfig,
    ) -> Result<FusionStats, MapError> {
        let staged = self.stage_observation(scores, depth, pose, intrinsics, sensor)?;
        Ok(self.apply_observation(&staged))
    }

    /// Free cells with at least one 4-connected Unknown neighbour, row-major.
    pub fn frontiers(&self) -> Vec<CellIndex> {
        (0..self.spec.len())
            .filter(|&i| self.is_frontier_index(i))
            .map(|i| self.spec.cell_at(i))
            .collect()
    }

    fn is_frontier_index(&self, i: usize) -> bool {
        self.occupancy[i] == Occupancy::Free
            && self
                .spec
                .neighbors4(self.spec.cell_at(i))
                .any(|n| self.occupancy[self.spec.index(n)] == Occupancy::Unknown)
    }

    pub fn frontier_mask(&self) -> Vec<bool> {
        (0..self.spec.len())
            .map(|i| self.is_frontier_index(i))
            .collect()
    }

    /// Scored Free cells within Chebyshev distance `radius` of a frontier, row-major.
    pub fn candidate_cells(&self, radius: usize) -> Vec<CellIndex> {
        let near = dilate(&self.frontier_mask(), self.spec.rows, self.spec.cols, radius);
        (0..self.spec.len())
            .filter(|&i| near[i] && self.occupancy[i] == Occupancy::Free)
            .map(|i| self.spec.cell_at(i))
            .filter(|&c| self.is_scored(c))
            .collect()
    }

    pub fn snapshot(&self, step: usize) -> MapSnapshot {
        let occupancy = (0..self.spec.rows)
            .map(|r| {
                self.occupancy[r * self.spec.cols..(r + 1) * self.spec.cols]
                    .iter()
                    .map(|o| o.symbol())
                    .collect()
            })
            .collect();
        MapSnapshot {
            spec: self.spec,
            channels: self.channels.clone(),
            update_mode: self.update_mode,
            step,
            occupancy,
            scores: self
                .scores
                .iter()
                .map(|v| (!v.is_nan()).then_some(*v))
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &MapSnapshot) -> Result<Self, MapError> {
        let spec = snap.spec;
        spec.validate()
            .map_err(|e| MapError::Format(e.to_string()))?;
        if snap.occupancy.len() != spec.rows
            || snap.scores.len() != spec.len() * snap.channels.len()
        {
            return Err(MapError::Format("grid size does not match spec".into()));
        }
        let mut map = GaMap::new(spec, snap.channels.clone(), snap.update_mode);
        for (r, row) in snap.occupancy.iter().enumerate() {
            let cells: Vec<char> = row.chars().collect();
            if cells.len() != spec.cols {
                return Err(MapError::Format(format!("row {r} has {} cells", cells.len())));
            }
            for (c, ch) in cells.into_iter().enumerate() {
                map.occupancy[r * spec.cols + c] = Occupancy::from_symbol(ch)
                    .ok_or_else(|| MapError::Format(format!("bad occupancy symbol {ch:?}")))?;
            }
        }
        for (slot, v) in map.scores.iter_mut().zip(&snap.scores) {
            *slot = v.unwrap_or(f64::NAN);
        }
        Ok(map)
    }

    /// Heatmap values for one channel (or the channel mean), `None` where unobserved.
    pub fn heatmap(&self, channel: HeatmapChannel) -> Result<Vec<Option<f64>>, MapError> {
        if let HeatmapChannel::Index(e) = channel {
            if e >= self.channels.len() {
                return Err(MapError::UnknownChannel(e.to_string()));
            }
        }
        Ok((0..self.spec.len())
            .map(|i| {
                let cell = self.spec.cell_at(i);
                match channel {
                    HeatmapChannel::Index(e) => self.score(cell, e),
                    HeatmapChannel::Mean => self.channel_mean(cell).ok().flatten(),
                }
            })
            .collect())
    }

    pub fn channel_by_name(&self, name: &str) -> Result<HeatmapChannel, MapError> {
        if name == "mean" {
            return Ok(HeatmapChannel::Mean);
        }
        self.channels
            .iter()
            .position(|c| c == name)
            .map(HeatmapChannel::Index)
            .ok_or_else(|| MapError::UnknownChannel(name.to_string()))
    }

    /// Writes a 16-bit PGM heatmap plus a `<path>.meta` sidecar.
    pub fn write_pgm(
        &self,
        path: &Path,
        channel: HeatmapChannel,
        step: usize,
    ) -> Result<(), MapError> {
        let values = self.heatmap(channel)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&encode_pgm16(self.spec.rows, self.spec.cols, &values))?;
        f.flush()?;
        let name = match channel {
            HeatmapChannel::Index(e) => self.channels[e].clone(),
            HeatmapChannel::Mean => "mean".to_string(),
        };
        let meta = HeatmapMeta {
            spec: self.spec,
            channels: self.channels.clone(),
            channel: name,
            step,
            encoding: "P5 16-bit big-endian, row-major from grid row 0; value = round((score + 1) / 2 * 65535); unobserved = 0".into(),
        };
        let mut meta_path = path.as_os_str().to_owned();
        meta_path.push(".meta");
        std::fs::write(
            meta_path,
            toml::to_string(&meta).map_err(|e| MapError::Format(e.to_string()))?,
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapChannel {
    Index(usize),
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub spec: GridSpec,
    pub channels: Vec<String>,
    pub channel: String,
    pub step: usize,
    pub encoding: String,
}

/// Serializable map state (`map.json` in episode output directories).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub spec: GridSpec,
    pub channels: Vec<String>,
    pub update_mode: UpdateMode,
    pub step: usize,
    /// One string per grid row: `?` unknown, `.` free, `#` obstacle.
    pub occupancy: Vec<String>,
    /// Row-major, channels innermost; `null` where unobserved.
    pub scores: Vec<Option<f64>>,
}

/// Maps a score in `[-1, 1]` to a 16-bit level.
pub fn score_to_u16(s: f64) -> u16 {
    (((s.clamp(-1.0, 1.0) + 1.0) / 2.0) * 65535.0).round() as u16
}

pub fn encode_pgm16(rows: usize, cols: usize, values: &[Option<f64>]) -> Vec<u8> {
    let mut header = String::new();
    let _ = write!(header, "P5\n{cols} {rows}\n65535\n");
    let mut out = header.into_bytes();
    out.reserve(values.len() * 2);
    for v in values {
        out.extend_from_slice(&v.map_or(0, score_to_u16).to_be_bytes());
    }
    out
}

/// Chebyshev dilation of a boolean grid by `radius` cells (separable max filter).
pub fn dilate(mask: &[bool], rows: usize, cols: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut horiz = vec![false; mask.len()];
    for r in 0..rows {
        let row = &mask[r * cols..(r + 1) * cols];
        let mut last: Option<usize> = None;
        // forward pass: nearest set cell to the left; backward pass: to the right
        for c in 0..cols {
            if row[c] {
                last = Some(c);
            }
            if last.is_some_and(|l| c - l <= radius) {
                horiz[r * cols + c] = true;
            }
        }
        last = None;
        for c in (0..cols).rev() {
            if row[c] {
                last = Some(c);
            }
            if last.is_some_and(|l| l - c <= radius) {
                horiz[r * cols + c] = true;
            }
        }
    }
    let mut out = vec![false; mask.len()];
    for c in 0..cols {
        let mut last: Option<usize> = None;
        for r in 0..rows {
            if horiz[r * cols + c] {
                last = Some(r);
            }
            if last.is_some_and(|l| r - l <= radius) {
                out[r * cols + c] = true;
            }
        }
        last = None;
        for r in (0..rows).rev() {
            if horiz[r * cols + c] {
                last = Some(r);
            }
            if last.is_some_and(|l| l - r <= radius) {
                out[r * cols + c] = true;
            }
        }
    }
    out
}

/// Integer line from `a` to `b` inclusive (Bresenham).
pub fn line_cells(a: CellIndex, b: CellIndex) -> Vec<CellIndex> {
    let (mut x, mut y) = (a.col as i64, a.row as i64);
    let (x1, y1) = (b.col as i64, b.row as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push(CellIndex::new(y as usize, x as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}
