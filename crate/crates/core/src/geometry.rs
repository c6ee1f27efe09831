//! Pinhole back-projection, planar rigid transforms and ground-plane rasterization.
//!
//! Conventions used throughout the crate:
//!
//! - Camera frame: `x` to the right, `y` down, `z` along the optical axis. A pixel
//!   `(p, q)` is `(row, col)`; the column maps to `x` through `fx`/`cx` and the row
//!   maps to `y` through `fy`/`cy`.
//! - World frame: `x`/`y` span the ground plane, `z` is height above the floor.
//!   A heading of `0` looks along `+x`, positive headings turn counter-clockwise.
//! - Grid cells: `row` indexes the world `y` axis and `col` the world `x` axis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::DepthImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid depth {0} (must be finite, positive and within range)")]
    InvalidDepth(f64),
    #[error("pixel ({row}, {col}) outside {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the given horizontal field of view and the principal
    /// point at `(width / 2, height / 2)`.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Result<Self, GeometryError> {
        if !(hfov > 0.0 && hfov < PI) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "field of view {hfov} rad"
            )));
        }
        let f = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self::new(
            f,
            f,
            (width / 2) as f64,
            (height / 2) as f64,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fx.is_finite()) || !(self.fy > 0.0 && self.fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside image");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside image");
        }
        Ok(())
    }

    /// Horizontal angle of the ray through column `col`, positive to the right.
    pub fn column_angle(&self, col: usize) -> f64 {
        ((col as f64 - self.cx) / self.fx).atan()
    }
}

/// Planar agent pose. `theta` is kept in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn forward(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Point in the camera frame (x right, y down, z forward).
pub type CameraFramePoint = Point3;
/// Point in the world frame (z up).
pub type WorldPoint = Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn chebyshev(&self, other: &CellIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Meters per cell.
    pub resolution: f64,
    pub rows: usize,
    pub cols: usize,
    /// World x of the outer corner of cell (0, 0).
    pub origin_x: f64,
    /// World y of the outer corner of cell (0, 0).
    pub origin_y: f64,
}

impl Default for GridSpec {
    /// 480 x 480 cells at 5 cm, centred on the world origin.
    fn default() -> Self {
        Self {
            resolution: 0.05,
            rows: 480,
            cols: 480,
            origin_x: -12.0,
            origin_y: -12.0,
        }
    }
}

impl GridSpec {
    pub fn new(
        resolution: f64,
        rows: usize,
        cols: usize,
        origin_x: f64,
        origin_y: f64,
    ) -> Result<Self, GeometryError> {
        let spec = Self {
            resolution,
            rows,
            cols,
            origin_x,
            origin_y,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(GeometryError::InvalidGrid("resolution must be > 0".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(GeometryError::InvalidGrid("grid must be non-empty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, cell: CellIndex) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> CellIndex {
        CellIndex::new(index / self.cols, index % self.cols)
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// World coordinates of the centre of `cell`.
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            self.origin_x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin_y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing the planar point `(x, y)`, if inside the grid.
    pub fn cell_of_xy(&self, x: f64, y: f64) -> Option<CellIndex> {
        let c = ((x - self.origin_x) / self.resolution).floor();
        let r = ((y - self.origin_y) / self.resolution).floor();
        if !(r.is_finite() && c.is_finite()) || r < 0.0 || c < 0.0 {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        (r < self.rows && c < self.cols).then_some(CellIndex::new(r, c))
    }

    /// 4-connected neighbours of `cell` inside the grid.
    pub fn neighbors4(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        const D: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        D.iter().filter_map(move |&(dr, dc)| self.offset(cell, dr, dc))
    }

    /// 8-connected neighbours of `cell` inside the grid.
    pub fn neighbors8(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        const D: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        D.iter().filter_map(move |&(dr, dc)| self.offset(cell, dr, dc))
    }

    pub fn offset(&self, cell: CellIndex, dr: isize, dc: isize) -> Option<CellIndex> {
        let r = cell.row.checked_add_signed(dr)?;
        let c = cell.col.checked_add_signed(dc)?;
        (r < self.rows && c < self.cols).then_some(CellIndex::new(r, c))
    }
}

/// Back-projects pixel `(row, col)` with depth `depth` into the camera frame.
///
/// `depth` is the distance along the optical axis, so the returned `z` equals it.
pub fn back_project_depth(
    intrinsics: &CameraIntrinsics,
    row: usize,
    col: usize,
    depth: f64,
) -> Result<CameraFramePoint, GeometryError> {
    if row >= intrinsics.height || col >= intrinsics.width {
        return Err(GeometryError::OutOfBounds {
            row,
            col,
            height: intrinsics.height,
            width: intrinsics.width,
        });
    }
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    Ok(Point3::new(
        (col as f64 - intrinsics.cx) / intrinsics.fx * depth,
        (row as f64 - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    ))
}

/// Back-projects pixel `(row, col)` of `depth` into the camera frame.
pub fn back_project(
    intrinsics: &CameraIntrinsics,
    depth: &DepthImage,
    row: usize,
    col: usize,
) -> Result<CameraFramePoint, GeometryError> {
    if row >= depth.height() || col >= depth.width() {
        return Err(GeometryError::OutOfBounds {
            row,
            col,
            height: depth.height(),
            width: depth.width(),
        });
    }
    back_project_depth(intrinsics, row, col, depth.get(row, col))
}

/// Camera frame to world frame for a level camera mounted `camera_height` above the floor.
pub fn to_world(point: &CameraFramePoint, pose: &Pose, camera_height: f64) -> WorldPoint {
    let (c, s) = (pose.theta.cos(), pose.theta.sin());
    // forward (z) maps to (c, s); right (x) maps to (s, -c); down (y) lowers z
    Point3::new(
        pose.x + point.z * c + point.x * s,
        pose.y + point.z * s - point.x * c,
        camera_height - point.y,
    )
}

/// Ground-plane cell of a world point; `None` when outside the grid.
pub fn world_to_cell(point: &WorldPoint, spec: &GridSpec) -> Option<CellIndex> {
    spec.cell_of_xy(point.x, point.y)
}

/// What a back-projected point means for occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightClass {
    Floor,
    Obstacle,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightFilter {
    /// Points below this height are floor.
    pub floor_max: f64,
    /// Points in `[floor_max, obstacle_max]` are obstacles; higher points are ignored.
    pub obstacle_max: f64,
}

impl Default for HeightFilter {
    fn default() -> Self {
        Self {
            floor_max: 0.2,
            obstacle_max: 1.5,
        }
    }
}

impl HeightFilter {
    pub fn classify(&self, z: f64) -> HeightClass {
        if z < self.floor_max {
            HeightClass::Floor
        } else if z <= self.obstacle_max {
            HeightClass::Obstacle
        } else {
            HeightClass::Ignored
        }
    }
}

/// Depth camera mounting and range parameters shared by mapping and rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub camera_height: f64,
    /// Depths at or beyond this value are treated as "no return".
    pub max_depth: f64,
    pub height_filter: HeightFilter,
    /// Obstacle points are moved this far (meters) along the viewing ray before
    /// rasterization so hits on a cell boundary land inside the surface cell.
    pub surface_nudge: f64,
    /// Free space is only carved within this horizontal range (meters); farther
    /// floor is scored but stays unexplored.
    #[serde(default = "default_explore_range")]
    pub explore_range: f64,
}

fn default_explore_range() -> f64 {
    3.0
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            camera_height: 0.88,
            max_depth: 10.0,
            height_filter: HeightFilter::default(),
            surface_nudge: 0.01,
            explore_range: default_explore_range(),
        }
    }
}

impl SensorConfig {
    pub fn depth_is_valid(&self, d: f64) -> bool {
        d.is_finite() && d > 0.0 && d < self.max_depth
    }
}
