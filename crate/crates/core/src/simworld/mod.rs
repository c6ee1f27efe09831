//! Deterministic 2D raycast test world.
//!
//! Scenes are occupancy grids with walls and furniture. The renderer casts one ray per
//! image column through the grid and shades each row by height: floor below the first
//! surface, the surface itself (with a distinct "part" colour band on the upper rows of
//! an object's part cells) and sky above. Depth is the optical-axis distance, so every
//! rendered pixel back-projects onto the surface or floor it shows.

mod embed;
mod generate;
mod palette;
mod scene;

pub use embed::SyntheticProvider;
pub use generate::{generate_scene, Difficulty, GenerationError};
pub use palette::{category_style, salience, CategoryStyle, FLOOR_COLOR, SKY_COLOR, WALL_COLOR};
pub use scene::{CellKind, ObjectInstance, Scene, SceneError, SceneFile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, SensorConfig};
use crate::image::{DepthImage, Rgb, RgbImage};
use crate::planner::{Action, MotionConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("pose ({x:.3}, {y:.3}) is inside an obstacle or outside the scene")]
    PoseInObstacle { x: f64, y: f64 },
}

/// One posed RGB-D frame.
#[derive(Debug, Clone)]
pub struct SyntheticObservation {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub pose: Pose,
}

/// A cell crossed by a ray: horizontal entry/exit distance and what it contains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t_in: f64,
    pub t_out: f64,
    pub row: usize,
    pub col: usize,
    pub kind: CellKind,
    /// Height of the cell's top face (meters).
    pub top: f64,
}

/// Non-free cells along a horizontal ray, nearest first, ending at the first
/// full-height wall or when `max_t` is exceeded. Lower walls are reported and passed.
pub fn cast_ray(scene: &Scene, x: f64, y: f64, dir: f64, max_t: f64) -> Vec<RayHit> {
    let spec = scene.spec();
    let res = spec.resolution;
    let (dx, dy) = (dir.cos(), dir.sin());
    let fx = (x - spec.origin_x) / res;
    let fy = (y - spec.origin_y) / res;
    let (mut col, mut row) = (fx.floor() as i64, fy.floor() as i64);
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    // distance (meters) along the ray to the next vertical / horizontal grid line
    let t_delta_c = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
    let t_delta_r = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };
    let mut t_max_c = if dx > 0.0 {
        ((col as f64 + 1.0) - fx) * t_delta_c
    } else if dx < 0.0 {
        (fx - col as f64) * t_delta_c
    } else {
        f64::INFINITY
    };
    let mut t_max_r = if dy > 0.0 {
        ((row as f64 + 1.0) - fy) * t_delta_r
    } else if dy < 0.0 {
        (fy - row as f64) * t_delta_r
    } else {
        f64::INFINITY
    };
    let mut hits = Vec::new();
    let mut t_enter = 0.0;
    loop {
        let t_exit = t_max_c.min(t_max_r);
        if row < 0 || col < 0 || row as usize >= spec.rows || col as usize >= spec.cols {
            // the scene boundary behaves like a wall
            hits.push(RayHit {
                t_in: t_enter,
                t_out: t_enter,
                row: row.clamp(0, spec.rows as i64 - 1) as usize,
                col: col.clamp(0, spec.cols as i64 - 1) as usize,
                kind: CellKind::Wall,
                top: scene::WALL_HEIGHT,
            });
            break;
        }
        let kind = scene.cell(row as usize, col as usize);
        if t_enter > 0.0 || kind != CellKind::Free {
            if kind != CellKind::Free {
                let top = scene.cell_height(row as usize, col as usize);
                hits.push(RayHit {
                    t_in: t_enter,
                    t_out: t_exit,
                    row: row as usize,
                    col: col as usize,
                    kind,
                    top,
                });
                if kind == CellKind::Wall && top >= scene::WALL_HEIGHT {
                    break;
                }
            }
        }
        if t_exit > max_t {
            break;
        }
        t_enter = t_exit;
        if t_max_c < t_max_r {
            col += step_c;
            t_max_c += t_delta_c;
        } else {
            row += step_r;
            t_max_r += t_delta_r;
        }
    }
    hits
}

/// Renders the RGB-D observation at `pose`.
pub fn render(
    scene: &Scene,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    sensor: &SensorConfig,
) -> Result<SyntheticObservation, RenderError> {
    if !scene.is_free_point(pose.x, pose.y) {
        return Err(RenderError::PoseInObstacle {
            x: pose.x,
            y: pose.y,
        });
    }
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut rgb = RgbImage::from_pixel(w as u32, h as u32, Rgb(SKY_COLOR));
    let mut depth = DepthImage::new(w, h, sensor.max_depth);
    let cam_h = sensor.camera_height;
    for q in 0..w {
        let phi = intrinsics.column_angle(q);
        let cos_phi = phi.cos();
        let max_t = sensor.max_depth / cos_phi;
        let hits = cast_ray(scene, pose.x, pose.y, pose.theta - phi, max_t);
        for p in 0..h {
            // camera-frame y per unit of depth (positive looks down)
            let slope = (p as f64 - intrinsics.cy) / intrinsics.fy;
            let z_floor = if slope > 0.0 {
                cam_h / slope
            } else {
                f64::INFINITY
            };
            let mut pixel: Option<(f64, [u8; 3])> = None;
            for hit in &hits {
                let (z_in, z_out) = (hit.t_in * cos_phi, hit.t_out * cos_phi);
                if z_floor <= z_in {
                    pixel = Some((z_floor, FLOOR_COLOR));
                    break;
                }
                let top = hit.top;
                let h_in = cam_h - slope * z_in;
                let z_hit = if (0.0..=top).contains(&h_in) {
                    Some(z_in)
                } else if h_in > top && slope > 0.0 && cam_h - slope * z_out <= top {
                    // descending through the top face
                    Some(((cam_h - top) / slope).max(z_in))
                } else {
                    None
                };
                if let Some(z) = z_hit {
                    pixel = Some((z, scene.surface_color(hit, cam_h - slope * z)));
                    break;
                }
            }
            // nothing hit in range: open floor, or sky when looking up
            let pixel = pixel.or((z_floor.is_finite()).then_some((z_floor, FLOOR_COLOR)));
            if let Some((z, color)) = pixel {
                if z < sensor.max_depth {
                    depth.set(p, q, z);
                    rgb.put_pixel(q as u32, p as u32, Rgb(color));
                }
            }
        }
    }
    Ok(SyntheticObservation {
        rgb,
        depth,
        pose: *pose,
    })
}

/// Where the oracle detector saw the target, relative to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Counter-clockwise angle from the heading (radians).
    pub bearing: f64,
    /// Horizontal distance to the first target surface along that ray (meters).
    pub range: f64,
}

impl Detection {
    /// World position of the detected surface point.
    pub fn world_point(&self, pose: &Pose) -> (f64, f64) {
        let a = pose.theta + self.bearing;
        (pose.x + self.range * a.cos(), pose.y + self.range * a.sin())
    }
}

/// Nearest rendered target pixel within `detect_range` (horizontal distance), found by
/// the target category's colours.
pub fn detect_in(
    scene: &Scene,
    obs: &SyntheticObservation,
    intrinsics: &CameraIntrinsics,
    detect_range: f64,
) -> Option<Detection> {
    let style = category_style(scene.target())?;
    let mut best: Option<Detection> = None;
    for (q, p, px) in obs.rgb.enumerate_pixels() {
        if px.0 != style.body && px.0 != style.part {
            continue;
        }
        let (p, q) = (p as usize, q as usize);
        let z = obs.depth.get(p, q);
        let x = (q as f64 - intrinsics.cx) * z / intrinsics.fx;
        let range = z.hypot(x);
        if range <= detect_range && best.is_none_or(|b| range < b.range) {
            best = Some(Detection {
                bearing: -(x.atan2(z)),
                range,
            });
        }
    }
    best
}

/// Renders the view at `pose` and runs [`detect_in`] on it.
pub fn oracle_detect(
    scene: &Scene,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    detect_range: f64,
) -> Option<Detection> {
    let obs = render(scene, pose, intrinsics, &SensorConfig::default()).ok()?;
    detect_in(scene, &obs, intrinsics, detect_range)
}

/// Executes `action`; forward moves whose swept segment touches a non-free cell are
/// rejected and reported as a collision.
pub fn step_agent(
    scene: &Scene,
    pose: &Pose,
    action: Action,
    motion: &MotionConfig,
) -> (Pose, bool) {
    let next = crate::planner::apply_motion(pose, action, motion);
    if action != Action::MoveForward {
        return (next, false);
    }
    if scene.segment_is_free(pose.x, pose.y, next.x, next.y) {
        (next, false)
    } else {
        (*pose, true)
    }
}

/// Observation parameters used by the world by default: 64x64 pixels, 79 degree FOV.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::from_fov(64, 64, 79f64.to_radians()).expect("valid default camera")
}

/// Pixels of the observation showing colour `color`.
pub fn count_color(img: &RgbImage, color: [u8; 3]) -> usize {
    img.pixels().filter(|p| p.0 == color).count()
}
