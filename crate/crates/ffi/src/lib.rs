//! C ABI for the gamap engine.
//!
//! Every entry point returns a [`GamapStatus`]; on failure the message is available
//! from [`gamap_last_error`] on the same thread. Scenes are opaque handles owned by the
//! caller and released with [`gamap_scene_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gamap::gamap::{update_rule, UpdateMode};
use gamap::geometry::CellIndex;
use gamap::harness::{
    run_episode_in, spl, success_rate, EpisodeConfig, EpisodeResult, ErrorClass, Outcome, Policy,
    Scored, Termination,
};
use gamap::planner::fast_march;
use gamap::pyramid::similarity;
use gamap::simworld::{generate_scene, Difficulty, Scene};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Generation = 4,
    Episode = 5,
    Planning = 6,
    Metric = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapDifficulty {
    Easy = 0,
    Maze = 1,
    Multiscale = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapUpdateMode {
    Max = 0,
    Average = 1,
    Replacement = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapPolicy {
    Gamap = 0,
    NearestFrontier = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapTermination {
    Stop = 0,
    MaxSteps = 1,
    ExplorationExhausted = 2,
    Stuck = 3,
    ProviderFailure = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamapErrorClass {
    None = 0,
    Detection = 1,
    Planning = 2,
    Exploration = 3,
}

/// Opaque scene handle.
pub struct GamapScene {
    inner: Scene,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GamapSceneInfo {
    pub rows: usize,
    pub cols: usize,
    /// Meters per cell.
    pub resolution: f64,
    pub spawn_x: f64,
    pub spawn_y: f64,
    pub spawn_theta: f64,
    pub seed: u64,
    /// A `GamapDifficulty` value.
    pub difficulty: u32,
}

/// Episode knobs exposed over the C ABI; everything else keeps its default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GamapEpisodeConfig {
    pub levels: usize,
    /// A `GamapUpdateMode` value.
    pub update_mode: u32,
    /// A `GamapPolicy` value.
    pub policy: u32,
    pub max_steps: usize,
    pub success_distance: f64,
    pub candidate_radius: usize,
    /// Per-observation salience gain is drawn from U[1 - noise, 1].
    pub salience_noise: f64,
    pub n_geometric: usize,
    pub n_affordance: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GamapEpisodeSummary {
    pub success: bool,
    /// A `GamapTermination` value.
    pub termination: u32,
    /// A `GamapErrorClass` value.
    pub error_class: u32,
    pub steps: usize,
    pub path_length: f64,
    pub shortest_path: f64,
    pub final_distance: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (GamapStatus, String)>) -> GamapStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GamapStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GamapStatus::Panic
        }
    }
}

fn null(name: &str) -> (GamapStatus, String) {
    (GamapStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> (GamapStatus, String) {
    (GamapStatus::InvalidArgument, msg.into())
}

/// Message of the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next gamap call on the same thread.
#[no_mangle]
pub extern "C" fn gamap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

fn parse_difficulty(raw: u32) -> Result<Difficulty, (GamapStatus, String)> {
    match raw {
        0 => Ok(Difficulty::Easy),
        1 => Ok(Difficulty::Maze),
        2 => Ok(Difficulty::Multiscale),
        _ => Err(invalid(format!("unknown difficulty {raw}"))),
    }
}

fn parse_update_mode(raw: u32) -> Result<UpdateMode, (GamapStatus, String)> {
    match raw {
        0 => Ok(UpdateMode::Max),
        1 => Ok(UpdateMode::Average),
        2 => Ok(UpdateMode::Replacement),
        _ => Err(invalid(format!("unknown update mode {raw}"))),
    }
}

fn parse_policy(raw: u32) -> Result<Policy, (GamapStatus, String)> {
    match raw {
        0 => Ok(Policy::Gamap),
        1 => Ok(Policy::NearestFrontier),
        _ => Err(invalid(format!("unknown policy {raw}"))),
    }
}

impl From<Difficulty> for GamapDifficulty {
    fn from(d: Difficulty) -> Self {
        match d {
            Difficulty::Easy => GamapDifficulty::Easy,
            Difficulty::Maze => GamapDifficulty::Maze,
            Difficulty::Multiscale => GamapDifficulty::Multiscale,
        }
    }
}

impl From<&EpisodeResult> for GamapEpisodeSummary {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            success: r.outcome == Outcome::Success,
            termination: (match r.termination {
                Termination::Stop => GamapTermination::Stop,
                Termination::MaxSteps => GamapTermination::MaxSteps,
                Termination::ExplorationExhausted => GamapTermination::ExplorationExhausted,
                Termination::Stuck => GamapTermination::Stuck,
                Termination::ProviderFailure => GamapTermination::ProviderFailure,
            }) as u32,
            error_class: (match r.error_class {
                ErrorClass::None => GamapErrorClass::None,
                ErrorClass::Detection => GamapErrorClass::Detection,
                ErrorClass::Planning => GamapErrorClass::Planning,
                ErrorClass::Exploration => GamapErrorClass::Exploration,
            }) as u32,
            steps: r.steps,
            path_length: r.path_length,
            shortest_path: r.shortest_path,
            final_distance: r.final_distance,
        }
    }
}

impl Scored for GamapEpisodeSummary {
    fn succeeded(&self) -> bool {
        self.success
    }
    fn path_length(&self) -> f64 {
        self.path_length
    }
    fn shortest_path(&self) -> f64 {
        self.shortest_path
    }
}

/// Generates the scene for `seed` and `difficulty` (a `GamapDifficulty`) into `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn gamap_scene_generate(
    seed: u64,
    difficulty: u32,
    out: *mut *mut GamapScene,
) -> GamapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = generate_scene(seed, parse_difficulty(difficulty)?)
            .map_err(|e| (GamapStatus::Generation, e.to_string()))?;
        *out = Box::into_raw(Box::new(GamapScene { inner }));
        Ok(())
    })
}

/// Loads a scene JSON file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn gamap_scene_load(path: *const c_char, out: *mut *mut GamapScene) -> GamapStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not UTF-8"))?;
        let inner = Scene::load(&PathBuf::from(path)).map_err(|e| (GamapStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(GamapScene { inner }));
        Ok(())
    })
}

/// Releases a scene; null is ignored.
///
/// # Safety
/// `scene` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gamap_scene_free(scene: *mut GamapScene) {
    if !scene.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(scene))));
    }
}

/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gamap_scene_info(scene: *const GamapScene, out: *mut GamapSceneInfo) -> GamapStatus {
    guard(|| {
        let scene = &scene.as_ref().ok_or_else(|| null("scene"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = scene.spec();
        let spawn = scene.spawn();
        *out = GamapSceneInfo {
            rows: spec.rows,
            cols: spec.cols,
            resolution: spec.resolution,
            spawn_x: spawn.x,
            spawn_y: spawn.y,
            spawn_theta: spawn.theta,
            seed: scene.seed(),
            difficulty: GamapDifficulty::from(scene.difficulty()) as u32,
        };
        Ok(())
    })
}

/// Default episode settings.
#[no_mangle]
pub extern "C" fn gamap_episode_config_default() -> GamapEpisodeConfig {
    let d = EpisodeConfig::default();
    GamapEpisodeConfig {
        levels: d.levels,
        update_mode: GamapUpdateMode::Max as u32,
        policy: GamapPolicy::Gamap as u32,
        max_steps: d.max_steps,
        success_distance: d.success_distance,
        candidate_radius: d.candidate_radius,
        salience_noise: d.salience_noise,
        n_geometric: d.n_geometric,
        n_affordance: d.n_affordance,
    }
}

fn episode_config(c: &GamapEpisodeConfig, scene: &Scene) -> Result<EpisodeConfig, (GamapStatus, String)> {
    Ok(EpisodeConfig {
        seed: scene.seed(),
        difficulty: scene.difficulty(),
        levels: c.levels,
        update_mode: parse_update_mode(c.update_mode)?,
        policy: parse_policy(c.policy)?,
        max_steps: c.max_steps,
        success_distance: c.success_distance,
        candidate_radius: c.candidate_radius,
        salience_noise: c.salience_noise,
        n_geometric: c.n_geometric,
        n_affordance: c.n_affordance,
        ..EpisodeConfig::default()
    })
}

/// Runs one episode in `scene` with the synthetic provider.
///
/// # Safety
/// `scene` must be a live handle; `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gamap_run_episode(
    scene: *const GamapScene,
    config: *const GamapEpisodeConfig,
    out: *mut GamapEpisodeSummary,
) -> GamapStatus {
    guard(|| {
        let scene = &scene.as_ref().ok_or_else(|| null("scene"))?.inner;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let config = episode_config(config, scene)?;
        config.validate().map_err(|e| invalid(e.to_string()))?;
        let result = run_episode_in(&config, scene).map_err(|e| (GamapStatus::Episode, e.to_string()))?;
        *out = GamapEpisodeSummary::from(&result);
        Ok(())
    })
}

unsafe fn summaries<'a>(ptr: *const GamapEpisodeSummary, n: usize) -> Result<&'a [GamapEpisodeSummary], (GamapStatus, String)> {
    if ptr.is_null() {
        return Err(null("results"));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

/// Success rate (percent) over `n` episodes.
///
/// # Safety
/// `results` must point to `n` readable summaries and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gamap_success_rate(
    results: *const GamapEpisodeSummary,
    n: usize,
    out: *mut f64,
) -> GamapStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = success_rate(summaries(results, n)?).map_err(|e| (GamapStatus::Metric, e.to_string()))?;
        Ok(())
    })
}

/// Success weighted by path length (percent) over `n` episodes.
///
/// # Safety
/// `results` must point to `n` readable summaries and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gamap_spl(results: *const GamapEpisodeSummary, n: usize, out: *mut f64) -> GamapStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = spl(summaries(results, n)?).map_err(|e| (GamapStatus::Metric, e.to_string()))?;
        Ok(())
    })
}

/// Merged score of a revisited cell under `mode` (a `GamapUpdateMode`); `has_old = false`
/// means the cell was never scored.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gamap_update_rule(
    has_old: bool,
    old: f64,
    new_score: f64,
    mode: u32,
    out: *mut f64,
) -> GamapStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = update_rule(has_old.then_some(old), new_score, parse_update_mode(mode)?);
        Ok(())
    })
}

/// Cosine similarity of two `dim`-long vectors.
///
/// # Safety
/// `a` and `b` must point to `dim` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gamap_cosine(a: *const f64, b: *const f64, dim: usize, out: *mut f64) -> GamapStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("vector"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (a, b) = (std::slice::from_raw_parts(a, dim), std::slice::from_raw_parts(b, dim));
        *out = similarity(a, b).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Fast-marching distances (meters) from `(src_row, src_col)` over a row-major
/// `rows x cols` slowness grid; blocked cells have non-finite or non-positive cost.
/// Unreachable cells get `INFINITY`.
///
/// # Safety
/// `cost` must point to `rows * cols` readable doubles and `out` to as many writable ones.
#[no_mangle]
pub unsafe extern "C" fn gamap_fast_march(
    rows: usize,
    cols: usize,
    resolution: f64,
    cost: *const f64,
    src_row: usize,
    src_col: usize,
    out: *mut f64,
) -> GamapStatus {
    guard(|| {
        if cost.is_null() {
            return Err(null("cost"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = rows.checked_mul(cols).filter(|&n| n > 0).ok_or_else(|| invalid("empty or oversized grid"))?;
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(invalid("resolution must be > 0"));
        }
        let cost = std::slice::from_raw_parts(cost, n);
        let field = fast_march(rows, cols, resolution, cost, CellIndex::new(src_row, src_col))
            .map_err(|e| (GamapStatus::Planning, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(field.values());
        Ok(())
    })
}
