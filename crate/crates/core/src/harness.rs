//! Episode loop, metrics, error taxonomy and ablation suites.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{
    resolve_attributes, AttributeEmbeddings, AttributeError, AttributeSource,
};
use crate::gamap::{GaMap, HeatmapChannel, MapError, Occupancy, UpdateMode};
use crate::geometry::{CameraIntrinsics, CellIndex, Pose, SensorConfig};
use crate::planner::{
    extract_path, fmm_field, nearest_frontier, next_action_avoiding, select_goal, Action,
    DistanceField, GoalSelection, MotionConfig, PlanError, PlanningConfig,
};
use crate::pyramid::{score_observation, EmbeddingProvider, LevelAggregation, ScoringConfig};
use crate::remote::{RemoteClient, RemoteError};
use crate::simworld::{
    default_intrinsics, detect_in, generate_scene, render, step_agent, Detection, Difficulty,
    GenerationError, Scene, SceneError, SyntheticProvider,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("scene: {0}")]
    SceneLoad(#[from] SceneError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("attributes: {0}")]
    Attributes(#[from] AttributeError),
    #[error("provider: {0}")]
    Provider(String),
    #[error("target is unreachable from spawn")]
    UnreachableTarget,
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("episode succeeded; only failures have an error class")]
    NotAFailure,
    #[error("empty suite matrix")]
    EmptySuite,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no episodes")]
    EmptyResults,
    #[error("episode {index} has shortest path {value}")]
    InvalidShortestPath { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Gamap,
    NearestFrontier,
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamap" => Ok(Policy::Gamap),
            "nearest_frontier" | "nearest-frontier" => Ok(Policy::NearestFrontier),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Gamap => "gamap",
            Policy::NearestFrontier => "nearest_frontier",
        })
    }
}

/// `"synthetic"` or the base URL of an embedding service.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderBinding {
    #[default]
    Synthetic,
    Remote(String),
}

impl TryFrom<String> for ProviderBinding {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProviderBinding> for String {
    fn from(p: ProviderBinding) -> Self {
        match p {
            ProviderBinding::Synthetic => "synthetic".into(),
            ProviderBinding::Remote(url) => url,
        }
    }
}

impl FromStr for ProviderBinding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "synthetic" {
            Ok(ProviderBinding::Synthetic)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(ProviderBinding::Remote(s.to_string()))
        } else {
            Err(format!("provider must be \"synthetic\" or an http(s) URL, got {s:?}"))
        }
    }
}

/// Everything that defines one episode. Deserializes from TOML with defaults for every
/// missing field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub seed: u64,
    pub difficulty: Difficulty,
    /// Scene file to load instead of generating from `seed`.
    pub scene: Option<PathBuf>,
    /// Overrides the scene's target category (it must be present in the scene).
    pub target: Option<String>,
    pub n_geometric: usize,
    pub n_affordance: usize,
    /// Attribute fixture directory; bundled fixtures when unset.
    pub attribute_dir: Option<PathBuf>,
    pub levels: usize,
    pub aggregation: LevelAggregation,
    pub update_mode: UpdateMode,
    pub candidate_radius: usize,
    pub max_steps: usize,
    pub success_distance: f64,
    pub provider: ProviderBinding,
    pub policy: Policy,
    /// Per-observation salience gain is drawn from U[1 - noise, 1].
    pub salience_noise: f64,
    pub detect_range: f64,
    pub false_negative_rate: f64,
    /// Turn a full circle before moving.
    pub initial_spin: bool,
    /// Steps without a change of position after which the agent counts as stuck.
    pub stuck_steps: usize,
    pub planning: PlanningConfig,
    pub motion: MotionConfig,
    pub sensor: SensorConfig,
    pub image_size: usize,
    pub hfov_degrees: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            difficulty: Difficulty::Easy,
            scene: None,
            target: None,
            n_geometric: crate::attributes::DEFAULT_N_GEOMETRIC,
            n_affordance: crate::attributes::DEFAULT_N_AFFORDANCE,
            attribute_dir: None,
            levels: 3,
            aggregation: LevelAggregation::Mean,
            update_mode: UpdateMode::Max,
            candidate_radius: 3,
            max_steps: 500,
            success_distance: 1.0,
            provider: ProviderBinding::Synthetic,
            policy: Policy::Gamap,
            salience_noise: 0.0,
            detect_range: 3.0,
            false_negative_rate: 0.0,
            initial_spin: true,
            stuck_steps: 30,
            planning: PlanningConfig::default(),
            motion: MotionConfig::default(),
            sensor: SensorConfig::default(),
            image_size: 64,
            hfov_degrees: 79.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(self.success_distance > 0.0 && self.success_distance.is_finite()) {
            return bad("success_distance must be > 0");
        }
        if !(1..=crate::pyramid::MAX_LEVELS).contains(&self.levels) {
            return bad("levels must be in 1..=4");
        }
        if !(0.0..=1.0).contains(&self.salience_noise) {
            return bad("salience_noise must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.false_negative_rate) {
            return bad("false_negative_rate must be in [0, 1]");
        }
        if !(self.detect_range > 0.0) {
            return bad("detect_range must be > 0");
        }
        if self.stuck_steps == 0 {
            return bad("stuck_steps must be at least 1");
        }
        if self.image_size == 0 || self.image_size % (1 << (self.levels - 1)) != 0 {
            return bad("image_size must be divisible by 2^(levels - 1)");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, HarnessError> {
        if self.image_size == 64 && self.hfov_degrees == 79.0 {
            return Ok(default_intrinsics());
        }
        CameraIntrinsics::from_fov(self.image_size, self.image_size, self.hfov_degrees.to_radians())
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    /// Loads or generates the scene, applying the target override.
    pub fn scene(&self) -> Result<Scene, HarnessError> {
        let scene = match &self.scene {
            Some(path) => Scene::load(path)?,
            None => generate_scene(self.seed, self.difficulty)?,
        };
        match &self.target {
            Some(t) if t != scene.target() => Ok(scene.with_target(t)?),
            _ => Ok(scene),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    None,
    Detection,
    Planning,
    Exploration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stop,
    MaxSteps,
    ExplorationExhausted,
    Stuck,
    ProviderFailure,
}

/// What the episode saw, used for error classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Some rendered view showed the target within the detection range.
    pub target_in_range: bool,
    /// Some rendered view showed the target at any range.
    pub target_seen: bool,
    pub detector_fired: bool,
    /// The detector reported something that is not the target.
    pub false_positive: bool,
    pub stuck: bool,
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub action: Action,
    pub goal: Option<CellIndex>,
    pub detected: bool,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub scoring_seconds: f64,
    pub scored_steps: usize,
}

impl Timing {
    pub fn mean_scoring_seconds(&self) -> f64 {
        if self.scored_steps == 0 {
            0.0
        } else {
            self.scoring_seconds / self.scored_steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub difficulty: Difficulty,
    pub target: String,
    pub policy: Policy,
    pub outcome: Outcome,
    pub termination: Termination,
    pub steps: usize,
    /// Meters actually driven (forward steps times step length).
    pub path_length: f64,
    /// Planned ground-truth distance from spawn to the success region.
    pub shortest_path: f64,
    pub stop_pose: Pose,
    pub final_distance: f64,
    pub error_class: ErrorClass,
    pub diagnostics: Diagnostics,
    /// Diagnostic message when the episode was aborted.
    pub note: Option<String>,
    pub trace: Vec<StepRecord>,
    pub timing: Timing,
}

/// Success flag and path lengths, all the metrics look at.
pub trait Scored {
    fn succeeded(&self) -> bool;
    fn path_length(&self) -> f64;
    fn shortest_path(&self) -> f64;
}

impl Scored for EpisodeResult {
    fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
    fn path_length(&self) -> f64 {
        self.path_length
    }
    fn shortest_path(&self) -> f64 {
        self.shortest_path
    }
}

/// Percentage of successful episodes.
pub fn success_rate<T: Scored>(results: &[T]) -> Result<f64, MetricError> {
    if results.is_empty() {
        return Err(MetricError::EmptyResults);
    }
    let n = results.iter().filter(|r| r.succeeded()).count();
    Ok(100.0 * n as f64 / results.len() as f64)
}

/// Success weighted by `shortest / max(actual, shortest)`, as a percentage.
pub fn spl<T: Scored>(results: &[T]) -> Result<f64, MetricError> {
    if results.is_empty() {
        return Err(MetricError::EmptyResults);
    }
    let mut sum = 0.0;
    for (index, r) in results.iter().enumerate() {
        let l_star = r.shortest_path();
        if !(l_star > 0.0 && l_star.is_finite()) {
            return Err(MetricError::InvalidShortestPath {
                index,
                value: l_star,
            });
        }
        if r.succeeded() {
            sum += l_star / r.path_length().max(l_star);
        }
    }
    Ok(100.0 * sum / results.len() as f64)
}

/// Failure cause, with precedence Detection > Planning > Exploration.
pub fn classify_error(result: &EpisodeResult) -> Result<ErrorClass, HarnessError> {
    if result.outcome == Outcome::Success {
        return Err(HarnessError::NotAFailure);
    }
    Ok(classify(&result.diagnostics))
}

fn classify(d: &Diagnostics) -> ErrorClass {
    if (d.target_in_range && !d.detector_fired) || d.false_positive {
        ErrorClass::Detection
    } else if d.detector_fired || d.target_seen || d.stuck {
        ErrorClass::Planning
    } else {
        ErrorClass::Exploration
    }
}

const VISITED_RADIUS: isize = 2;
/// Largest heading offset from the waypoint bearing the follower accepts when detouring.
const MAX_HEADING_DEVIATION: f64 = std::f64::consts::FRAC_PI_3;

fn mark_visited(map: &mut GaMap, cell: CellIndex) {
    let spec = *map.spec();
    for dr in -VISITED_RADIUS..=VISITED_RADIUS {
        for dc in -VISITED_RADIUS..=VISITED_RADIUS {
            if dr * dr + dc * dc <= VISITED_RADIUS * VISITED_RADIUS {
                if let Some(c) = spec.offset(cell, dr, dc) {
                    map.mark_visited(c);
                }
            }
        }
    }
}

/// Reachable cell closest (by path) to the agent among those within `radius` of `point`.
fn approach_goal(
    map: &GaMap,
    field: &DistanceField,
    point: (f64, f64),
    radius: f64,
) -> Option<GoalSelection> {
    let spec = map.spec();
    let k = (radius / spec.resolution).ceil() as isize + 1;
    let center = spec.cell_of_xy(point.0, point.1)?;
    let mut best: Option<GoalSelection> = None;
    for dr in -k..=k {
        for dc in -k..=k {
            let Some(c) = spec.offset(center, dr, dc) else {
                continue;
            };
            let (x, y) = spec.cell_center(c);
            if (x - point.0).hypot(y - point.1) > radius || map.occupancy(c) == Occupancy::Obstacle {
                continue;
            }
            let d = field.get(c);
            if d.is_finite() && best.is_none_or(|b| d < b.distance) {
                best = Some(GoalSelection {
                    cell: c,
                    score: 0.0,
                    distance: d,
                });
            }
        }
    }
    best
}

enum Provider {
    Synthetic(SyntheticProvider),
    Remote(RemoteClient),
}

/// Runs one episode.
pub fn run_episode(config: &EpisodeConfig) -> Result<EpisodeResult, HarnessError> {
    config.validate()?;
    let scene = config.scene()?;
    run_episode_in(config, &scene)
}

/// Runs one episode in an already loaded scene.
pub fn run_episode_in(config: &EpisodeConfig, scene: &Scene) -> Result<EpisodeResult, HarnessError> {
    run_episode_with_map(config, scene).map(|(r, _)| r)
}

/// [`run_episode_in`], also returning the final map.
pub fn run_episode_with_map(
    config: &EpisodeConfig,
    scene: &Scene,
) -> Result<(EpisodeResult, GaMap), HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let intrinsics = config.intrinsics()?;
    let sensor = config.sensor;
    let spawn = scene.spawn();
    let shortest_path = scene
        .shortest_path_length(spawn.x, spawn.y, config.success_distance, &config.planning)
        .ok_or(HarnessError::UnreachableTarget)?;
    if shortest_path <= 0.0 {
        return Err(HarnessError::InvalidConfig(
            "spawn is already inside the success region".into(),
        ));
    }

    let provider = match &config.provider {
        ProviderBinding::Synthetic => None,
        ProviderBinding::Remote(url) => Some(
            RemoteClient::connect(url).map_err(|e: RemoteError| HarnessError::Provider(e.to_string()))?,
        ),
    };
    let source = match (&provider, &config.attribute_dir) {
        (Some(client), _) => AttributeSource::Remote(client),
        (None, Some(dir)) => AttributeSource::FixtureDir(dir.clone()),
        (None, None) => AttributeSource::Bundled,
    };
    let attrs = resolve_attributes(
        scene.target(),
        config.n_geometric,
        config.n_affordance,
        &source,
    )?;
    let channels = attrs.channels();
    let provider = match provider {
        Some(client) => Provider::Remote(client),
        None => Provider::Synthetic(SyntheticProvider::new(&channels)),
    };
    let embeddings = match &provider {
        Provider::Synthetic(p) => AttributeEmbeddings::embed(&attrs, p),
        Provider::Remote(p) => AttributeEmbeddings::embed(&attrs, p),
    }?;
    let scoring = ScoringConfig {
        levels: config.levels,
        aggregation: config.aggregation,
        ..ScoringConfig::default()
    };

    let mut map = GaMap::new(*scene.spec(), channels, config.update_mode);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut pose = spawn;
    let mut diagnostics = Diagnostics::default();
    let mut trace = Vec::new();
    let mut timing = Timing::default();
    let mut spin = if config.initial_spin {
        (2.0 * std::f64::consts::PI / config.motion.turn).round() as usize
    } else {
        0
    };
    let mut target_point: Option<(f64, f64)> = None;
    let mut target_range = f64::INFINITY;
    let mut approach: Option<GoalSelection> = None;
    let mut forward_steps = 0usize;
    let mut still_since = 0usize;
    let mut termination = Termination::MaxSteps;
    let mut note = None;
    let mut stopped = false;

    let mut step = 0;
    while step < config.max_steps {
        let obs = render(scene, &pose, &intrinsics, &sensor)
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let gain = 1.0 - config.salience_noise * rng.random::<f64>();
        let t0 = Instant::now();
        let scored = match &provider {
            Provider::Synthetic(p) => score_observation(&obs.rgb, &embeddings, &p.with_gain(gain), &scoring),
            Provider::Remote(p) => score_observation(&obs.rgb, &embeddings, p, &scoring),
        };
        timing.scoring_seconds += t0.elapsed().as_secs_f64();
        timing.scored_steps += 1;
        let scores = match scored {
            Ok(s) => s,
            Err(e) => {
                termination = Termination::ProviderFailure;
                note = Some(e.to_string());
                break;
            }
        };
        map.fuse_observation(&scores, &obs.depth, &pose, &intrinsics, &sensor)?;
        let agent = scene
            .spec()
            .cell_of_xy(pose.x, pose.y)
            .expect("agent stays inside the scene");
        mark_visited(&mut map, agent);

        let seen = detect_in(scene, &obs, &intrinsics, sensor.max_depth);
        diagnostics.target_seen |= seen.is_some();
        let raw = seen.filter(|d| d.range <= config.detect_range);
        diagnostics.target_in_range |= raw.is_some();
        let detection: Option<Detection> = raw.filter(|_| {
            config.false_negative_rate <= 0.0 || rng.random::<f64>() >= config.false_negative_rate
        });
        if let Some(d) = detection {
            diagnostics.detector_fired = true;
            // closer sightings are more precise; keep the closest one
            if d.range < target_range {
                target_range = d.range;
                target_point = Some(d.world_point(&pose));
            }
        }

        let mut goal = None;
        let action = if spin > 0 {
            spin -= 1;
            Action::TurnLeft
        } else {
            let field = fmm_field(&map, agent, &config.planning);
            let field = match field {
                Ok(f) => f,
                Err(_) => {
                    termination = Termination::Stuck;
                    break;
                }
            };
            let mut chosen = None;
            if let Some(tp) = target_point {
                if (tp.0 - pose.x).hypot(tp.1 - pose.y) <= 0.9 * config.success_distance {
                    stopped = true;
                }
                let radius = 0.8 * config.success_distance;
                let keep = approach.filter(|g| {
                    let (x, y) = map.spec().cell_center(g.cell);
                    (x - tp.0).hypot(y - tp.1) <= radius
                        && map.occupancy(g.cell) != Occupancy::Obstacle
                        && field.get(g.cell).is_finite()
                });
                approach = keep.or_else(|| approach_goal(&map, &field, tp, radius));
                chosen = approach;
            }
            if stopped {
                Action::Stop
            } else {
                if chosen.is_none() {
                    let pick = match config.policy {
                        Policy::Gamap => select_goal(&map, &field, config.candidate_radius),
                        Policy::NearestFrontier => nearest_frontier(&map, &field),
                    };
                    match pick {
                        Ok(g) => chosen = Some(g),
                        Err(PlanError::ExplorationExhausted) => {
                            termination = Termination::ExplorationExhausted;
                            break;
                        }
                        Err(e) => {
                            note = Some(e.to_string());
                            termination = Termination::ExplorationExhausted;
                            break;
                        }
                    }
                }
                let g = chosen.expect("goal chosen above");
                goal = Some(g.cell);
                match extract_path(&field, g.cell)
                    .and_then(|path| {
                        next_action_avoiding(
                            &pose,
                            &path,
                            scene.spec(),
                            &config.motion,
                            MAX_HEADING_DEVIATION,
                            |c| map.occupancy(c) == Occupancy::Obstacle,
                        )
                    })
                {
                    Ok(a) => a,
                    Err(_) => Action::TurnLeft,
                }
            }
        };

        let (next, collided) = step_agent(scene, &pose, action, &config.motion);
        if collided {
            diagnostics.collisions += 1;
            if let Some(c) = first_blocked_cell(scene, &pose, &config.motion) {
                map.set_occupancy(c, Occupancy::Obstacle);
            }
        }
        if action == Action::MoveForward && !collided {
            forward_steps += 1;
        }
        trace.push(StepRecord {
            step,
            pose,
            action,
            goal,
            detected: detection.is_some(),
            collided,
        });
        step += 1;
        if action == Action::Stop {
            termination = Termination::Stop;
            break;
        }
        if (next.x, next.y) == (pose.x, pose.y) && spin == 0 {
            still_since += 1;
        } else {
            still_since = 0;
        }
        pose = next;
        if still_since >= config.stuck_steps {
            diagnostics.stuck = true;
            termination = Termination::Stuck;
            break;
        }
    }

    let final_distance = scene.distance_to_target(pose.x, pose.y);
    let outcome = if stopped && final_distance <= config.success_distance {
        Outcome::Success
    } else {
        Outcome::Failure
    };
    if stopped && outcome == Outcome::Failure && target_point.is_some() {
        diagnostics.false_positive = scene.distance_to_target(
            target_point.unwrap().0,
            target_point.unwrap().1,
        ) > config.success_distance;
    }
    let error_class = match outcome {
        Outcome::Success => ErrorClass::None,
        Outcome::Failure => classify(&diagnostics),
    };
    timing.total_seconds = started.elapsed().as_secs_f64();
    let result = EpisodeResult {
        seed: scene.seed(),
        difficulty: scene.difficulty(),
        target: scene.target().to_string(),
        policy: config.policy,
        outcome,
        termination,
        steps: step,
        path_length: forward_steps as f64 * config.motion.step,
        shortest_path,
        stop_pose: pose,
        final_distance,
        error_class,
        diagnostics,
        note,
        trace,
        timing,
    };
    Ok((result, map))
}

/// First ground-truth obstacle cell on the forward segment from `pose`.
fn first_blocked_cell(scene: &Scene, pose: &Pose, motion: &MotionConfig) -> Option<CellIndex> {
    let n = 20;
    (1..=n).find_map(|i| {
        let t = motion.step * i as f64 / n as f64;
        let (x, y) = (pose.x + t * pose.theta.cos(), pose.y + t * pose.theta.sin());
        if scene.is_free_point(x, y) {
            None
        } else {
            scene.spec().cell_of_xy(x, y)
        }
    })
}

/// Writes the step trace as one JSON object per line.
pub fn write_trajectory(path: &Path, trace: &[StepRecord]) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in trace {
        serde_json::to_writer(&mut f, rec).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// 8-bit grayscale rendering of a heatmap, north up; unobserved cells are black and
/// scores in [-1, 1] map linearly onto 1..=255.
pub fn heatmap_image(map: &GaMap, channel: HeatmapChannel) -> Result<::image::GrayImage, MapError> {
    let values = map.heatmap(channel)?;
    let spec = map.spec();
    let mut img = ::image::GrayImage::new(spec.cols as u32, spec.rows as u32);
    for (i, v) in values.iter().enumerate() {
        let (r, c) = (i / spec.cols, i % spec.cols);
        let level = match v {
            None => 0,
            Some(s) => (1.0 + ((s.clamp(-1.0, 1.0) + 1.0) / 2.0) * 254.0).round() as u8,
        };
        img.put_pixel(c as u32, (spec.rows - 1 - r) as u32, ::image::Luma([level]));
    }
    Ok(img)
}

/// Seeds, difficulties and config variants to cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteMatrix {
    pub seeds: Seeds,
    pub difficulties: Vec<Difficulty>,
    /// Config shared by every variant.
    #[serde(default)]
    pub base: toml::Table,
    /// Each variant is a `name` plus config overrides.
    pub variants: Vec<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..*start + *count).collect(),
        }
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// One planned episode of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCell {
    pub variant: String,
    pub config: EpisodeConfig,
}

impl SuiteMatrix {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    /// Expands the matrix in variant, difficulty, seed order.
    pub fn expand(&self) -> Result<Vec<SuiteCell>, HarnessError> {
        let seeds = self.seeds.to_vec();
        if seeds.is_empty() || self.difficulties.is_empty() || self.variants.is_empty() {
            return Err(HarnessError::EmptySuite);
        }
        let mut out = Vec::new();
        for (i, variant) in self.variants.iter().enumerate() {
            let mut over = variant.clone();
            let name = match over.remove("name") {
                Some(toml::Value::String(s)) => s,
                Some(_) => return Err(HarnessError::InvalidConfig("variant name must be a string".into())),
                None => format!("variant{i}"),
            };
            for &difficulty in &self.difficulties {
                for &seed in &seeds {
                    let mut table = self.base.clone();
                    merge(&mut table, &over);
                    table.insert("seed".into(), toml::Value::Integer(seed as i64));
                    table.insert("difficulty".into(), toml::Value::String(difficulty.to_string()));
                    let config: EpisodeConfig = toml::Value::Table(table)
                        .try_into()
                        .map_err(|e: toml::de::Error| HarnessError::InvalidConfig(format!("{name}: {e}")))?;
                    config.validate()?;
                    out.push(SuiteCell {
                        variant: name.clone(),
                        config,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Per-episode line of a suite report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub variant: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub target: Option<String>,
    pub success: bool,
    pub termination: Option<Termination>,
    pub steps: usize,
    pub path_length: f64,
    pub shortest_path: f64,
    pub final_distance: f64,
    pub error_class: ErrorClass,
    /// Set when the episode could not run at all.
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Scored for EpisodeSummary {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTiming {
    pub mean_episode_seconds: f64,
    pub mean_scoring_seconds_per_step: f64,
}

/// Aggregate over one (variant, difficulty) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    pub difficulty: Difficulty,
    pub episodes: usize,
    /// Episodes that could not run (counted as failures).
    pub errored: usize,
    pub success_rate: f64,
    pub spl: f64,
    /// Share of episodes (percent) in each failure class.
    pub error_rates: BTreeMap<ErrorClass, f64>,
    pub mean_steps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<GroupTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub groups: Vec<GroupSummary>,
    pub episodes: Vec<EpisodeSummary>,
}

impl SuiteReport {
    pub fn group(&self, variant: &str, difficulty: Difficulty) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.variant == variant && g.difficulty == difficulty)
    }

    /// The report with every timing field removed.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.groups.iter_mut().for_each(|g| g.timing = None);
        r.episodes.iter_mut().for_each(|e| e.timing = None);
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table of the groups.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<24} {:<11} {:>4} {:>7} {:>7} {:>6} {:>6} {:>6} {:>8}\n",
            "variant", "difficulty", "n", "SR", "SPL", "det%", "plan%", "expl%", "ms/score"
        );
        for g in &self.groups {
            let rate = |c| g.error_rates.get(&c).copied().unwrap_or(0.0);
            out.push_str(&format!(
                "{:<24} {:<11} {:>4} {:>7.2} {:>7.2} {:>6.1} {:>6.1} {:>6.1} {:>8}\n",
                g.variant,
                g.difficulty.to_string(),
                g.episodes,
                g.success_rate,
                g.spl,
                rate(ErrorClass::Detection),
                rate(ErrorClass::Planning),
                rate(ErrorClass::Exploration),
                g.timing
                    .as_ref()
                    .map(|t| format!("{:.3}", t.mean_scoring_seconds_per_step * 1e3))
                    .unwrap_or_else(|| "-".into()),
            ));
        }
        out
    }
}

fn summarize(cell: &SuiteCell, result: Result<EpisodeResult, HarnessError>) -> EpisodeSummary {
    match result {
        Ok(r) => EpisodeSummary {
            variant: cell.variant.clone(),
            difficulty: cell.config.difficulty,
            seed: cell.config.seed,
            target: Some(r.target.clone()),
            success: r.outcome == Outcome::Success,
            termination: Some(r.termination),
            steps: r.steps,
            path_length: r.path_length,
            shortest_path: r.shortest_path,
            final_distance: r.final_distance,
            error_class: r.error_class,
            error: None,
            timing: Some(r.timing),
        },
        Err(e) => EpisodeSummary {
            variant: cell.variant.clone(),
            difficulty: cell.config.difficulty,
            seed: cell.config.seed,
            target: None,
            success: false,
            termination: None,
            steps: 0,
            path_length: 0.0,
            shortest_path: f64::NAN,
            final_distance: f64::NAN,
            error_class: ErrorClass::Exploration,
            error: Some(e.to_string()),
            timing: None,
        },
    }
}

/// Runs every cell of the matrix (in parallel when cores allow) and aggregates per
/// variant and difficulty. Episode failures are recorded and the suite continues.
pub fn run_suite(matrix: &SuiteMatrix) -> Result<SuiteReport, HarnessError> {
    let cells = matrix.expand()?;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cells.len());
    let mut episodes: Vec<Option<EpisodeSummary>> = vec![None; cells.len()];
    if threads <= 1 {
        for (slot, cell) in episodes.iter_mut().zip(&cells) {
            *slot = Some(summarize(cell, run_episode(&cell.config)));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(&mut episodes);
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(cell) = cells.get(i) else {
                        break;
                    };
                    let summary = summarize(cell, run_episode(&cell.config));
                    results.lock().expect("no poisoned workers")[i] = Some(summary);
                });
            }
        });
    }
    let episodes: Vec<EpisodeSummary> = episodes.into_iter().map(|e| e.expect("every cell ran")).collect();
    Ok(SuiteReport {
        groups: aggregate(&episodes),
        episodes,
    })
}

/// Groups in first-appearance order.
pub fn aggregate(episodes: &[EpisodeSummary]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, Difficulty)> = Vec::new();
    for e in episodes {
        let key = (e.variant.clone(), e.difficulty);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(variant, difficulty)| {
            let group: Vec<&EpisodeSummary> = episodes
                .iter()
                .filter(|e| e.variant == variant && e.difficulty == difficulty)
                .collect();
            let n = group.len();
            let ran: Vec<EpisodeSummary> = group.iter().filter(|e| e.error.is_none()).map(|e| (*e).clone()).collect();
            let errored = n - ran.len();
            // errored episodes count as failures in both rates
            let scale = ran.len() as f64 / n as f64;
            let success_rate = success_rate(&ran).map(|v| v * scale).unwrap_or(0.0);
            let spl_value = spl(&ran).map(|v| v * scale).unwrap_or(0.0);
            let mut error_rates = BTreeMap::new();
            for class in [ErrorClass::Detection, ErrorClass::Planning, ErrorClass::Exploration] {
                let k = group.iter().filter(|e| !e.success && e.error_class == class).count();
                error_rates.insert(class, 100.0 * k as f64 / n as f64);
            }
            let timings: Vec<Timing> = group.iter().filter_map(|e| e.timing).collect();
            let timing = (!timings.is_empty()).then(|| {
                let steps: usize = timings.iter().map(|t| t.scored_steps).sum();
                GroupTiming {
                    mean_episode_seconds: timings.iter().map(|t| t.total_seconds).sum::<f64>()
                        / timings.len() as f64,
                    mean_scoring_seconds_per_step: timings.iter().map(|t| t.scoring_seconds).sum::<f64>()
                        / steps.max(1) as f64,
                }
            });
            GroupSummary {
                variant,
                difficulty,
                episodes: n,
                errored,
                success_rate,
                spl: spl_value,
                error_rates,
                mean_steps: group.iter().map(|e| e.steps as f64).sum::<f64>() / n as f64,
                timing,
            }
        })
        .collect()
}

/// Provider-agnostic helper for callers that only need a synthetic provider for a target.
pub fn synthetic_provider_for(
    target: &str,
    n_geometric: usize,
    n_affordance: usize,
) -> Result<(SyntheticProvider, AttributeEmbeddings), HarnessError> {
    let attrs = resolve_attributes(target, n_geometric, n_affordance, &AttributeSource::Bundled)?;
    let provider = SyntheticProvider::new(&attrs.channels());
    let emb = AttributeEmbeddings::embed(&attrs, &provider)?;
    debug_assert_eq!(emb.dim(), provider.dim());
    Ok((provider, emb))
}
