//! Fast-marching distance fields, path extraction, goal selection and waypoint following.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamap::{GaMap, Occupancy};
use crate::geometry::{normalize_angle, CellIndex, GridSpec, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("source cell ({}, {}) is blocked or outside the grid", .0.row, .0.col)]
    SourceBlocked(CellIndex),
    #[error("goal cell ({}, {}) is unreachable", .0.row, .0.col)]
    Unreachable(CellIndex),
    #[error("no reachable frontier candidates left")]
    ExplorationExhausted,
    #[error("empty path")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    /// Obstacles are grown by this radius (meters) before planning.
    pub inflation_radius: f64,
    /// Traversal cost multiplier for Unknown cells (Free = 1).
    pub unknown_cost: f64,
    /// Chebyshev radius (cells) around frontiers in which goals may be chosen.
    pub candidate_radius: usize,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            inflation_radius: 0.18,
            unknown_cost: 2.0,
            candidate_radius: 3,
        }
    }
}

impl PlanningConfig {
    pub fn inflation_cells(&self, resolution: f64) -> usize {
        if self.inflation_radius <= 0.0 {
            0
        } else {
            (self.inflation_radius / resolution - 1e-9).ceil() as usize
        }
    }
}

/// Geodesic distance (meters) from a source cell; `INFINITY` where unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub rows: usize,
    pub cols: usize,
    pub resolution: f64,
    pub source: CellIndex,
    values: Vec<f64>,
}

impl DistanceField {
    #[inline]
    pub fn get(&self, cell: CellIndex) -> f64 {
        self.values[cell.row * self.cols + cell.col]
    }

    pub fn is_reachable(&self, cell: CellIndex) -> bool {
        self.get(cell).is_finite()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn spec(&self) -> GridSpec {
        GridSpec {
            resolution: self.resolution,
            rows: self.rows,
            cols: self.cols,
            origin_x: 0.0,
            origin_y: 0.0,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties on index for determinism
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind fast marching on a 4-connected grid.
///
/// `cost[i]` is the local slowness of cell `i` (1 for free space); non-finite or
/// non-positive cost blocks the cell.
pub fn fast_march(
    rows: usize,
    cols: usize,
    resolution: f64,
    cost: &[f64],
    source: CellIndex,
) -> Result<DistanceField, PlanError> {
    assert_eq!(cost.len(), rows * cols);
    let blocked = |i: usize| !(cost[i].is_finite() && cost[i] > 0.0);
    if source.row >= rows || source.col >= cols || blocked(source.row * cols + source.col) {
        return Err(PlanError::SourceBlocked(source));
    }
    let mut t = vec![f64::INFINITY; rows * cols];
    let mut known = vec![false; rows * cols];
    let mut heap = BinaryHeap::new();
    let s = source.row * cols + source.col;
    t[s] = 0.0;
    heap.push(Entry(0.0, s));
    while let Some(Entry(d, i)) = heap.pop() {
        if known[i] || d > t[i] {
            continue;
        }
        known[i] = true;
        let (r, c) = (i / cols, i % cols);
        let mut relax = |nr: usize, nc: usize| {
            let n = nr * cols + nc;
            if known[n] || blocked(n) {
                return;
            }
            let horiz = min_known(&t, &known, nr, nc, cols, rows, true);
            let vert = min_known(&t, &known, nr, nc, cols, rows, false);
            let f = cost[n] * resolution;
            let v = eikonal_update(horiz, vert, f);
            if v < t[n] {
                t[n] = v;
                heap.push(Entry(v, n));
            }
        };
        if r > 0 {
            relax(r - 1, c);
        }
        if r + 1 < rows {
            relax(r + 1, c);
        }
        if c > 0 {
            relax(r, c - 1);
        }
        if c + 1 < cols {
            relax(r, c + 1);
        }
    }
    Ok(DistanceField {
        rows,
        cols,
        resolution,
        source,
        values: t,
    })
}

fn min_known(
    t: &[f64],
    known: &[bool],
    r: usize,
    c: usize,
    cols: usize,
    rows: usize,
    horizontal: bool,
) -> f64 {
    let mut m = f64::INFINITY;
    let mut take = |i: usize| {
        if known[i] && t[i] < m {
            m = t[i];
        }
    };
    if horizontal {
        if c > 0 {
            take(r * cols + c - 1);
        }
        if c + 1 < cols {
            take(r * cols + c + 1);
        }
    } else {
        if r > 0 {
            take((r - 1) * cols + c);
        }
        if r + 1 < rows {
            take((r + 1) * cols + c);
        }
    }
    m
}

/// Solves the two-sided upwind quadratic `(T - a)^2 + (T - b)^2 = f^2`.
fn eikonal_update(a: f64, b: f64, f: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= f {
        return lo + f;
    }
    let diff = hi - lo;
    (lo + hi + (2.0 * f * f - diff * diff).sqrt()) / 2.0
}

/// Cells within `radius` (Euclidean, in cells) of any `true` cell.
pub fn inflate(mask: &[bool], rows: usize, cols: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| dr * dr + dc * dc <= r * r)
        .collect();
    let mut out = mask.to_vec();
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        let (row, col) = ((i / cols) as isize, (i % cols) as isize);
        for &(dr, dc) in &offsets {
            let (nr, nc) = (row + dr, col + dc);
            if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
                out[nr as usize * cols + nc as usize] = true;
            }
        }
    }
    out
}

/// Per-cell slowness for planning on `occupancy` from `source`.
///
/// Obstacles (grown by the inflation radius) are impassable, Unknown cells cost
/// `unknown_cost`. The inflation halo is lifted around the source so an agent that
/// drifted close to a wall can still leave, and the source itself is always passable.
pub fn traversal_costs(
    spec: &GridSpec,
    occupancy: &[Occupancy],
    source: CellIndex,
    config: &PlanningConfig,
) -> Vec<f64> {
    let obstacle: Vec<bool> = occupancy.iter().map(|o| *o == Occupancy::Obstacle).collect();
    let k = config.inflation_cells(spec.resolution);
    let mut blocked = inflate(&obstacle, spec.rows, spec.cols, k);
    if spec.contains(source) {
        let k = k as isize;
        for dr in -k..=k {
            for dc in -k..=k {
                if let Some(c) = spec.offset(source, dr, dc) {
                    let i = spec.index(c);
                    if !obstacle[i] {
                        blocked[i] = false;
                    }
                }
            }
        }
        blocked[spec.index(source)] = false;
    }
    occupancy
        .iter()
        .zip(&blocked)
        .map(|(o, &b)| match (b, o) {
            (true, _) => f64::INFINITY,
            (false, Occupancy::Unknown) => config.unknown_cost,
            (false, _) => 1.0,
        })
        .collect()
}

/// Distance field over the map from `source` (the agent cell is always treated as passable).
pub fn fmm_field(
    map: &GaMap,
    source: CellIndex,
    config: &PlanningConfig,
) -> Result<DistanceField, PlanError> {
    let spec = map.spec();
    if !spec.contains(source) {
        return Err(PlanError::SourceBlocked(source));
    }
    let cost = traversal_costs(spec, map.occupancy_grid(), source, config);
    fast_march(spec.rows, spec.cols, spec.resolution, &cost, source)
}

/// Descent from `goal` to the field's source, each step going to the neighbour that
/// minimizes its distance value plus the step length; returned source-first.
///
/// Diagonal steps are taken only when both side cells are reachable, so the path never
/// clips an obstacle corner.
pub fn extract_path(field: &DistanceField, goal: CellIndex) -> Result<Vec<CellIndex>, PlanError> {
    let spec = field.spec();
    if !spec.contains(goal) || !field.is_reachable(goal) {
        return Err(PlanError::Unreachable(goal));
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != field.source {
        let here = field.get(cur);
        let next = spec
            .neighbors8(cur)
            .filter(|n| field.get(*n) < here)
            .filter(|n| {
                n.row == cur.row
                    || n.col == cur.col
                    || (field.is_reachable(CellIndex::new(cur.row, n.col))
                        && field.is_reachable(CellIndex::new(n.row, cur.col)))
            })
            .map(|n| {
                let step = if n.row == cur.row || n.col == cur.col { 1.0 } else { SQRT_2 };
                (field.get(n) + step * field.resolution, n)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, n)| n);
        match next {
            Some(n) => {
                path.push(n);
                cur = n;
            }
            None => return Err(PlanError::Unreachable(goal)),
        }
    }
    path.reverse();
    Ok(path)
}

/// Euclidean length of a cell path in meters.
pub fn path_length(path: &[CellIndex], resolution: f64) -> f64 {
    path.windows(2)
        .map(|w| {
            let dr = w[0].row.abs_diff(w[1].row) as f64;
            let dc = w[0].col.abs_diff(w[1].col) as f64;
            dr.hypot(dc) * resolution
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSelection {
    pub cell: CellIndex,
    /// Channel-mean score of the cell (0 for frontier goals without a score).
    pub score: f64,
    /// Geodesic distance from the agent (meters).
    pub distance: f64,
}

/// Highest channel-mean candidate near a frontier.
///
/// Only reachable cells the agent has not already occupied are considered. Ties go to
/// the nearer cell, then row-major order.
pub fn select_goal(
    map: &GaMap,
    field: &DistanceField,
    radius: usize,
) -> Result<GoalSelection, PlanError> {
    let mut best: Option<GoalSelection> = None;
    for cell in map.candidate_cells(radius) {
        let d = field.get(cell);
        if !d.is_finite() || map.is_visited(cell) {
            continue;
        }
        let Ok(Some(score)) = map.channel_mean(cell) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && d < b.distance),
        };
        if better {
            best = Some(GoalSelection {
                cell,
                score,
                distance: d,
            });
        }
    }
    best.ok_or(PlanError::ExplorationExhausted)
}

/// [`select_goal`] with the distance field computed from `agent`.
pub fn select_goal_from(
    map: &GaMap,
    agent: CellIndex,
    config: &PlanningConfig,
) -> Result<(GoalSelection, DistanceField), PlanError> {
    let field = fmm_field(map, agent, config)?;
    let goal = select_goal(map, &field, config.candidate_radius)?;
    Ok((goal, field))
}

/// Closest reachable, unvisited frontier cell (the frontier-based exploration baseline).
pub fn nearest_frontier(map: &GaMap, field: &DistanceField) -> Result<GoalSelection, PlanError> {
    let mut best: Option<GoalSelection> = None;
    for cell in map.frontiers() {
        let d = field.get(cell);
        if !d.is_finite() || map.is_visited(cell) {
            continue;
        }
        if best.is_none_or(|b| d < b.distance) {
            best = Some(GoalSelection {
                cell,
                score: map.channel_mean(cell).ok().flatten().unwrap_or(0.0),
                distance: d,
            });
        }
    }
    best.ok_or(PlanError::ExplorationExhausted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    /// Forward step (meters).
    pub step: f64,
    /// Turn increment (radians).
    pub turn: f64,
    /// Distance (meters) along the path to the waypoint being steered to.
    pub lookahead: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            step: 0.25,
            turn: PI / 6.0,
            lookahead: 0.3,
        }
    }
}

fn lookahead_point(
    pose: &Pose,
    path: &[CellIndex],
    spec: &GridSpec,
    motion: &MotionConfig,
) -> Result<(f64, f64), PlanError> {
    let last = *path.last().ok_or(PlanError::EmptyPath)?;
    Ok(path
        .iter()
        .map(|c| spec.cell_center(*c))
        .find(|(x, y)| (x - pose.x).hypot(y - pose.y) >= motion.lookahead)
        .unwrap_or_else(|| spec.cell_center(last)))
}

/// Pure waypoint follower: turn toward the lookahead waypoint, otherwise move forward.
pub fn next_action(
    pose: &Pose,
    path: &[CellIndex],
    spec: &GridSpec,
    motion: &MotionConfig,
) -> Result<Action, PlanError> {
    let waypoint = lookahead_point(pose, path, spec, motion)?;
    let (dx, dy) = (waypoint.0 - pose.x, waypoint.1 - pose.y);
    if dx.hypot(dy) < 1e-9 {
        return Ok(Action::TurnLeft);
    }
    let err = normalize_angle(dy.atan2(dx) - pose.theta);
    Ok(if err.abs() <= motion.turn / 2.0 + 1e-12 {
        Action::MoveForward
    } else if err > 0.0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    })
}

/// Waypoint follower that also respects known obstacles: among the headings within
/// `max_dev` of the waypoint bearing, it steers toward the closest one whose forward
/// step crosses no cell flagged by `blocked`.
pub fn next_action_avoiding(
    pose: &Pose,
    path: &[CellIndex],
    spec: &GridSpec,
    motion: &MotionConfig,
    max_dev: f64,
    blocked: impl Fn(CellIndex) -> bool,
) -> Result<Action, PlanError> {
    let plain = next_action(pose, path, spec, motion)?;
    let waypoint = lookahead_point(pose, path, spec, motion)?;
    let bearing = (waypoint.1 - pose.y).atan2(waypoint.0 - pose.x);
    let step_is_clear = |theta: f64| {
        let n = (motion.step / (spec.resolution * 0.25)).ceil().max(1.0) as usize;
        (1..=n).all(|i| {
            let t = motion.step * i as f64 / n as f64;
            spec.cell_of_xy(pose.x + t * theta.cos(), pose.y + t * theta.sin())
                .is_some_and(|c| !blocked(c))
        })
    };
    if plain == Action::Stop || (plain == Action::MoveForward && step_is_clear(pose.theta)) {
        return Ok(plain);
    }
    let half = (PI / motion.turn).floor() as i32;
    let best = (-half..=half)
        .map(|k| (k, pose.theta + k as f64 * motion.turn))
        .filter(|&(_, h)| normalize_angle(bearing - h).abs() <= max_dev && step_is_clear(h))
        .min_by(|a, b| {
            let ea = normalize_angle(bearing - a.1).abs();
            let eb = normalize_angle(bearing - b.1).abs();
            // equal error: fewer turns, then left
            ea.total_cmp(&eb)
                .then(a.0.abs().cmp(&b.0.abs()))
                .then(b.0.cmp(&a.0))
        });
    Ok(match best {
        Some((0, _)) => Action::MoveForward,
        Some((k, _)) if k > 0 => Action::TurnLeft,
        Some(_) => Action::TurnRight,
        None => plain,
    })
}

/// Pose after `action` with no collision checking.
pub fn apply_motion(pose: &Pose, action: Action, motion: &MotionConfig) -> Pose {
    match action {
        Action::MoveForward => Pose::new(
            pose.x + motion.step * pose.theta.cos(),
            pose.y + motion.step * pose.theta.sin(),
            pose.theta,
        ),
        Action::TurnLeft => Pose::new(pose.x, pose.y, pose.theta + motion.turn),
        Action::TurnRight => Pose::new(pose.x, pose.y, pose.theta - motion.turn),
        Action::Stop => *pose,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn open(rows: usize, cols: usize) -> Vec<f64> {
        vec![1.0; rows * cols]
    }

    #[test]
    fn one_step_neighbors() {
        let f = fast_march(3, 3, 0.05, &open(3, 3), CellIndex::new(1, 1)).unwrap();
        assert_eq!(f.get(CellIndex::new(1, 1)), 0.0);
        for c in [(0, 1), (2, 1), (1, 0), (1, 2)] {
            assert_relative_eq!(f.get(CellIndex::new(c.0, c.1)), 0.05, max_relative = 1e-12);
        }
    }

    #[test]
    fn corridor_is_exact() {
        let n = 40;
        let f = fast_march(1, n, 0.1, &open(1, n), CellIndex::new(0, 0)).unwrap();
        let far = f.get(CellIndex::new(0, n - 1));
        assert!((far - (n - 1) as f64 * 0.1).abs() <= 0.01 * (n - 1) as f64 * 0.1);
    }

    #[test]
    fn blocked_source_rejected() {
        let mut cost = open(2, 2);
        cost[0] = f64::INFINITY;
        assert_eq!(
            fast_march(2, 2, 1.0, &cost, CellIndex::new(0, 0)),
            Err(PlanError::SourceBlocked(CellIndex::new(0, 0)))
        );
    }

    #[test]
    fn path_to_source_is_single_cell() {
        let f = fast_march(5, 5, 1.0, &open(5, 5), CellIndex::new(2, 2)).unwrap();
        assert_eq!(extract_path(&f, CellIndex::new(2, 2)).unwrap(), vec![CellIndex::new(2, 2)]);
    }

    #[test]
    fn corridor_path_is_straight() {
        let f = fast_march(1, 8, 1.0, &open(1, 8), CellIndex::new(0, 1)).unwrap();
        let p = extract_path(&f, CellIndex::new(0, 6)).unwrap();
        assert_eq!(p, (1..=6).map(|c| CellIndex::new(0, c)).collect::<Vec<_>>());
    }

    #[test]
    fn unreachable_goal() {
        let mut cost = open(3, 3);
        for r in 0..3 {
            cost[r * 3 + 1] = f64::INFINITY;
        }
        let f = fast_march(3, 3, 1.0, &cost, CellIndex::new(0, 0)).unwrap();
        assert_eq!(
            extract_path(&f, CellIndex::new(0, 2)),
            Err(PlanError::Unreachable(CellIndex::new(0, 2)))
        );
    }

    #[test]
    fn unknown_cells_cost_more() {
        let spec = GridSpec::new(1.0, 1, 3, 0.0, 0.0).unwrap();
        let occ = [Occupancy::Free, Occupancy::Unknown, Occupancy::Unknown];
        let cfg = PlanningConfig {
            inflation_radius: 0.0,
            ..Default::default()
        };
        let cost = traversal_costs(&spec, &occ, CellIndex::new(0, 0), &cfg);
        assert_eq!(cost, vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn inflation_lifted_near_source_only() {
        let spec = GridSpec::new(0.1, 1, 10, 0.0, 0.0).unwrap();
        let mut occ = vec![Occupancy::Free; 10];
        occ[3] = Occupancy::Obstacle;
        let cfg = PlanningConfig::default(); // 2 cells at 0.1 m
        let cost = traversal_costs(&spec, &occ, CellIndex::new(0, 9), &cfg);
        assert!(cost[1].is_infinite() && cost[5].is_infinite());
        assert!(cost[0].is_finite() && cost[6].is_finite());
        let near = traversal_costs(&spec, &occ, CellIndex::new(0, 5), &cfg);
        assert!(near[5].is_finite() && near[4].is_finite() && near[3].is_infinite());
    }

    #[test]
    fn next_action_examples() {
        let spec = GridSpec::new(0.1, 20, 20, 0.0, 0.0).unwrap();
        let m = MotionConfig::default();
        let pose = Pose::new(1.05, 1.05, 0.0);
        let ahead: Vec<_> = (10..16).map(|c| CellIndex::new(10, c)).collect();
        assert_eq!(next_action(&pose, &ahead, &spec, &m).unwrap(), Action::MoveForward);
        let left: Vec<_> = (10..16).map(|r| CellIndex::new(r, 10)).collect();
        assert_eq!(next_action(&pose, &left, &spec, &m).unwrap(), Action::TurnLeft);
        // heading error of -100 degrees
        let a = (-100f64).to_radians();
        let wp = spec.cell_of_xy(1.05 + 0.6 * a.cos(), 1.05 + 0.6 * a.sin()).unwrap();
        assert_eq!(
            next_action(&pose, &[CellIndex::new(10, 10), wp], &spec, &m).unwrap(),
            Action::TurnRight
        );
        assert_eq!(next_action(&pose, &[], &spec, &m), Err(PlanError::EmptyPath));
    }

    #[test]
    fn avoiding_follower_detours_around_known_obstacles() {
        let spec = GridSpec::new(0.1, 20, 20, 0.0, 0.0).unwrap();
        let m = MotionConfig::default();
        let pose = Pose::new(1.05, 1.05, 0.0);
        let ahead: Vec<_> = (10..16).map(|c| CellIndex::new(10, c)).collect();
        let dev = PI / 3.0;
        // nothing known: same as the plain follower
        let free = |_: CellIndex| false;
        for path in [ahead.clone(), (10..16).map(|r| CellIndex::new(r, 10)).collect()] {
            assert_eq!(
                next_action_avoiding(&pose, &path, &spec, &m, dev, free).unwrap(),
                next_action(&pose, &path, &spec, &m).unwrap()
            );
        }
        // the cell straight ahead is blocked: left first at equal error
        let wall = |c: CellIndex| c == CellIndex::new(10, 12);
        assert_eq!(
            next_action_avoiding(&pose, &ahead, &spec, &m, dev, wall).unwrap(),
            Action::TurnLeft
        );
        // already turned onto a clear heading inside the limit: keep going
        let turned = Pose::new(1.05, 1.05, m.turn);
        assert_eq!(
            next_action_avoiding(&turned, &ahead, &spec, &m, dev, wall).unwrap(),
            Action::MoveForward
        );
        // everything blocked: fall back to the plain follower
        let all = |_: CellIndex| true;
        assert_eq!(
            next_action_avoiding(&pose, &ahead, &spec, &m, dev, all).unwrap(),
            Action::MoveForward
        );
    }

    #[test]
    fn goal_ties_prefer_nearer() {
        let spec = GridSpec::new(0.1, 1, 9, 0.0, 0.0).unwrap();
        let mut map = GaMap::new(spec, vec!["a".into()], Default::default());
        for c in 1..8 {
            map.set_occupancy(CellIndex::new(0, c), Occupancy::Free);
        }
        map.set_scores(CellIndex::new(0, 1), &[0.4]);
        map.set_scores(CellIndex::new(0, 7), &[0.4]);
        let cfg = PlanningConfig {
            inflation_radius: 0.0,
            candidate_radius: 0,
            ..Default::default()
        };
        let (g, _) = select_goal_from(&map, CellIndex::new(0, 5), &cfg).unwrap();
        assert_eq!(g.cell, CellIndex::new(0, 7));
        map.set_scores(CellIndex::new(0, 1), &[0.5]);
        let (g, _) = select_goal_from(&map, CellIndex::new(0, 5), &cfg).unwrap();
        assert_eq!(g.cell, CellIndex::new(0, 1));
        map.mark_visited(CellIndex::new(0, 1));
        let (g, _) = select_goal_from(&map, CellIndex::new(0, 5), &cfg).unwrap();
        assert_eq!(g.cell, CellIndex::new(0, 7));
    }

    #[test]
    fn no_frontier_means_exhausted() {
        let spec = GridSpec::new(0.1, 3, 3, 0.0, 0.0).unwrap();
        let mut map = GaMap::new(spec, vec!["a".into()], Default::default());
        for i in 0..9 {
            map.set_occupancy(spec.cell_at(i), Occupancy::Free);
        }
        let cfg = PlanningConfig::default();
        assert!(matches!(
            select_goal_from(&map, CellIndex::new(1, 1), &cfg),
            Err(PlanError::ExplorationExhausted)
        ));
        let field = fmm_field(&map, CellIndex::new(1, 1), &cfg).unwrap();
        assert_eq!(
            nearest_frontier(&map, &field),
            Err(PlanError::ExplorationExhausted)
        );
    }
}
