//! Checks shared by the dedicated integration tests and the acceptance runner.
#![allow(dead_code)]

use std::time::Instant;

use gamap::attributes::AttributeEmbeddings;
use gamap::gamap::{update_rule, GaMap, ObservationFusion, Occupancy, UpdateMode};
use gamap::geometry::{
    back_project_depth, to_world, world_to_cell, CameraIntrinsics, CellIndex, GridSpec, HeightClass,
    HeightFilter, Pose, SensorConfig,
};
use gamap::harness::{spl, success_rate, Scored};
use gamap::image::{DepthImage, RgbImage};
use gamap::planner::{extract_path, fast_march, path_length};
use gamap::pyramid::{
    partition, patch_index, score_observation, similarity, EmbeddingProvider, LevelAggregation,
    ProviderError, ScoreImage, ScoringConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 200;
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] {} ({:.1}s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Times `f`, which returns `Ok(detail)` on success and `Err(detail)` on failure.
pub fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let t = Instant::now();
    let r = f();
    let seconds = t.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        name: name.to_string(),
        pass,
        detail,
        seconds,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Equation oracles

/// Cosine similarity, written out term by term.
pub fn hand_cosine(v: &[f64], e: &[f64]) -> f64 {
    let mut dot = 0.0;
    for i in 0..v.len() {
        dot += v[i] * e[i];
    }
    let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ne: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (nv * ne)
}

fn random_vec(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

pub fn cosine_oracle() -> Result<String, String> {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let dim = r.random_range(1..=32);
        let v = random_vec(&mut r, dim);
        let e = random_vec(&mut r, dim);
        let got = similarity(&v, &e).map_err(|e| format!("instance {i}: {e}"))?;
        let want = hand_cosine(&v, &e).clamp(-1.0, 1.0);
        worst = worst.max((got - want).abs());
        ensure(close(got, want), || format!("instance {i}: {got} vs {want}"))?;
    }
    Ok(format!("{INSTANCES} instances, max abs err {worst:.2e}"))
}

/// Deterministic stand-in encoder: mean colour, colour spread and patch size.
pub struct StubProvider;

impl StubProvider {
    pub fn encode(patch: &RgbImage) -> Vec<f64> {
        let n = (patch.width() * patch.height()) as f64;
        let mut sum = [0.0f64; 3];
        let mut sq = 0.0;
        for px in patch.pixels() {
            for c in 0..3 {
                let x = px.0[c] as f64 / 255.0;
                sum[c] += x;
                sq += x * x;
            }
        }
        let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
        let v = vec![
            mean[0] - 0.5,
            mean[1] - 0.5,
            mean[2] - 0.5,
            sq / (3.0 * n) - 0.3,
            0.05 + 1.0 / n,
        ];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }
}

impl EmbeddingProvider for StubProvider {
    fn dim(&self) -> usize {
        5
    }
    fn embed_images(&self, patches: &[RgbImage]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(patches.iter().map(Self::encode).collect())
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| {
                let b = t.as_bytes();
                let v: Vec<f64> = (0..5).map(|i| b[i % b.len()] as f64 - 100.0 + i as f64).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect())
    }
}

fn random_image(r: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| {
        gamap::image::Rgb([r.random(), r.random(), r.random()])
    })
}

/// Copy of the pixels `[r0, r1) x [c0, c1)`.
fn crop_by_hand(img: &RgbImage, r0: usize, r1: usize, c0: usize, c1: usize) -> RgbImage {
    let mut out = RgbImage::new((c1 - c0) as u32, (r1 - r0) as u32);
    for r in r0..r1 {
        for c in c0..c1 {
            out.put_pixel((c - c0) as u32, (r - r0) as u32, *img.get_pixel(c as u32, r as u32));
        }
    }
    out
}

/// Per-pixel pyramid scoring with every pixel scored independently.
pub fn brute_force_scores(
    img: &RgbImage,
    attrs: &[Vec<f64>],
    levels: usize,
    aggregation: LevelAggregation,
) -> Vec<Vec<Vec<f64>>> {
    let (h, w) = (img.height() as usize, img.width() as usize);
    let mut out = vec![vec![vec![0.0; attrs.len()]; w]; h];
    for (p, row) in out.iter_mut().enumerate() {
        for (q, px) in row.iter_mut().enumerate() {
            for (e, text) in attrs.iter().enumerate() {
                let mut per_level = Vec::new();
                for k in 1..=levels {
                    let side = 1usize << (k - 1);
                    let (ph, pw) = (h / side, w / side);
                    let (i, j) = (p / ph, q / pw);
                    let patch = crop_by_hand(img, i * ph, (i + 1) * ph, j * pw, (j + 1) * pw);
                    per_level.push(hand_cosine(&StubProvider::encode(&patch), text));
                }
                px[e] = match aggregation {
                    LevelAggregation::Mean => per_level.iter().sum::<f64>() / levels as f64,
                    LevelAggregation::Max => per_level.iter().cloned().fold(f64::MIN, f64::max),
                };
            }
        }
    }
    out
}

pub fn pyramid_oracle() -> Result<String, String> {
    let mut r = rng(2);
    let mut pixels = 0usize;
    for i in 0..INSTANCES {
        let levels = r.random_range(1..=4usize);
        let div = 1u32 << (levels - 1);
        let (w, h) = (div * r.random_range(1..=3u32), div * r.random_range(1..=3u32));
        let img = random_image(&mut r, w, h);
        let channels = r.random_range(1..=4usize);
        let names: Vec<String> = (0..channels).map(|c| format!("attr{c}")).collect();
        let raw: Vec<Vec<f64>> = (0..channels).map(|_| random_vec(&mut r, 5)).collect();
        let attrs = AttributeEmbeddings::from_vectors(names, raw).map_err(|e| e.to_string())?;
        let aggregation = if i % 2 == 0 {
            LevelAggregation::Mean
        } else {
            LevelAggregation::Max
        };
        let config = ScoringConfig {
            levels,
            aggregation,
            batch_size: r.random_range(1..=8),
        };
        let got = score_observation(&img, &attrs, &StubProvider, &config)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let want = brute_force_scores(&img, attrs.vectors(), levels, aggregation);

        // integer-indexed parts: patch tiling and pixel-to-patch lookup
        let pyr = partition(&img, levels, None).map_err(|e| e.to_string())?;
        for (k, patches) in pyr.levels.iter().enumerate() {
            let side = 1usize << k;
            for patch in patches {
                let (ph, pw) = (h as usize / side, w as usize / side);
                let hand = crop_by_hand(
                    &img,
                    (patch.h - 1) * ph,
                    patch.h * ph,
                    (patch.w - 1) * pw,
                    patch.w * pw,
                );
                ensure(patch.image == hand, || {
                    format!("instance {i}: level {} patch ({}, {}) pixels differ", k + 1, patch.h, patch.w)
                })?;
            }
        }
        for p in 0..h as usize {
            for q in 0..w as usize {
                for k in 1..=levels {
                    let side = 1usize << (k - 1);
                    let want_idx = (p * side / h as usize + 1, q * side / w as usize + 1);
                    let got_idx = patch_index(p, q, k, h as usize, w as usize).map_err(|e| e.to_string())?;
                    ensure(got_idx == want_idx, || {
                        format!("instance {i}: patch_index({p},{q},{k}) = {got_idx:?}, want {want_idx:?}")
                    })?;
                }
                for e in 0..channels {
                    let (g, t) = (got.get(p, q, e), want[p][q][e]);
                    ensure(close(g, t), || format!("instance {i}: pixel ({p},{q}) ch {e}: {g} vs {t}"))?;
                }
                pixels += 1;
            }
        }
    }
    Ok(format!("{INSTANCES} images, {pixels} pixels"))
}

fn random_intrinsics(r: &mut ChaCha8Rng) -> CameraIntrinsics {
    let (w, h) = (r.random_range(4..=24usize), r.random_range(4..=24usize));
    CameraIntrinsics::new(
        r.random_range(5.0..60.0),
        r.random_range(5.0..60.0),
        r.random_range(0.0..w as f64),
        r.random_range(0.0..h as f64),
        w,
        h,
    )
    .expect("valid intrinsics")
}

/// Cell containing `(x, y)` found by scanning cell bounds.
pub fn cell_by_scan(spec: &GridSpec, x: f64, y: f64) -> Option<CellIndex> {
    let col = (0..spec.cols).find(|&c| {
        let lo = spec.origin_x + c as f64 * spec.resolution;
        x >= lo && x < spec.origin_x + (c + 1) as f64 * spec.resolution
    })?;
    let row = (0..spec.rows).find(|&r| {
        let lo = spec.origin_y + r as f64 * spec.resolution;
        y >= lo && y < spec.origin_y + (r + 1) as f64 * spec.resolution
    })?;
    Some(CellIndex::new(row, col))
}

/// `K^-1 [u v 1]^T d`, rotated by the camera-to-world matrix and lifted to the mount height.
pub fn hand_world_point(k: &CameraIntrinsics, row: usize, col: usize, d: f64, pose: &Pose, h: f64) -> [f64; 3] {
    let kinv = [
        [1.0 / k.fx, 0.0, -k.cx / k.fx],
        [0.0, 1.0 / k.fy, -k.cy / k.fy],
        [0.0, 0.0, 1.0],
    ];
    let pix = [col as f64, row as f64, 1.0];
    let mut cam = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            cam[i] += kinv[i][j] * pix[j] * d;
        }
    }
    let (c, s) = (pose.theta.cos(), pose.theta.sin());
    // columns: camera right, camera down, camera forward
    let rot = [[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]];
    let t = [pose.x, pose.y, h];
    let mut w = t;
    for i in 0..3 {
        for j in 0..3 {
            w[i] += rot[i][j] * cam[j];
        }
    }
    w
}

fn random_pose(r: &mut ChaCha8Rng, spec: &GridSpec) -> Pose {
    let w = spec.cols as f64 * spec.resolution;
    let h = spec.rows as f64 * spec.resolution;
    Pose::new(
        spec.origin_x + r.random_range(0.2 * w..0.8 * w),
        spec.origin_y + r.random_range(0.2 * h..0.8 * h),
        r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

fn random_spec(r: &mut ChaCha8Rng) -> GridSpec {
    GridSpec::new(
        [0.05, 0.1, 0.2][r.random_range(0..3)],
        r.random_range(10..=40),
        r.random_range(10..=40),
        r.random_range(-3.0..0.0),
        r.random_range(-3.0..0.0),
    )
    .expect("valid grid")
}

pub fn projection_oracle() -> Result<String, String> {
    let mut r = rng(3);
    let mut inside = 0;
    for i in 0..INSTANCES {
        let k = random_intrinsics(&mut r);
        let res = [0.05, 0.1, 0.2][r.random_range(0..3)];
        let cells = (14.0 / res) as usize;
        let spec = GridSpec::new(res, cells, cells, r.random_range(-8.0..-6.0), r.random_range(-8.0..-6.0))
            .expect("valid grid");
        let pose = Pose::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let h = r.random_range(0.3..1.5);
        let (row, col) = (r.random_range(0..k.height), r.random_range(0..k.width));
        let d = r.random_range(0.05..6.0);
        let cam = back_project_depth(&k, row, col, d).map_err(|e| e.to_string())?;
        let got = to_world(&cam, &pose, h);
        let want = hand_world_point(&k, row, col, d, &pose, h);
        for (g, w) in [got.x, got.y, got.z].into_iter().zip(want) {
            ensure(close(g, w), || format!("instance {i}: world {g} vs {w}"))?;
        }
        let cell = world_to_cell(&got, &spec);
        let scan = cell_by_scan(&spec, got.x, got.y);
        ensure(cell == scan, || format!("instance {i}: cell {cell:?} vs scan {scan:?}"))?;
        inside += cell.is_some() as usize;
    }
    Ok(format!("{INSTANCES} points, {inside} inside the grid"))
}

pub struct RandomObservation {
    pub scores: ScoreImage,
    pub depth: DepthImage,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

pub fn random_observation(r: &mut ChaCha8Rng, spec: &GridSpec, channels: usize) -> RandomObservation {
    let intrinsics = random_intrinsics(r);
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut scores = ScoreImage::new(h, w, channels, 0.0);
    let mut depth = DepthImage::new(w, h, 0.0);
    for p in 0..h {
        for q in 0..w {
            // some invalid returns on purpose
            let d = match r.random_range(0..10) {
                0 => 0.0,
                1 => 20.0,
                _ => r.random_range(0.1..4.0),
            };
            depth.set(p, q, d);
            for e in 0..channels {
                // coarse values so ties between pixels happen
                scores.set(p, q, e, (r.random_range(-10..=10) as f64) / 10.0);
            }
        }
    }
    RandomObservation {
        scores,
        depth,
        pose: random_pose(r, spec),
        intrinsics,
    }
}

pub fn test_sensor() -> SensorConfig {
    SensorConfig {
        camera_height: 0.88,
        max_depth: 10.0,
        height_filter: HeightFilter {
            floor_max: 0.2,
            obstacle_max: 1.5,
        },
        surface_nudge: 0.0,
        explore_range: 3.0,
    }
}

pub fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("c{c}")).collect()
}

/// For each cell, the max over every pixel that lands in it.
pub fn brute_force_cell_max(
    obs: &RandomObservation,
    spec: &GridSpec,
    sensor: &SensorConfig,
) -> Vec<Option<Vec<f64>>> {
    let (w, h) = (obs.depth.width(), obs.depth.height());
    let landing: Vec<Option<CellIndex>> = (0..h * w)
        .map(|i| {
            let (p, q) = (i / w, i % w);
            let d = obs.depth.get(p, q);
            if !sensor.depth_is_valid(d) {
                return None;
            }
            let cam = back_project_depth(&obs.intrinsics, p, q, d).ok()?;
            let world = to_world(&cam, &obs.pose, sensor.camera_height);
            if sensor.height_filter.classify(world.z) == HeightClass::Ignored {
                return None;
            }
            cell_by_scan(spec, world.x, world.y)
        })
        .collect();
    let mut out = vec![None; spec.len()];
    for (ci, slot) in out.iter_mut().enumerate() {
        let cell = spec.cell_at(ci);
        let mut best: Option<Vec<f64>> = None;
        for (pi, l) in landing.iter().enumerate() {
            if *l != Some(cell) {
                continue;
            }
            let px = obs.scores.pixel(pi / w, pi % w);
            best = Some(match best {
                None => px.to_vec(),
                Some(b) => b.iter().zip(px).map(|(a, v)| if *v > *a { *v } else { *a }).collect(),
            });
        }
        *slot = best;
    }
    out
}

pub fn cell_fusion_oracle() -> Result<String, String> {
    let mut r = rng(4);
    let sensor = test_sensor();
    let mut cells = 0;
    for i in 0..INSTANCES {
        let spec = random_spec(&mut r);
        let channels = r.random_range(1..=4);
        let map = GaMap::new(spec, channel_names(channels), UpdateMode::Max);
        let obs = random_observation(&mut r, &spec, channels);
        let staged = map
            .stage_observation(&obs.scores, &obs.depth, &obs.pose, &obs.intrinsics, &sensor)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let want = brute_force_cell_max(&obs, &spec, &sensor);
        for (ci, w) in want.iter().enumerate() {
            let g = staged.cell_scores.get(&ci);
            ensure(g == w.as_ref(), || {
                format!("instance {i}: cell {:?}: {g:?} vs {w:?}", spec.cell_at(ci))
            })?;
        }
        ensure(staged.cell_scores.len() == want.iter().flatten().count(), || {
            format!("instance {i}: extra scored cells")
        })?;
        cells += staged.cell_scores.len();
    }
    Ok(format!("{INSTANCES} observations, {cells} scored cells, exact"))
}

pub fn revisit_oracle() -> Result<String, String> {
    let mut r = rng(5);
    for i in 0..INSTANCES {
        let old: Option<f64> = r.random_bool(0.7).then(|| r.random_range(-1.0..1.0));
        let new = r.random_range(-1.0..1.0);
        let hand_max = match old {
            None => new,
            Some(o) if o >= new => o,
            Some(_) => new,
        };
        let hand_avg = old.map_or(new, |o| 0.5 * o + 0.5 * new);
        ensure(update_rule(old, new, UpdateMode::Max) == hand_max, || format!("instance {i}: max"))?;
        ensure(close(update_rule(old, new, UpdateMode::Average), hand_avg), || {
            format!("instance {i}: average")
        })?;
        ensure(update_rule(old, new, UpdateMode::Replacement) == new, || {
            format!("instance {i}: replacement")
        })?;
    }
    // whole-map revisits: the stored score is the elementwise max of everything seen
    let sensor = test_sensor();
    for i in 0..INSTANCES {
        let spec = random_spec(&mut r);
        let channels = r.random_range(1..=3);
        let mut map = GaMap::new(spec, channel_names(channels), UpdateMode::Max);
        let mut want: Vec<Option<Vec<f64>>> = vec![None; spec.len()];
        for _ in 0..r.random_range(2..=4) {
            let obs = random_observation(&mut r, &spec, channels);
            for (ci, s) in brute_force_cell_max(&obs, &spec, &sensor).into_iter().enumerate() {
                if let Some(s) = s {
                    want[ci] = Some(match want[ci].take() {
                        None => s,
                        Some(w) => w.iter().zip(&s).map(|(a, b)| if b > a { *b } else { *a }).collect(),
                    });
                }
            }
            map.fuse_observation(&obs.scores, &obs.depth, &obs.pose, &obs.intrinsics, &sensor)
                .map_err(|e| e.to_string())?;
        }
        for (ci, w) in want.iter().enumerate() {
            let g = map.scores_at(spec.cell_at(ci));
            ensure(g == w.as_deref(), || format!("instance {i}: cell {ci}: {g:?} vs {w:?}"))?;
        }
    }
    Ok(format!("{INSTANCES} scalar updates per mode, {INSTANCES} map sequences, exact"))
}

// ---------------------------------------------------------------------------
// Fast marching

pub const FMM_MAPS: usize = 100;
pub const FMM_SIDE: usize = 30;
pub const PATH_TOL: f64 = 0.08;

pub fn random_free_mask(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<bool> {
    let density = r.random_range(0.0..0.35);
    let mut free: Vec<bool> = (0..rows * cols).map(|_| !r.random_bool(density)).collect();
    // a few wall segments so detours are long
    for _ in 0..r.random_range(0..4) {
        let (r0, c0) = (r.random_range(0..rows), r.random_range(0..cols));
        let len = r.random_range(3..rows / 2);
        let horizontal = r.random_bool(0.5);
        for t in 0..len {
            let (rr, cc) = if horizontal { (r0, c0 + t) } else { (r0 + t, c0) };
            if rr < rows && cc < cols {
                free[rr * cols + cc] = false;
            }
        }
    }
    free
}

/// Dijkstra over 4- or 8-neighbour moves; diagonal moves need both side cells free.
pub fn dijkstra(free: &[bool], rows: usize, cols: usize, res: f64, src: usize, diagonal: bool) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut dist = vec![f64::INFINITY; rows * cols];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((0u64, src)));
    let key = |d: f64| d.to_bits();
    while let Some(Reverse((k, i))) = heap.pop() {
        let d = f64::from_bits(k);
        if d > dist[i] {
            continue;
        }
        let (r0, c0) = ((i / cols) as isize, (i % cols) as isize);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if (dr, dc) == (0, 0) || (!diagonal && dr != 0 && dc != 0) {
                    continue;
                }
                let (rr, cc) = (r0 + dr, c0 + dc);
                if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                    continue;
                }
                let j = rr as usize * cols + cc as usize;
                if !free[j] {
                    continue;
                }
                if dr != 0 && dc != 0 {
                    let side_a = rr as usize * cols + c0 as usize;
                    let side_b = r0 as usize * cols + cc as usize;
                    if !free[side_a] || !free[side_b] {
                        continue;
                    }
                }
                let step = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                let nd = d + step * res;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Reverse((key(nd), j)));
                }
            }
        }
    }
    dist
}

pub fn fmm_sandwich() -> Result<String, String> {
    let mut r = rng(6);
    let (rows, cols, res) = (FMM_SIDE, FMM_SIDE, 0.1);
    let slack = (std::f64::consts::PI / 8.0).cos();
    let (mut cells, mut paths) = (0usize, 0usize);
    let mut worst_path: f64 = 0.0;
    let mut worst_low: f64 = f64::INFINITY;
    for m in 0..FMM_MAPS {
        let free = random_free_mask(&mut r, rows, cols);
        let sources: Vec<usize> = (0..rows * cols).filter(|&i| free[i]).collect();
        let src = sources[r.random_range(0..sources.len())];
        let cost: Vec<f64> = free.iter().map(|&f| if f { 1.0 } else { f64::INFINITY }).collect();
        let source = CellIndex::new(src / cols, src % cols);
        let field = fast_march(rows, cols, res, &cost, source).map_err(|e| e.to_string())?;
        let d4 = dijkstra(&free, rows, cols, res, src, false);
        let d8 = dijkstra(&free, rows, cols, res, src, true);
        for i in 0..rows * cols {
            let t = field.values()[i];
            let cell = CellIndex::new(i / cols, i % cols);
            if !d4[i].is_finite() {
                ensure(!t.is_finite(), || format!("map {m}: {cell:?} reached by FMM only"))?;
                continue;
            }
            ensure(t.is_finite(), || format!("map {m}: {cell:?} unreached by FMM"))?;
            ensure(t <= d4[i] + 1e-9, || format!("map {m}: {cell:?} FMM {t} > D4 {}", d4[i]))?;
            let low = d8[i] * slack;
            ensure(t >= low - 1e-9, || format!("map {m}: {cell:?} FMM {t} < D8 cos(pi/8) {low}"))?;
            if d8[i] > 0.0 {
                worst_low = worst_low.min(t / d8[i]);
            }
            cells += 1;
            if i != src {
                let path = extract_path(&field, cell).map_err(|e| format!("map {m}: {cell:?}: {e}"))?;
                ensure(path.first() == Some(&source) && path.last() == Some(&cell), || {
                    format!("map {m}: path to {cell:?} has wrong endpoints")
                })?;
                for w in path.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let sides = free[a.row * cols + b.col] && free[b.row * cols + a.col];
                    ensure(a.chebyshev(&b) == 1 && free[b.row * cols + b.col] && sides, || {
                        format!("map {m}: path to {cell:?} jumps, enters or clips an obstacle")
                    })?;
                }
                let len = path_length(&path, res);
                let rel = (len - d8[i]).abs() / d8[i];
                worst_path = worst_path.max(rel);
                ensure(rel <= PATH_TOL, || {
                    format!("map {m}: path to {cell:?} length {len:.4} vs D8 {:.4} ({:.1}%)", d8[i], rel * 100.0)
                })?;
                paths += 1;
            }
        }
    }
    Ok(format!(
        "{FMM_MAPS} maps, {cells} cells, {paths} paths; min FMM/D8 {worst_low:.4}, worst path dev {:.2}%",
        worst_path * 100.0
    ))
}

// ---------------------------------------------------------------------------
// Map fusion properties

pub const FUSION_SEQUENCES: usize = 50;

/// Bit-level copy of the map state (NaN-safe equality).
pub fn fingerprint(map: &GaMap) -> (Vec<Occupancy>, Vec<Option<Vec<u64>>>) {
    let spec = map.spec();
    let scores = (0..spec.len())
        .map(|i| map.scores_at(spec.cell_at(i)).map(|s| s.iter().map(|v| v.to_bits()).collect()))
        .collect();
    (map.occupancy_grid().to_vec(), scores)
}

pub fn random_sequence(r: &mut ChaCha8Rng) -> (GridSpec, usize, Vec<ObservationFusion>) {
    let spec = GridSpec::new(0.1, r.random_range(15..=35), r.random_range(15..=35), 0.0, 0.0).expect("grid");
    let channels = r.random_range(1..=4);
    let map = GaMap::new(spec, channel_names(channels), UpdateMode::Max);
    let sensor = test_sensor();
    let staged = (0..r.random_range(3..=8))
        .map(|_| {
            let obs = random_observation(r, &spec, channels);
            map.stage_observation(&obs.scores, &obs.depth, &obs.pose, &obs.intrinsics, &sensor)
                .expect("staged")
        })
        .collect();
    (spec, channels, staged)
}

pub fn fusion_properties() -> Result<String, String> {
    let mut r = rng(7);
    let mut applied = 0;
    for s in 0..FUSION_SEQUENCES {
        let (spec, channels, seq) = random_sequence(&mut r);
        let fresh = || GaMap::new(spec, channel_names(channels), UpdateMode::Max);

        // monotone: no stored score ever decreases, no scored cell is forgotten
        let mut map = fresh();
        for (j, obs) in seq.iter().enumerate() {
            let before: Vec<Option<Vec<f64>>> =
                (0..spec.len()).map(|i| map.scores_at(spec.cell_at(i)).map(<[f64]>::to_vec)).collect();
            map.apply_observation(obs);
            for (i, b) in before.iter().enumerate() {
                let Some(b) = b else { continue };
                let a = map.scores_at(spec.cell_at(i));
                let Some(a) = a else {
                    return Err(format!("sequence {s} step {j}: cell {i} lost its score"));
                };
                ensure(a.iter().zip(b).all(|(x, y)| x >= y), || {
                    format!("sequence {s} step {j}: cell {i} decreased {b:?} -> {a:?}")
                })?;
            }
            applied += 1;
        }
        let reference = fingerprint(&map);

        // idempotent: applying each observation twice changes nothing
        let mut twice = fresh();
        for obs in &seq {
            twice.apply_observation(obs);
            twice.apply_observation(obs);
        }
        ensure(fingerprint(&twice) == reference, || format!("sequence {s}: not idempotent"))?;
        // and re-applying the whole sequence to the final map is a no-op
        for obs in &seq {
            map.apply_observation(obs);
        }
        ensure(fingerprint(&map) == reference, || format!("sequence {s}: replay changed the map"))?;

        // order-insensitive: reversed and shuffled orders give the same map
        let mut orders = vec![(0..seq.len()).rev().collect::<Vec<_>>()];
        for _ in 0..3 {
            let mut o: Vec<usize> = (0..seq.len()).collect();
            for k in (1..o.len()).rev() {
                o.swap(k, r.random_range(0..=k));
            }
            orders.push(o);
        }
        for o in orders {
            let mut m = fresh();
            for &k in &o {
                m.apply_observation(&seq[k]);
            }
            ensure(fingerprint(&m) == reference, || format!("sequence {s}: order {o:?} differs"))?;
        }
    }
    Ok(format!("{FUSION_SEQUENCES} sequences, {applied} observations, exact"))
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub success: bool,
    pub path: f64,
    pub shortest: f64,
}

impl Scored for Fixture {
    fn succeeded(&self) -> bool {
        self.success
    }
    fn path_length(&self) -> f64 {
        self.path
    }
    fn shortest_path(&self) -> f64 {
        self.shortest
    }
}

/// Ten hand-scored episodes. Successful ratios are 1, 0.5, 0.25, 0.75, 1 (walked less
/// than the shortest path, clamped) and 0.25: SR = 6 / 10, SPL = 3.75 / 10.
pub fn metric_fixture() -> Vec<Fixture> {
    let f = |success, path, shortest| Fixture {
        success,
        path,
        shortest,
    };
    vec![
        f(true, 4.0, 4.0),
        f(true, 4.0, 2.0),
        f(true, 4.0, 1.0),
        f(true, 4.0, 3.0),
        f(true, 2.5, 5.0),
        f(false, 1.0, 2.0),
        f(false, 10.0, 3.0),
        f(false, 0.0, 1.0),
        f(true, 6.0, 1.5),
        f(false, 7.0, 7.0),
    ]
}

pub const FIXTURE_SR: f64 = 60.0;
pub const FIXTURE_SPL: f64 = 37.5;

pub fn metric_exactness() -> Result<String, String> {
    let fx = metric_fixture();
    let sr = success_rate(&fx).map_err(|e| e.to_string())?;
    let s = spl(&fx).map_err(|e| e.to_string())?;
    ensure(sr == FIXTURE_SR, || format!("SR {sr} != {FIXTURE_SR}"))?;
    ensure(s == FIXTURE_SPL, || format!("SPL {s} != {FIXTURE_SPL}"))?;
    ensure(s <= sr, || format!("SPL {s} > SR {sr}"))?;
    // prefixes exercise other denominators
    for n in 1..=fx.len() {
        let sub = &fx[..n];
        let (sr, s) = (success_rate(sub).unwrap(), spl(sub).unwrap());
        ensure(s <= sr, || format!("prefix {n}: SPL {s} > SR {sr}"))?;
    }
    ensure(success_rate::<Fixture>(&[]).is_err(), || "empty results accepted".into())?;
    ensure(spl(&[f_zero()]).is_err(), || "zero shortest path accepted".into())?;
    Ok(format!("SR {sr} (want {FIXTURE_SR}), SPL {s} (want {FIXTURE_SPL}), exact"))
}

fn f_zero() -> Fixture {
    Fixture {
        success: true,
        path: 1.0,
        shortest: 0.0,
    }
}
