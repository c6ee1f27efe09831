mod common;

use common::*;
use gamap::gamap::{GaMap, Occupancy, UpdateMode};
use gamap::geometry::{back_project_depth, to_world, CameraIntrinsics, CellIndex, GridSpec, Pose, SensorConfig};
use gamap::pyramid::ScoreImage;
use gamap::simworld::{default_intrinsics, render, ObjectInstance, Scene};
use gamap::simworld::Difficulty;
use proptest::prelude::*;

proptest! {
    #[test]
    fn world_point_matches_matrix_form(
        fx in 5.0f64..80.0, fy in 5.0f64..80.0,
        row in 0usize..32, col in 0usize..32,
        d in 0.05f64..9.0,
        x in -5.0f64..5.0, y in -5.0f64..5.0, theta in -4.0f64..4.0,
        h in 0.2f64..2.0,
    ) {
        let k = CameraIntrinsics::new(fx, fy, 16.0, 16.0, 32, 32).unwrap();
        let pose = Pose::new(x, y, theta);
        let got = to_world(&back_project_depth(&k, row, col, d).unwrap(), &pose, h);
        let want = hand_world_point(&k, row, col, d, &pose, h);
        prop_assert!(close(got.x, want[0]) && close(got.y, want[1]) && close(got.z, want[2]));
        // the optical-axis depth is the projection onto the heading
        let along = (got.x - x) * theta.cos() + (got.y - y) * theta.sin();
        prop_assert!((along - d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn cell_lookup_matches_bounds_scan(
        res in 0.02f64..0.5, rows in 1usize..40, cols in 1usize..40,
        ox in -5.0f64..5.0, oy in -5.0f64..5.0,
        x in -10.0f64..15.0, y in -10.0f64..15.0,
    ) {
        let spec = GridSpec::new(res, rows, cols, ox, oy).unwrap();
        prop_assert_eq!(spec.cell_of_xy(x, y), cell_by_scan(&spec, x, y));
    }

    #[test]
    fn cell_centres_map_back(res in 0.02f64..0.5, rows in 1usize..40, cols in 1usize..40, r in 0usize..40, c in 0usize..40) {
        let spec = GridSpec::new(res, rows, cols, -1.0, 2.0).unwrap();
        let cell = CellIndex::new(r % rows, c % cols);
        let (x, y) = spec.cell_center(cell);
        prop_assert_eq!(spec.cell_of_xy(x, y), Some(cell));
        prop_assert_eq!(spec.cell_at(spec.index(cell)), cell);
    }
}

/// A 7 x 60 corridor at 10 cm with a partition at column 10 across the middle rows.
fn corridor(wall_height: f64) -> Scene {
    let spec = GridSpec::new(0.1, 7, 60, 0.0, 0.0).unwrap();
    let mut walls = vec![false; spec.len()];
    for r in 0..7 {
        for c in 0..60 {
            walls[r * 60 + c] = r == 0 || r == 6 || c == 0 || c == 59 || (c == 10 && (1..=5).contains(&r));
        }
    }
    let chair = ObjectInstance {
        category: "chair".into(),
        cells: vec![CellIndex::new(1, 57)],
        part_cells: vec![],
        height: 0.9,
        part_low: 0.45,
    };
    Scene::new(spec, &walls, vec![chair], Pose::new(0.55, 0.35, 0.0), "chair", 0, Difficulty::Easy)
        .unwrap()
        .with_wall_height(wall_height)
        .unwrap()
}

fn observe(scene: &Scene) -> GaMap {
    let k = default_intrinsics();
    let sensor = SensorConfig::default();
    let obs = render(scene, &scene.spawn(), &k, &sensor).unwrap();
    let scores = ScoreImage::new(k.height, k.width, 1, 0.0);
    let mut map = GaMap::new(*scene.spec(), vec!["c".into()], UpdateMode::Max);
    map.fuse_observation(&scores, &obs.depth, &scene.spawn(), &k, &sensor).unwrap();
    map
}

#[test]
fn nothing_is_carved_in_the_shadow_of_a_low_wall() {
    let map = observe(&corridor(0.6));
    let row = 3;
    assert_eq!(map.occupancy(CellIndex::new(row, 10)), Occupancy::Obstacle);
    // the top face of the 0.6 m partition spans 0.45..0.55 m ahead, so the floor is
    // hidden up to 0.55 * 0.88 / 0.28 = 1.73 m (x = 2.28)
    for c in 11..=22 {
        assert_ne!(map.occupancy(CellIndex::new(row, c)), Occupancy::Free, "shadow cell {c}");
    }
    // past the shadow, floor within the 3 m exploration range is seen over the partition
    for c in 24..=34 {
        assert_eq!(map.occupancy(CellIndex::new(row, c)), Occupancy::Free, "visible cell {c}");
    }
    // beyond the exploration range nothing is marked free
    for c in 37..59 {
        assert_ne!(map.occupancy(CellIndex::new(row, c)), Occupancy::Free, "far cell {c}");
    }
}

#[test]
fn nothing_is_carved_behind_a_full_wall() {
    let map = observe(&corridor(2.5));
    for r in 0..7 {
        for c in 11..60 {
            assert_eq!(map.occupancy(CellIndex::new(r, c)), Occupancy::Unknown, "cell ({r}, {c})");
        }
    }
    for c in 6..10 {
        assert_eq!(map.occupancy(CellIndex::new(3, c)), Occupancy::Free, "cell {c}");
    }
}

#[test]
fn oblique_view_of_a_low_wall_carves_nothing_behind_it() {
    // the wall along row 36 is about 2.5 m away; its shadow ends far past the explore range
    let scene = gamap::simworld::generate_scene(34, Difficulty::Maze).unwrap();
    let sensor = SensorConfig::default();
    let k = default_intrinsics();
    let pose = Pose::new(7.925, 2.1335, std::f64::consts::PI);
    let obs = render(&scene, &pose, &k, &sensor).unwrap();
    let mut map = GaMap::new(*scene.spec(), vec!["a".into()], UpdateMode::Max);
    let scores = ScoreImage::new(obs.depth.height(), obs.depth.width(), 1, 0.5);
    map.fuse_observation(&scores, &obs.depth, &pose, &k, &sensor).unwrap();
    for r in 37..scene.spec().rows {
        for c in 0..scene.spec().cols {
            assert_ne!(map.occupancy(CellIndex::new(r, c)), Occupancy::Free, "cell ({r}, {c})");
        }
    }
    assert_eq!(map.occupancy(CellIndex::new(36, 58)), Occupancy::Obstacle);
}
