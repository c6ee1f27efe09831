//! Checked-in scenes must keep matching the generator, so seeds stay comparable across versions.

use std::path::Path;

use gamap::simworld::{generate_scene, Difficulty, Scene};

fn fixture(name: &str) -> Scene {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenes").join(name);
    Scene::load(&path).unwrap()
}

#[test]
fn generator_reproduces_fixture_scenes() {
    for (name, difficulty) in [
        ("easy_0.json", Difficulty::Easy),
        ("maze_0.json", Difficulty::Maze),
        ("multiscale_0.json", Difficulty::Multiscale),
    ] {
        let saved = fixture(name);
        let fresh = generate_scene(0, difficulty).unwrap();
        assert!(saved == fresh, "{name} differs from generate_scene(0, {difficulty:?})");
    }
}

#[test]
fn fixture_scene_runs_from_file() {
    let config = gamap::harness::EpisodeConfig {
        max_steps: 30,
        ..Default::default()
    };
    let result = gamap::harness::run_episode_in(&config, &fixture("maze_0.json")).unwrap();
    assert!(result.steps <= 30);
    assert!(result.shortest_path > 0.0);
}
