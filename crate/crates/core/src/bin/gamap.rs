use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gamap::gamap::{GaMap, MapSnapshot, UpdateMode};
use gamap::harness::{
    heatmap_image, run_episode_with_map, run_suite, write_trajectory, EpisodeConfig, Policy,
    ProviderBinding, SuiteMatrix,
};
use gamap::simworld::{generate_scene, Difficulty};

#[derive(Parser)]
#[command(name = "gamap", version, about = "Attribute-map object-goal navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode.
    Run(RunArgs),
    /// Run a seeds x difficulties x variants matrix.
    Suite {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved map channel ("mean" or an attribute name) as PNG.
    RenderHeatmap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "mean")]
        channel: String,
        #[arg(long)]
        png: PathBuf,
    },
    /// Generate a scene file.
    GenScene {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "easy")]
        difficulty: Difficulty,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML episode config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene file (instead of --seed).
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    difficulty: Option<Difficulty>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    ng: Option<usize>,
    #[arg(long)]
    na: Option<usize>,
    #[arg(long)]
    update_mode: Option<UpdateMode>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    success_dist: Option<f64>,
    /// "synthetic" or the service base URL.
    #[arg(long)]
    provider: Option<ProviderBinding>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    out: Option<PathBuf>,
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Suite { matrix, out } => {
            let matrix = SuiteMatrix::from_toml(&std::fs::read_to_string(&matrix)?)?;
            let report = run_suite(&matrix)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), report.to_json() + "\n")?;
            std::fs::write(out.join("summary.txt"), report.summary())?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::RenderHeatmap { map, channel, png } => {
            let snap: MapSnapshot = serde_json::from_str(&std::fs::read_to_string(&map)?)?;
            let map = GaMap::from_snapshot(&snap)?;
            let ch = map.channel_by_name(&channel)?;
            heatmap_image(&map, ch)?.save(&png)?;
            Ok(())
        }
        Command::GenScene {
            seed,
            difficulty,
            out,
        } => {
            let scene = generate_scene(seed, difficulty)?;
            scene.save(&out)?;
            Ok(())
        }
    }
}

fn run(a: RunArgs) -> Res<()> {
    let mut cfg = match &a.config {
        Some(p) => EpisodeConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => EpisodeConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag.clone() { cfg.$field = v; })*
        };
    }
    set!(seed => seed, difficulty => difficulty, levels => levels, ng => n_geometric,
        na => n_affordance, update_mode => update_mode, radius => candidate_radius,
        max_steps => max_steps, success_dist => success_distance, provider => provider,
        policy => policy);
    if a.scene.is_some() {
        cfg.scene = a.scene.clone();
    }
    if a.target.is_some() {
        cfg.target = a.target.clone();
    }
    cfg.validate()?;
    let scene = cfg.scene()?;
    let (result, map) = run_episode_with_map(&cfg, &scene)?;
    println!(
        "{} {:?} in {} steps: L = {:.2} m, L* = {:.2} m, final distance {:.2} m, error class {:?}",
        result.target,
        result.outcome,
        result.steps,
        result.path_length,
        result.shortest_path,
        result.final_distance,
        result.error_class
    );
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(
            out.join("result.json"),
            serde_json::to_string_pretty(&result)? + "\n",
        )?;
        write_trajectory(&out.join("trajectory.jsonl"), &result.trace)?;
        std::fs::write(out.join("config.toml"), toml::to_string(&cfg)?)?;
        scene.save(&out.join("scene.json"))?;
        std::fs::write(
            out.join("map.json"),
            serde_json::to_string(&map.snapshot(result.steps))? + "\n",
        )?;
        let mean = map.channel_by_name("mean")?;
        map.write_pgm(&out.join("heatmap_mean.pgm"), mean, result.steps)?;
        heatmap_image(&map, mean)?.save(out.join("heatmap_mean.png"))?;
    }
    Ok(())
}
