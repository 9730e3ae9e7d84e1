use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use objnav_core::pipeline::{Experiment, PipelineError};
use objnav_core::scene::{AgentPose, Heading};
use objnav_core::sensor::render;
use objnav_core::RewardMode;

#[derive(Parser)]
#[command(name = "objnav", about = "Reward-shaping experiments for grid-world object-goal navigation")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(short, long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene corpus and its manifest.
    Gen,
    /// Fit Pr(target | parent) from the corpus.
    Closeness,
    /// Train one checkpoint per (scene, run seed).
    Train {
        #[arg(long, value_parser = parse_mode)]
        mode: RewardMode,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Greedy evaluation on the shared episode set.
    Eval {
        #[arg(long, value_parser = parse_mode)]
        mode: RewardMode,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Aggregate results into the comparison tables.
    Report,
    /// gen, closeness, then train and eval for every mode, then report.
    Run {
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Render one pose of a corpus scene.
    Render {
        /// Scene index in the manifest.
        #[arg(long, default_value_t = 0)]
        scene: usize,
        /// Pose as x,y,heading (heading one of N, E, S, W).
        #[arg(long, value_parser = parse_pose)]
        pose: AgentPose,
        /// Dump the full observation (depth and detections) as JSON.
        #[arg(long)]
        dump_json: bool,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_mode(s: &str) -> Result<RewardMode, String> {
    s.parse()
}

fn parse_pose(s: &str) -> Result<AgentPose, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x, y, h] = parts.as_slice() else {
        return Err("expected x,y,heading".into());
    };
    let heading = match *h {
        "N" | "n" => Heading::N,
        "E" | "e" => Heading::E,
        "S" | "s" => Heading::S,
        "W" | "w" => Heading::W,
        other => return Err(format!("bad heading {other:?}")),
    };
    Ok(AgentPose::new(
        x.parse().map_err(|_| format!("bad x {x:?}"))?,
        y.parse().map_err(|_| format!("bad y {y:?}"))?,
        heading,
    ))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let exp = Experiment::load(&cli.config)?;
    match cli.command {
        Command::Gen => {
            let m = exp.cmd_gen()?;
            println!("wrote {} scenes (hash {})", m.count, m.hash);
        }
        Command::Closeness => {
            let t = exp.cmd_closeness()?;
            print!("{}", t.to_csv());
        }
        Command::Train { mode, jobs } => {
            exp.cmd_train(mode, jobs.max(1))?;
            println!("trained mode {mode}");
        }
        Command::Eval { mode, jobs } => {
            let rows = exp.cmd_eval(mode, jobs.max(1))?;
            println!("evaluated mode {mode}: {} episodes", rows.len());
        }
        Command::Report => {
            let t = exp.cmd_report()?;
            print!("{}", t.text);
        }
        Command::Run { jobs } => {
            let t = exp.run_all(jobs.max(1))?;
            print!("{}", t.text);
        }
        Command::Render { scene, pose, dump_json } => {
            let scenes = exp.load_corpus()?;
            let s = scenes
                .get(scene)
                .ok_or_else(|| PipelineError::Data(format!("no scene with index {scene}")))?;
            if !s.is_free(pose.x, pose.y) {
                return Err(PipelineError::Data(format!("pose {pose} is not on a free cell")));
            }
            let obs = render(s, pose, &exp.config.camera);
            if dump_json {
                println!("{}", serde_json::to_string(&obs).expect("observation serializes"));
            } else {
                for d in &obs.detections {
                    println!(
                        "{} {} {:?} area={} mean_depth={:.3}",
                        d.object_id, d.class, d.role, d.area, d.mean_depth
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("objnav: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
