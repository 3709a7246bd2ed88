use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use smdpnav_core::egae::{bias_experiment, exact_values, EstimatorConfig, EstimatorKind, TabularPolicy, TabularSmdp};
use smdpnav_core::eval::{
    ablation_sweep, all_families, evaluate, render_trajectory, write_scenario_files, Rect, ScenarioSpec, SweepSettings,
};
use smdpnav_core::nn::Checkpoint;
use smdpnav_core::sim::{load_world_file, read_trajectory_csv, write_trajectory_csv, ExecutionMode};
use smdpnav_core::trainer::{train, TrainConfig, Variant};
use smdpnav_core::DiscountSpec;

#[derive(Parser)]
#[command(name = "smdpnav", version, about = "Train and evaluate adaptive-duration navigation policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mode1,
    Mode2,
}

impl From<Mode> for ExecutionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Mode1 => ExecutionMode::Mode1,
            Mode::Mode2 => ExecutionMode::Mode2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes metrics.csv and checkpoints into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted key assignment, e.g. ppo.policy_lr=1e-4. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's mean policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Family name, spec document path, or "all".
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mode1")]
        mode: Mode,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        /// Also write trajectory CSVs and images for the first N episodes
        /// of each scenario.
        #[arg(long, default_value_t = 0)]
        render: usize,
    },
    /// Train several ablation variants and compare them.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated: afst, -elu, -2d-to-3d, -egae, -smdp.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
        /// Family name, spec document path, or "all".
        #[arg(long, default_value = "all")]
        scenario: String,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Draw a recorded trajectory CSV over its world.
    Render {
        #[arg(long)]
        episode: PathBuf,
        /// World sidecar file.
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// x0,y0,x1,y1 in meters; defaults to a box around the first pose.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        start_box: Option<Vec<f64>>,
        /// x0,y0,x1,y1 in meters; defaults to a box around the last pose.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        goal_box: Option<Vec<f64>>,
    },
    /// Write scenario spec documents and fixed-layout world images.
    Scenarios {
        #[arg(long, default_value = "scenarios")]
        out: PathBuf,
    },
    /// Write a complete training config with default values.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
        /// Reduced world and network that train on one CPU core.
        #[arg(long)]
        desk: bool,
    },
    /// Compare sampled advantage estimates with exact ones on a small
    /// tabular problem.
    Bias {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 100_000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the exact state values as the baseline instead of zeros.
        #[arg(long)]
        exact_baseline: bool,
        #[arg(long, default_value = "bias_experiment.csv")]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>, overrides: &[String]) -> Result<TrainConfig> {
    let mut config = TrainConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    for o in overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn scenario_list(arg: &str) -> Result<Vec<(String, ScenarioSpec)>> {
    if arg == "all" {
        return Ok(all_families());
    }
    let spec = ScenarioSpec::resolve(arg).with_context(|| format!("resolving scenario {arg}"))?;
    let name = Path::new(arg)
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    Ok(vec![(name, spec)])
}

fn bounds(values: Option<Vec<f64>>, around: [f64; 2]) -> Rect {
    match values {
        Some(v) => Rect::new([v[0], v[1]], [v[2], v[3]]),
        None => Rect::new([around[0] - 0.3, around[1] - 0.3], [around[0] + 0.3, around[1] + 0.3]),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            overrides,
            out,
            resume,
        } => {
            let config = load_config(&config, seed, &overrides)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.toml"), config.to_toml()?)?;
            let outcome = match resume {
                Some(path) => {
                    let state = Checkpoint::load(&path)?;
                    let trainer = smdpnav_core::trainer::Trainer::resume(config, state)?;
                    smdpnav_core::trainer::train_from(trainer, Some(&out))?
                }
                None => train(&config, Some(&out))?,
            };
            if let Some(last) = outcome.metrics.last() {
                println!(
                    "epoch {} mean return {:.2} success rate {:.3}",
                    last.epoch, last.mean_return, last.success_rate
                );
            }
            println!("final checkpoint: {}", out.join("final.ckpt").display());
        }
        Command::Eval {
            checkpoint,
            scenario,
            episodes,
            seed,
            mode,
            out,
            render,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let specs = scenario_list(&scenario)?;
            let report = evaluate(&ckpt, &specs, episodes, seed, mode.into())?;
            std::fs::create_dir_all(&out)?;
            report.write_csv(File::create(out.join("report.csv"))?)?;
            report.write_episodes_csv(File::create(out.join("episodes.csv"))?)?;
            let table = report.summary_table();
            std::fs::write(out.join("summary.txt"), &table)?;
            print!("{table}");
            for (s, (name, spec)) in report.scenarios.iter().zip(&specs) {
                for e in s.episodes.iter().take(render) {
                    let scenario = smdpnav_core::eval::episode_scenario(spec, seed, e.index)?;
                    let stem = out.join(format!("{name}_{:04}", e.index));
                    write_trajectory_csv(&e.rows, File::create(stem.with_extension("csv"))?)?;
                    render_trajectory(
                        &scenario.world,
                        &e.rows,
                        &scenario.start_region,
                        &scenario.goal_region,
                        &stem.with_extension("png"),
                    )?;
                }
            }
        }
        Command::Sweep {
            config,
            variants,
            seeds,
            episodes,
            eval_seed,
            scenario,
            overrides,
            out,
        } => {
            let base = load_config(&config, None, &overrides)?;
            let variants = variants
                .iter()
                .map(|v| Variant::parse(v).with_context(|| format!("unknown variant {v}")))
                .collect::<Result<Vec<_>>>()?;
            let settings = SweepSettings {
                seeds,
                eval_specs: scenario_list(&scenario)?,
                eval_episodes: episodes,
                eval_seed,
                mode: ExecutionMode::Mode1,
            };
            let report = ablation_sweep(&base, &variants, &settings)?;
            std::fs::create_dir_all(&out)?;
            report.write_csv(File::create(out.join("sweep.csv"))?)?;
            let table = report.table();
            std::fs::write(out.join("summary.txt"), &table)?;
            print!("{table}");
        }
        Command::Render {
            episode,
            world,
            out,
            start_box,
            goal_box,
        } => {
            let rows = read_trajectory_csv(File::open(&episode)?)?;
            let map = load_world_file(&world)?;
            let first = rows.first().map_or([0.0, 0.0], |r| [r.x, r.y]);
            let last = rows.last().map_or(first, |r| {
                let p = smdpnav_core::sim::propagate_arc(r.pose(), &r.action(), r.tau);
                [p.x, p.y]
            });
            let out = out.unwrap_or_else(|| episode.with_extension("png"));
            let markers = render_trajectory(&map, &rows, &bounds(start_box, first), &bounds(goal_box, last), &out)?;
            println!("{} ({markers} decisions)", out.display());
        }
        Command::Scenarios { out } => {
            for path in write_scenario_files(&out)? {
                println!("{}", path.display());
            }
        }
        Command::InitConfig { out, desk } => {
            let config = if desk { TrainConfig::desk() } else { TrainConfig::default() };
            std::fs::write(&out, config.to_toml()?)?;
        }
        Command::Bias {
            lambda,
            gamma,
            episodes,
            seed,
            exact_baseline,
            out,
        } => {
            let smdp = TabularSmdp::corridor_example(gamma)?;
            let policy = TabularPolicy::uniform(smdp.n_states(), smdp.n_actions());
            let values = if exact_baseline {
                exact_values(&smdp, &policy)?.v
            } else {
                vec![0.0; smdp.n_states()]
            };
            let config = EstimatorConfig {
                lambda,
                discount: DiscountSpec::smdp(gamma),
                kind: EstimatorKind::Egae,
            };
            let report = bias_experiment(&smdp, &policy, &values, &config, episodes, seed)?;
            report.write_csv(File::create(&out)?)?;
            for r in &report.rows {
                println!(
                    "s={} a={} exact={:.4} estimate={:.4} se={:.4}",
                    r.state, r.action, r.exact_a, r.mean_estimate, r.std_error
                );
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Command::Sweep { seeds, .. } = &cli.command {
        if seeds.is_empty() {
            bail!("--seeds needs at least one value");
        }
    }
    run(cli)
}
