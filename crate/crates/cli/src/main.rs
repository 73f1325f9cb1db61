//! Command-line surface: train, eval, plot, snapshot, verify.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use frontier_core::agent::RewardMode;
use frontier_core::checkpoint;
use frontier_core::metrics::{render_plot, render_snapshot, PlotSpec};
use frontier_core::orchestrator::{evaluate, train, TrainConfig};
use frontier_core::verify;

#[derive(Parser)]
#[command(
    name = "frontier",
    about = "Curriculum RL engine for 2D point mazes: classifier-ensemble disagreement, bipartite goal matching, goal-conditioned SAC",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training session and write metrics, checkpoints and a snapshot.
    Train(TrainArgs),
    /// Load a checkpoint bundle and report evaluation success rates.
    Eval(EvalArgs),
    /// Render a metrics column from one or more seed CSVs as an SVG plot.
    Plot(PlotArgs),
    /// Render maze walls, buffer scatter, proposed goals and desired
    /// outcomes from a checkpoint bundle as an SVG.
    Snapshot(SnapshotArgs),
    /// Run the oracle suites (matching brute force, gradient checks, MI
    /// closed forms, schema pin); nonzero exit on any failure.
    Verify,
}

#[derive(Args)]
struct TrainArgs {
    /// Config profile: `paper-default` or `desk-scale`.
    #[arg(long, default_value = "desk-scale")]
    profile: String,
    /// Maze preset: complex-maze | medium-maze | spiral-maze | test-umaze.
    #[arg(long, default_value = "test-umaze")]
    env: String,
    /// Full TOML config file; overrides the profile when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Output directory for metrics.csv, checkpoints and snapshot.svg.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from a checkpoint bundle instead of initializing fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Ablation: propose goals uniformly from the desired set instead of the
    /// bipartite curriculum.
    #[arg(long)]
    no_curriculum: bool,
    /// Ablation: train on the sparse success reward instead of the
    /// classifier-derived intrinsic reward.
    #[arg(long)]
    sparse_reward: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint bundle produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Deterministic episodes per desired outcome.
    #[arg(long, default_value_t = 5)]
    episodes: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSV path; repeat for multiple seeds.
    #[arg(long = "csv", required = true)]
    csvs: Vec<PathBuf>,
    /// Column to plot (e.g. success, curr_dist, mean_reward).
    #[arg(long)]
    column: String,
    /// Trailing moving-average window.
    #[arg(long, default_value_t = 1)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Snapshot(args) => cmd_snapshot(args),
        Command::Verify => Ok(cmd_verify()),
    }
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<ExitCode> {
    if let Some(resume_path) = &args.resume {
        let mut state = checkpoint::load_bundle(resume_path)
            .with_context(|| format!("loading {}", resume_path.display()))?;
        if let Some(iters) = args.iterations {
            state.config.iterations = iters;
        }
        if let Some(out) = args.out {
            state.config.out_dir = Some(out);
        }
        println!(
            "resuming {} on {} at iteration {}/{}",
            state.config.profile, state.config.env, state.iteration, state.config.iterations
        );
        let rows = frontier_core::orchestrator::run_to_completion(&mut state)?;
        report_final(&rows);
        return Ok(ExitCode::SUCCESS);
    }

    let mut config = match &args.config {
        Some(path) => TrainConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => TrainConfig::from_profile(&args.profile, &args.env)?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(iters) = args.iterations {
        config.iterations = iters;
    }
    if let Some(out) = args.out {
        config.out_dir = Some(out);
    }
    if args.no_curriculum {
        config.curriculum.enabled = false;
    }
    if args.sparse_reward {
        config.sac.reward = RewardMode::SparseSuccess;
    }
    config.apply_env_overrides()?;
    config.validate()?;

    println!(
        "training {} on {} for {} iterations (seed {})",
        config.profile, config.env, config.iterations, config.seed
    );
    let artifacts = train(config)?;
    report_final(&artifacts.rows);
    if let Some(dir) = &artifacts.state.config.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn report_final(rows: &[frontier_core::metrics::MetricsRow]) {
    if let Some(last) = rows.last() {
        println!(
            "finished at iter {} ({} env steps); last curriculum distance {}, last success {}",
            last.iter,
            last.steps,
            last.curr_dist.map_or("-".into(), |v| format!("{v:.3}")),
            rows.iter()
                .rev()
                .find_map(|r| r.success)
                .map_or("-".into(), |v| format!("{v:.3}"))
        );
    }
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let state = checkpoint::load_bundle(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let report = evaluate(&state.agent, &state.spec, args.episodes);
    println!(
        "checkpoint at iteration {} ({} env steps), {} episodes per goal",
        state.iteration, state.env_steps, args.episodes
    );
    for (goal, rate) in state.spec.desired_outcomes.iter().zip(report.per_goal.iter()) {
        println!("  goal ({:+.2}, {:+.2}): success {rate:.2}", goal[0], goal[1]);
    }
    println!("overall success rate: {:.3}", report.success_rate);
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(args: PlotArgs) -> anyhow::Result<ExitCode> {
    let spec = PlotSpec {
        csv_paths: args.csvs,
        column: args.column,
        smoothing_window: args.window.max(1),
        out_svg: args.out.clone(),
    };
    render_plot(&spec)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_snapshot(args: SnapshotArgs) -> anyhow::Result<ExitCode> {
    let state = checkpoint::load_bundle(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let buffer_points = state.buffer.achieved_points();
    if buffer_points.is_empty() && state.last_proposed.is_empty() {
        bail!("checkpoint holds no buffer data to draw");
    }
    render_snapshot(
        &state.spec,
        &buffer_points,
        &state.last_proposed,
        &state.spec.desired_outcomes,
        &args.out,
    )?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify() -> ExitCode {
    let reports = verify::run_all();
    let mut all_ok = true;
    for r in &reports {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_ok &= r.passed;
    }
    if all_ok {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
