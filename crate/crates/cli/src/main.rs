use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dreamer_core::harness::{
    self, agent_from_checkpoint, evaluate_prediction, run_eval_episodes, write_metrics_csv, EvalRow, MetricsLog,
};
use dreamer_core::rng::Stream;
use dreamer_core::{AgentKind, Checkpoint, Error, ExperimentConfig, LawnEnv};

#[derive(Parser)]
#[command(name = "wireless-dreamer", version, about = "World-model Q-learning for UAV mmWave positioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent over the configured seeds.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        agent: Option<AgentKind>,
        /// Replaces the configured seed list; repeat or list several.
        #[arg(long, num_args = 1..)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a saved checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train all three agents on the same seeds and plot them together.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let config = ExperimentConfig::from_path(path)?;
    config.validate()?;
    Ok(config)
}

fn print_summary(kind: AgentKind, log: &MetricsLog) {
    for seed in log.seeds() {
        let ma = harness::moving_average(&log.returns(seed), harness::CURVE_WINDOW);
        if let Some(last) = ma.last() {
            println!("{} seed {seed}: final {}-episode average return {last:.3}", kind.name(), harness::CURVE_WINDOW);
        }
    }
}

fn train(config: &Path, agent: Option<AgentKind>, seeds: Vec<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut config = load(config)?;
    if let Some(agent) = agent {
        config.agent = agent;
    }
    if !seeds.is_empty() {
        config.seeds = seeds;
    }
    let out = out.unwrap_or_else(|| config.out_dir.clone());
    let result = harness::run_experiment(&config)?;
    harness::write_run_outputs(&result, config.agent, &out)?;
    print_summary(config.agent, &result.log);
    println!("wrote {}", out.display());
    Ok(())
}

fn evaluate(checkpoint: &Path, config: &Path, out: &Path) -> Result<(), Error> {
    let config = load(config)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let seed = config.seeds[0];
    let mut agent = agent_from_checkpoint(&config, &ckpt, seed)?;
    let mut env = LawnEnv::with_stream(config.env.clone(), seed, Stream::EvalEnv)?;
    let horizon = config.env.horizon;
    let episodes = run_eval_episodes(agent.as_mut(), &mut env, config.eval_episodes)?;
    let mut log = MetricsLog::default();
    for (i, ep) in episodes.iter().enumerate() {
        for (t, (r, p)) in ep.rewards.iter().zip(&ep.predicted).enumerate() {
            log.eval.push(EvalRow {
                seed,
                episode: 0,
                step: i * horizon + t,
                real_reward: *r,
                predicted_reward: *p,
            });
        }
        println!("episode {i}: return {:.3}", ep.rewards.iter().sum::<f64>());
    }
    write_metrics_csv(&log, out)?;
    if agent.world_model().is_some() {
        let mut env = LawnEnv::with_stream(config.env.clone(), seed, Stream::EvalEnv)?;
        let report = evaluate_prediction(
            agent.as_mut(),
            &mut env,
            config.eval_episodes,
            config.learner.imagination_horizon,
        )?;
        println!(
            "reward prediction: MAE {:.4}, max {:.4}, mean relative error {:.2}%",
            report.mae,
            report.max_abs_error,
            100.0 * report.mean_relative_error
        );
        let errs: Vec<String> = report.median_horizon_errors.iter().map(|e| format!("{e:.4}")).collect();
        println!("median k-step decode error, k = 1..: {}", errs.join(" "));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn compare(config: &Path, out: &Path) -> Result<(), Error> {
    let config = load(config)?;
    let cmp = harness::run_comparison(&config)?;
    harness::write_comparison(&cmp, out)?;
    for (kind, result) in &cmp.results {
        print_summary(*kind, &result.log);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            config,
            agent,
            seed,
            out,
        } => train(&config, agent, seed, out),
        Command::Evaluate { checkpoint, config, out } => evaluate(&checkpoint, &config, &out),
        Command::Compare { config, out } => compare(&config, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
