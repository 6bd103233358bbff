//! Seeded training runs, greedy evaluation and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{moving_average, write_metrics_csv, EpisodeRow, EvalRow, MetricsLog};
use super::plot::{emit_plot_svg, Curve, PlotLabels};
use super::{AgentKind, ExperimentConfig};
use crate::agent::{Agent, DreamerAgent, Mode};
use crate::baselines::{DqnAgent, RandomAgent};
use crate::checkpoint::Checkpoint;
use crate::env::{Action, LawnEnv, Observation};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::world_model::WorldModel;

/// Moving-average window of the return curves.
pub const CURVE_WINDOW: usize = 20;

pub fn build_agent(config: &ExperimentConfig, kind: AgentKind, seed: u64) -> Box<dyn Agent> {
    let obs_dim = config.env.observation_len();
    let learner = config.learner.clone();
    match kind {
        AgentKind::Dreamer => Box::new(DreamerAgent::new(obs_dim, learner, config.warmup_steps, seed)),
        AgentKind::Dqn => Box::new(DqnAgent::new(obs_dim, learner, config.warmup_steps, seed)),
        AgentKind::Random => Box::new(RandomAgent::new(seed)),
    }
}

/// Reconstructs an agent from a checkpoint; the kind follows from the
/// sections present.
pub fn agent_from_checkpoint(config: &ExperimentConfig, ckpt: &Checkpoint, seed: u64) -> Result<Box<dyn Agent>> {
    let obs_dim = config.env.observation_len();
    let learner = config.learner.clone();
    if ckpt.has_section(crate::world_model::SECTION) {
        let mut agent = DreamerAgent::new(obs_dim, learner, config.warmup_steps, seed);
        agent.load_checkpoint(ckpt)?;
        Ok(Box::new(agent))
    } else if ckpt.has_section(crate::baselines::DQN_SECTION) {
        let mut agent = DqnAgent::new(obs_dim, learner, config.warmup_steps, seed);
        agent.load_checkpoint(ckpt)?;
        Ok(Box::new(agent))
    } else if ckpt.has_section(crate::baselines::RANDOM_SECTION) {
        Ok(Box::new(RandomAgent::new(seed)))
    } else {
        Err(Error::Unsupported("checkpoint holds no known agent section".into()))
    }
}

/// One greedy episode as seen by the evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalEpisode {
    /// `x_0 .. x_T`
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub predicted: Vec<Option<f64>>,
}

/// Runs `episodes` greedy episodes without learning.
pub fn run_eval_episodes(agent: &mut dyn Agent, env: &mut LawnEnv, episodes: usize) -> Result<Vec<EvalEpisode>> {
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let obs = env.reset();
        let mut ep = EvalEpisode {
            observations: vec![obs.clone()],
            actions: Vec::new(),
            rewards: Vec::new(),
            predicted: Vec::new(),
        };
        agent.begin_episode(obs);
        loop {
            let r = agent.step(env, Mode::Eval)?;
            ep.observations.push(env.observe());
            ep.actions.push(r.action);
            ep.rewards.push(r.reward);
            ep.predicted.push(r.predicted_reward);
            if r.done {
                break;
            }
        }
        out.push(ep);
    }
    Ok(out)
}

/// Real against predicted rewards over a set of greedy episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    /// `(r_t, r̂_t)` per step, episodes in order
    pub pairs: Vec<(f64, f64)>,
    pub mae: f64,
    pub max_abs_error: f64,
    /// `mean |r − r̂| / mean |r|`
    pub mean_relative_error: f64,
    /// per episode, mean decode error of `k`-step prior rollouts, `k = 1..`
    pub horizon_errors: Vec<Vec<f64>>,
    /// per `k`, the median over episodes
    pub median_horizon_errors: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn prediction_report(wm: &WorldModel, episodes: &[EvalEpisode], max_k: usize) -> Result<PredictionReport> {
    let mut pairs = Vec::new();
    for ep in episodes {
        for (r, p) in ep.rewards.iter().zip(&ep.predicted) {
            let p = p.ok_or_else(|| Error::Unsupported("episode has no reward predictions".into()))?;
            pairs.push((*r, p));
        }
    }
    let n = pairs.len().max(1) as f64;
    let mae = pairs.iter().map(|(r, p)| (r - p).abs()).sum::<f64>() / n;
    let max_abs_error = pairs.iter().map(|(r, p)| (r - p).abs()).fold(0.0, f64::max);
    let mean_abs_reward = pairs.iter().map(|(r, _)| r.abs()).sum::<f64>() / n;
    let horizon_errors = episodes
        .iter()
        .map(|ep| wm.horizon_errors(&ep.observations, &ep.actions, max_k))
        .collect::<Result<Vec<_>, _>>()?;
    let median_horizon_errors = (0..max_k)
        .map(|k| {
            let mut col: Vec<f64> = horizon_errors.iter().map(|e| e[k]).filter(|v| v.is_finite()).collect();
            median(&mut col)
        })
        .collect();
    Ok(PredictionReport {
        pairs,
        mae,
        max_abs_error,
        mean_relative_error: mae / mean_abs_reward,
        horizon_errors,
        median_horizon_errors,
    })
}

/// Greedy episodes with the agent's reward predictions; dreamer only.
pub fn evaluate_prediction(
    agent: &mut dyn Agent,
    env: &mut LawnEnv,
    episodes: usize,
    max_k: usize,
) -> Result<PredictionReport> {
    if agent.world_model().is_none() {
        return Err(Error::Unsupported(format!(
            "reward prediction needs a world model; agent `{}` has none",
            agent.kind().name()
        )));
    }
    let eps = run_eval_episodes(agent, env, episodes)?;
    let wm = agent.world_model().expect("checked above");
    prediction_report(wm, &eps, max_k)
}

/// Everything one seed produced.
pub struct SeedRun {
    pub seed: u64,
    pub log: MetricsLog,
    pub checkpoint: Checkpoint,
    /// episodes of the last evaluation, if any ran
    pub final_eval: Vec<EvalEpisode>,
    pub prediction: Option<PredictionReport>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn eval_rows(seed: u64, episode: usize, horizon: usize, eps: &[EvalEpisode]) -> Vec<EvalRow> {
    eps.iter()
        .enumerate()
        .flat_map(|(i, ep)| {
            ep.rewards.iter().zip(&ep.predicted).enumerate().map(move |(t, (r, p))| EvalRow {
                seed,
                episode,
                step: i * horizon + t,
                real_reward: *r,
                predicted_reward: *p,
            })
        })
        .collect()
}

/// Trains one agent of `config.agent` for one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let in_run = |episode: usize| move |e: Error| Error::InRun {
        seed,
        episode,
        source: Box::new(e),
    };
    let mut env = LawnEnv::new(config.env.clone(), seed).map_err(|e| in_run(0)(e.into()))?;
    let mut eval_env = LawnEnv::with_stream(config.env.clone(), seed, Stream::EvalEnv).map_err(|e| in_run(0)(e.into()))?;
    let mut agent = build_agent(config, config.agent, seed);
    let horizon = config.env.horizon;
    let mut log = MetricsLog::default();
    let mut final_eval = Vec::new();

    for episode in 0..config.episodes {
        let started = config.wall_clock.then(Instant::now);
        let obs = env.reset();
        agent.begin_episode(obs);
        let mut ret = 0.0;
        let mut epsilon = None;
        let (mut rec, mut rew, mut cons, mut q) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        loop {
            let r = agent.step(&mut env, Mode::Train).map_err(in_run(episode))?;
            ret += r.reward;
            epsilon.get_or_insert(r.epsilon);
            if let Some(l) = r.wm_losses {
                rec.push(l.reconstruction);
                rew.push(l.reward);
                cons.push(l.consistency);
            }
            q.extend(r.q_loss);
            if r.done {
                break;
            }
        }
        log.train.push(EpisodeRow {
            seed,
            episode,
            ret,
            epsilon: epsilon.unwrap_or(0.0),
            wm_rec_loss: mean(&rec),
            wm_rew_loss: mean(&rew),
            wm_cons_loss: mean(&cons),
            q_loss: mean(&q),
            wall_ms: started.map(|s| s.elapsed().as_secs_f64() * 1e3),
        });

        let done = episode + 1;
        if done % config.eval_every == 0 {
            let eps = run_eval_episodes(agent.as_mut(), &mut eval_env, config.eval_episodes).map_err(in_run(episode))?;
            log.eval.extend(eval_rows(seed, done, horizon, &eps));
            final_eval = eps;
        }
    }

    let prediction = match agent.world_model() {
        Some(wm) if !final_eval.is_empty() => Some(
            prediction_report(wm, &final_eval, config.learner.imagination_horizon)
                .map_err(in_run(config.episodes))?,
        ),
        _ => None,
    };
    Ok(SeedRun {
        seed,
        log,
        checkpoint: agent.checkpoint(),
        final_eval,
        prediction,
    })
}

pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub log: MetricsLog,
}

/// Runs every seed of `config`, in parallel when threads allow, and merges
/// the logs by `(seed, episode)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        builder = builder.num_threads(config.threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    let runs: Vec<SeedRun> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let log = MetricsLog::merge(runs.iter().map(|r| r.log.clone()));
    Ok(ExperimentResult { runs, log })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Mean over seeds of each seed's moving-average return curve.
pub fn mean_curve(log: &MetricsLog) -> Vec<f64> {
    let curves: Vec<Vec<f64>> = log
        .seeds()
        .iter()
        .map(|s| moving_average(&log.returns(*s), CURVE_WINDOW))
        .collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}

/// Writes the CSV files, one checkpoint per seed and a return-curve plot.
pub fn write_run_outputs(result: &ExperimentResult, kind: AgentKind, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let (train, eval) = write_metrics_csv(&result.log, dir)?;
    let mut files = vec![train, eval];
    for run in &result.runs {
        let path = dir.join(format!("seed_{}.ckpt", run.seed));
        run.checkpoint.save(&path)?;
        files.push(path);
    }
    let curve = mean_curve(&result.log);
    if !curve.is_empty() {
        let path = dir.join("returns.svg");
        emit_plot_svg(
            &[Curve::indexed(kind.name(), curve)],
            &PlotLabels {
                title: format!("{} training return", kind.name()),
                x: "episode".into(),
                y: format!("return ({CURVE_WINDOW}-episode moving average)"),
            },
            &path,
        )?;
        files.push(path);
    }
    Ok(files)
}

/// Results of all three agents on the same seeds.
pub struct Comparison {
    pub results: Vec<(AgentKind, ExperimentResult)>,
}

impl Comparison {
    pub fn get(&self, kind: AgentKind) -> Option<&ExperimentResult> {
        self.results.iter().find(|(k, _)| *k == kind).map(|(_, r)| r)
    }
}

pub fn run_comparison(config: &ExperimentConfig) -> Result<Comparison> {
    let mut results = Vec::new();
    for kind in AgentKind::ALL {
        let cfg = ExperimentConfig {
            agent: kind,
            ..config.clone()
        };
        results.push((kind, run_experiment(&cfg)?));
    }
    Ok(Comparison { results })
}

/// Per-agent subdirectories plus `returns.svg` (all agents) and, when
/// dreamer ran an evaluation, `prediction.svg` (real against predicted
/// reward over its first seed's final evaluation).
pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut files = Vec::new();
    let mut curves = Vec::new();
    for (kind, result) in &cmp.results {
        files.extend(write_run_outputs(result, *kind, &dir.join(kind.name()))?);
        let curve = mean_curve(&result.log);
        if !curve.is_empty() {
            curves.push(Curve::indexed(kind.name(), curve));
        }
    }
    if !curves.is_empty() {
        let path = dir.join("returns.svg");
        emit_plot_svg(
            &curves,
            &PlotLabels {
                title: "Average episodic return".into(),
                x: "episode".into(),
                y: format!("return ({CURVE_WINDOW}-episode moving average)"),
            },
            &path,
        )?;
        files.push(path);
    }
    let pairs = cmp
        .get(AgentKind::Dreamer)
        .and_then(|r| r.runs.first())
        .and_then(|run| run.prediction.as_ref())
        .map(|p| &p.pairs);
    if let Some(pairs) = pairs.filter(|p| !p.is_empty()) {
        let path = dir.join("prediction.svg");
        emit_plot_svg(
            &[
                Curve::indexed("real", pairs.iter().map(|p| p.0).collect()),
                Curve::indexed("predicted", pairs.iter().map(|p| p.1).collect()),
            ],
            &PlotLabels {
                title: "Real and predicted reward, evaluation stage".into(),
                x: "evaluation step".into(),
                y: "reward".into(),
            },
            &path,
        )?;
        files.push(path);
    }
    Ok(files)
}
