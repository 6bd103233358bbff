//! Wireless Dreamer: Q-learning on latent states, trained purely on
//! world-model imagination, acting through a one-step model lookahead.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::checkpoint::{Checkpoint, Section};
use crate::env::{Action, LawnEnv, Observation};
use crate::error::{Error, Result};
use crate::harness::{AgentKind, LearnerConfig};
use crate::nn::{Activation, Adam, AdamConfig, Mlp, NnError, ParamStore, Tape};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{stream, Rng64, Stream};
use crate::world_model::{LatentState, WmLosses, WorldModel, WorldModelConfig};

pub use crate::world_model::ImaginedTransition;

pub const Q_SECTION: &str = "Q";

/// What an agent chose for one real step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Model-predicted reward for `action`, when the agent has a model.
    pub predicted_reward: Option<f64>,
    pub explored: bool,
}

/// Per-step record of a training or evaluation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub action: Action,
    pub reward: f64,
    pub predicted_reward: Option<f64>,
    pub done: bool,
    pub epsilon: f64,
    pub wm_losses: Option<WmLosses>,
    pub q_loss: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// ε-greedy acting, transitions stored, learning after warmup.
    Train,
    /// Greedy acting with no learning and no bookkeeping.
    Eval,
}

/// Common driver interface for Wireless Dreamer and the baselines.
pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    /// Starts an episode whose first observation is `obs`.
    fn begin_episode(&mut self, obs: Observation);

    /// One environment step: act, execute, and (in training) store and learn.
    fn step(&mut self, env: &mut LawnEnv, mode: Mode) -> Result<StepReport>;

    /// Training env steps taken so far.
    fn env_steps(&self) -> usize;

    fn checkpoint(&self) -> Checkpoint;

    fn world_model(&self) -> Option<&WorldModel> {
        None
    }
}

/// ε-greedy helper: draws the exploration coin and, if it lands, a uniform
/// action.
pub fn explore<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> Option<Action> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Some(random_action(rng))
    } else {
        None
    }
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action::from_index(rng.random_range(0..Action::COUNT))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Q network over latents with a hard-synced target copy.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub net: Mlp,
    pub online: ParamStore,
    pub target: ParamStore,
    pub adam: Adam,
    pub gamma: f64,
    pub sync_every: usize,
    pub grad_steps: usize,
}

impl QLearner {
    pub fn new<R: Rng + ?Sized>(
        latent_dim: usize,
        hidden_dim: usize,
        lr: f64,
        gamma: f64,
        sync_every: usize,
        rng: &mut R,
    ) -> Self {
        let mut online = ParamStore::new();
        let net = Mlp::new(
            &mut online,
            "q",
            (latent_dim, hidden_dim, Action::COUNT),
            Activation::Identity,
            rng,
        );
        let target = online.clone();
        let adam = Adam::new(&online, AdamConfig::with_lr(lr));
        Self {
            net,
            online,
            target,
            adam,
            gamma,
            sync_every,
            grad_steps: 0,
        }
    }

    pub fn values(&self, store: &ParamStore, z: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        let mut tape = Tape::new(store);
        let zn = tape.input(z.clone());
        let out = self.net.record(&mut tape, zn)?;
        Ok(tape.value(out).clone())
    }

    pub fn online_values(&self, z: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.values(&self.online, z)
    }

    pub fn target_values(&self, z: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.values(&self.target, z)
    }

    /// Copies the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    /// `score[i][a] = r̂(z_i, a) + γ · max_a' Q(prior(z_i, a), a')` under the
    /// online network.
    pub fn lookahead_scores(&self, wm: &WorldModel, z: &Array2<f64>) -> Result<LookaheadScores, NnError> {
        self.lookahead_with(wm, &self.online, z)
    }

    pub fn lookahead_with(
        &self,
        wm: &WorldModel,
        q_store: &ParamStore,
        z: &Array2<f64>,
    ) -> Result<LookaheadScores, NnError> {
        let n = z.nrows();
        let a = Action::COUNT;
        let mut rows = Array2::zeros((n * a, z.ncols()));
        let mut actions = Vec::with_capacity(n * a);
        for (i, zi) in z.rows().into_iter().enumerate() {
            for (k, action) in Action::ALL.iter().enumerate() {
                rows.row_mut(i * a + k).assign(&zi);
                actions.push(*action);
            }
        }
        let (next, rewards) = wm.net.step_batch(&wm.params, &rows, &actions)?;
        let q_next = self.values(q_store, &next)?;
        let best_next = q_next.map_axis(Axis(1), |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let scores = Array2::from_shape_fn((n, a), |(i, k)| rewards[i * a + k] + self.gamma * best_next[i * a + k]);
        let rewards = Array2::from_shape_vec((n, a), rewards).expect("n·a rewards");
        Ok(LookaheadScores { scores, rewards })
    }

    /// One Adam step on the mean squared TD error over `horizon` imagined
    /// steps from each row of `starts`. Imagined actions are greedy under
    /// the lookahead score. Targets use the target network and carry no
    /// gradient; the world model is only read.
    pub fn td_update(&mut self, wm: &WorldModel, starts: Array2<f64>, horizon: usize) -> Result<f64> {
        let (latents, actions, targets) = self.imagined_targets(wm, starts, horizon)?;
        let (loss, grads) = self.td_loss(&self.online, &latents, &actions, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                component: "Q",
                detail: format!("loss {loss} after {} gradient steps", self.grad_steps),
            });
        }
        self.adam.update(&mut self.online, &grads)?;
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.sync_every) {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Imagined transitions flattened to `(latents, actions, TD targets)`.
    pub fn imagined_targets(
        &self,
        wm: &WorldModel,
        starts: Array2<f64>,
        horizon: usize,
    ) -> Result<ImaginedTargets, NnError> {
        let steps = wm.net.imagine_batch(
            &wm.params,
            starts,
            |z| {
                let s = self.lookahead_scores(wm, z)?;
                Ok(s.greedy())
            },
            horizon,
        )?;
        let n: usize = steps.iter().map(|s| s.actions.len()).sum();
        let d = wm.latent_dim();
        let mut latents = Array2::zeros((n, d));
        let mut next = Array2::zeros((n, d));
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut offset = 0;
        for s in steps {
            let m = s.actions.len();
            latents.slice_mut(ndarray::s![offset..offset + m, ..]).assign(&s.latents);
            next.slice_mut(ndarray::s![offset..offset + m, ..]).assign(&s.next_latents);
            actions.extend(s.actions);
            rewards.extend(s.rewards);
            offset += m;
        }
        let q_next = self.target_values(&next)?;
        let targets = Array2::from_shape_fn((n, 1), |(i, _)| {
            let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rewards[i] + self.gamma * best
        });
        Ok((latents, actions, targets))
    }

    /// Mean squared error between `Q(z, a)` and fixed targets.
    pub fn td_loss(
        &self,
        store: &ParamStore,
        latents: &Array2<f64>,
        actions: &[Action],
        targets: &Array2<f64>,
    ) -> Result<(f64, crate::nn::Grads), NnError> {
        let mut tape = Tape::new(store);
        let z = tape.input(latents.clone());
        let q = self.net.record(&mut tape, z)?;
        let cols: Vec<usize> = actions.iter().map(|a| a.index()).collect();
        let picked = tape.gather(q, &cols)?;
        let loss = tape.mean_squared_to(picked, targets.clone())?;
        let grads = tape.backward(loss)?.params;
        Ok((tape.value(loss)[[0, 0]], grads))
    }
}

/// Flattened imagined `(latents, actions, TD targets)`.
pub type ImaginedTargets = (Array2<f64>, Vec<Action>, Array2<f64>);

/// Lookahead scores and predicted rewards, one row per latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LookaheadScores {
    pub scores: Array2<f64>,
    pub rewards: Array2<f64>,
}

impl LookaheadScores {
    pub fn greedy(&self) -> Vec<Action> {
        self.scores
            .rows()
            .into_iter()
            .map(|r| Action::from_index(argmax(r.as_slice().expect("contiguous row"))))
            .collect()
    }
}

/// Action choice for one latent: uniform with probability `epsilon`,
/// otherwise the lookahead argmax (ties to the lowest index).
pub fn select_action<R: Rng + ?Sized>(
    wm: &WorldModel,
    q: &QLearner,
    z: &LatentState,
    epsilon: f64,
    rng: &mut R,
) -> Result<Decision, NnError> {
    let explored = explore(epsilon, rng);
    let s = q.lookahead_scores(wm, &crate::nn::row(&z.0))?;
    let action = explored.unwrap_or_else(|| s.greedy()[0]);
    Ok(Decision {
        action,
        predicted_reward: Some(s.rewards[[0, action.index()]]),
        explored: explored.is_some(),
    })
}

/// Full Wireless Dreamer agent state for one experiment.
pub struct DreamerAgent {
    pub wm: WorldModel,
    pub q: QLearner,
    pub replay: ReplayBuffer,
    pub config: LearnerConfig,
    pub warmup_steps: usize,
    explore_rng: Rng64,
    replay_rng: Rng64,
    env_steps: usize,
    episode: u64,
    episode_step: usize,
    latent: LatentState,
    prev_action: Action,
    obs: Option<Observation>,
}

impl DreamerAgent {
    pub fn new(obs_dim: usize, config: LearnerConfig, warmup_steps: usize, seed: u64) -> Self {
        let mut init = stream(seed, Stream::Init);
        let wm_config = WorldModelConfig {
            embed_dim: config.embed_dim,
            latent_dim: config.latent_dim,
            hidden_dim: config.hidden_dim,
            lr: config.wm_lr,
            ..WorldModelConfig::new(obs_dim)
        };
        let wm = WorldModel::new(wm_config, &mut init);
        let q = QLearner::new(
            config.latent_dim,
            config.hidden_dim,
            config.q_lr,
            config.gamma,
            config.target_sync_every,
            &mut init,
        );
        let latent = wm.initial_latent();
        Self {
            wm,
            q,
            replay: ReplayBuffer::new(config.replay_capacity),
            config,
            warmup_steps,
            explore_rng: stream(seed, Stream::Explore),
            replay_rng: stream(seed, Stream::Replay),
            env_steps: 0,
            episode: 0,
            episode_step: 0,
            latent,
            prev_action: Action::Stay,
            obs: None,
        }
    }

    pub fn latent(&self) -> &LatentState {
        &self.latent
    }

    /// One round of world-model and Q learning from replay.
    pub fn learn(&mut self, horizon: usize) -> Result<(WmLosses, f64)> {
        let len = self.config.seq_len.min(horizon);
        let batch = self
            .replay
            .sample_sequences(self.config.batch_size, len, &mut self.replay_rng)?;
        let out = self.wm.train_batch(&batch)?;
        let n = self.config.batch_size;
        let total = out.posteriors.nrows();
        let picks: Vec<usize> = (0..n).map(|_| self.replay_rng.random_range(0..total)).collect();
        let starts = out.posteriors.select(Axis(0), &picks);
        let q_loss = self.q.td_update(&self.wm, starts, self.config.imagination_horizon)?;
        Ok((out.losses, q_loss))
    }

    /// Restores world-model and Q parameters; the target copies the online
    /// network.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.wm.load_section(ckpt.section(crate::world_model::SECTION)?)?;
        ckpt.section(Q_SECTION)?.load_into(&mut self.q.online)?;
        self.q.sync_target();
        Ok(())
    }
}

impl Agent for DreamerAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dreamer
    }

    fn begin_episode(&mut self, obs: Observation) {
        self.latent = self.wm.initial_latent();
        self.prev_action = Action::Stay;
        self.episode_step = 0;
        self.obs = Some(obs);
    }

    fn step(&mut self, env: &mut LawnEnv, mode: Mode) -> Result<StepReport> {
        let obs = self
            .obs
            .take()
            .ok_or_else(|| Error::Unsupported("step called before begin_episode".into()))?;
        self.latent = self.wm.encode_step(&self.latent, self.prev_action, &obs)?;
        let epsilon = match mode {
            Mode::Train => self.config.epsilon(self.env_steps),
            Mode::Eval => 0.0,
        };
        let decision = select_action(&self.wm, &self.q, &self.latent, epsilon, &mut self.explore_rng)?;
        let out = env.step(decision.action)?;
        self.prev_action = decision.action;
        let mut report = StepReport {
            action: decision.action,
            reward: out.reward,
            predicted_reward: decision.predicted_reward,
            done: out.done,
            epsilon,
            wm_losses: None,
            q_loss: None,
        };
        if mode == Mode::Train {
            self.replay.append(Transition {
                observation: obs,
                action: decision.action,
                reward: out.reward,
                next_observation: out.observation.clone(),
                done: out.done,
                episode: self.episode,
                step: self.episode_step,
            });
            self.env_steps += 1;
            self.episode_step += 1;
            if out.done {
                self.episode += 1;
            }
            if self.env_steps > self.warmup_steps {
                let (wm_losses, q_loss) = self.learn(env.config().horizon)?;
                report.wm_losses = Some(wm_losses);
                report.q_loss = Some(q_loss);
            }
        }
        self.obs = Some(out.observation);
        Ok(report)
    }

    fn env_steps(&self) -> usize {
        self.env_steps
    }

    fn world_model(&self) -> Option<&WorldModel> {
        Some(&self.wm)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            latent_dim: self.wm.latent_dim() as u32,
            sections: vec![
                self.wm.to_section(),
                Section::from_store(Q_SECTION, &self.q.online),
            ],
        }
    }
}
