//! Model-free DQN and the uniform random policy.

use ndarray::Array2;
use rand::Rng;

use crate::agent::{argmax, explore, random_action, Agent, Decision, Mode, StepReport};
use crate::checkpoint::{Checkpoint, Section};
use crate::env::{Action, LawnEnv, Observation};
use crate::error::{Error, Result};
use crate::harness::{AgentKind, LearnerConfig};
use crate::nn::{Adam, AdamConfig, Dense, Grads, NnError, NodeId, ParamStore, Tape};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{stream, Rng64, Stream};

pub const DQN_SECTION: &str = "DQN";
pub const RANDOM_SECTION: &str = "random";

/// Observation → Q values through two tanh hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DqnNet {
    pub layers: [Dense; 3],
}

impl DqnNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, obs_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            layers: [
                Dense::new(store, "dqn.0", obs_dim, hidden, rng),
                Dense::new(store, "dqn.1", hidden, hidden, rng),
                Dense::new(store, "dqn.2", hidden, Action::COUNT, rng),
            ],
        }
    }

    pub fn record(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NnError> {
        let h = self.layers[0].record(tape, x)?;
        let h = tape.tanh(h);
        let h = self.layers[1].record(tape, h)?;
        let h = tape.tanh(h);
        self.layers[2].record(tape, h)
    }

    pub fn values(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        let mut tape = Tape::new(store);
        let xn = tape.input(x.clone());
        let out = self.record(&mut tape, xn)?;
        Ok(tape.value(out).clone())
    }
}

/// DQN parameters, target copy and optimizer.
#[derive(Clone, Debug)]
pub struct Dqn {
    pub net: DqnNet,
    pub online: ParamStore,
    pub target: ParamStore,
    pub adam: Adam,
    pub gamma: f64,
    pub sync_every: usize,
    pub grad_steps: usize,
}

impl Dqn {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: usize,
        lr: f64,
        gamma: f64,
        sync_every: usize,
        rng: &mut R,
    ) -> Self {
        let mut online = ParamStore::new();
        let net = DqnNet::new(&mut online, obs_dim, hidden, rng);
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

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>, NnError> {
        Ok(self
            .net
            .values(&self.online, &crate::nn::row(obs.as_slice()))?
            .iter()
            .copied()
            .collect())
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    /// TD targets `r + γ (1 − done) max_a' Q_target(x', a')`.
    pub fn targets(&self, batch: &[Transition]) -> Result<Array2<f64>, NnError> {
        let next = stack(batch.iter().map(|t| &t.next_observation));
        let q_next = self.net.values(&self.target, &next)?;
        Ok(Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
            let t = &batch[i];
            if t.done {
                t.reward
            } else {
                let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + self.gamma * best
            }
        }))
    }

    /// Mean squared error of `Q(x, a)` against fixed targets.
    pub fn loss(
        &self,
        store: &ParamStore,
        batch: &[Transition],
        targets: &Array2<f64>,
    ) -> Result<(f64, Grads), NnError> {
        let mut tape = Tape::new(store);
        let x = tape.input(stack(batch.iter().map(|t| &t.observation)));
        let q = self.net.record(&mut tape, x)?;
        let cols: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
        let picked = tape.gather(q, &cols)?;
        let loss = tape.mean_squared_to(picked, targets.clone())?;
        let grads = tape.backward(loss)?.params;
        Ok((tape.value(loss)[[0, 0]], grads))
    }

    /// One Adam step on a transition batch, then a target sync every
    /// `sync_every` steps.
    pub fn td_update(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = self.targets(batch)?;
        let (loss, grads) = self.loss(&self.online, batch, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                component: "DQN",
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
}

fn stack<'a>(rows: impl Iterator<Item = &'a Observation>) -> Array2<f64> {
    let rows: Vec<&Observation> = rows.collect();
    let dim = rows.first().map_or(0, |o| o.len());
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].0[j])
}

/// ε-greedy over the online Q values; ties go to the lowest index.
pub fn dqn_select<R: Rng + ?Sized>(dqn: &Dqn, obs: &Observation, epsilon: f64, rng: &mut R) -> Result<Decision, NnError> {
    let explored = explore(epsilon, rng);
    let action = match explored {
        Some(a) => a,
        None => Action::from_index(argmax(&dqn.q_values(obs)?)),
    };
    Ok(Decision {
        action,
        predicted_reward: None,
        explored: explored.is_some(),
    })
}

pub struct DqnAgent {
    pub dqn: Dqn,
    pub replay: ReplayBuffer,
    pub config: LearnerConfig,
    pub warmup_steps: usize,
    explore_rng: Rng64,
    replay_rng: Rng64,
    env_steps: usize,
    episode: u64,
    episode_step: usize,
    obs: Option<Observation>,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, config: LearnerConfig, warmup_steps: usize, seed: u64) -> Self {
        let mut init = stream(seed, Stream::Init);
        let dqn = Dqn::new(
            obs_dim,
            config.hidden_dim,
            config.dqn_lr,
            config.gamma,
            config.target_sync_every,
            &mut init,
        );
        Self {
            dqn,
            replay: ReplayBuffer::new(config.replay_capacity),
            config,
            warmup_steps,
            explore_rng: stream(seed, Stream::Explore),
            replay_rng: stream(seed, Stream::Replay),
            env_steps: 0,
            episode: 0,
            episode_step: 0,
            obs: None,
        }
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.section(DQN_SECTION)?.load_into(&mut self.dqn.online)?;
        self.dqn.sync_target();
        Ok(())
    }
}

impl Agent for DqnAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dqn
    }

    fn begin_episode(&mut self, obs: Observation) {
        self.episode_step = 0;
        self.obs = Some(obs);
    }

    fn step(&mut self, env: &mut LawnEnv, mode: Mode) -> Result<StepReport> {
        let obs = self
            .obs
            .take()
            .ok_or_else(|| Error::Unsupported("step called before begin_episode".into()))?;
        let epsilon = match mode {
            Mode::Train => self.config.epsilon(self.env_steps),
            Mode::Eval => 0.0,
        };
        let decision = dqn_select(&self.dqn, &obs, epsilon, &mut self.explore_rng)?;
        let out = env.step(decision.action)?;
        let mut report = StepReport {
            action: decision.action,
            reward: out.reward,
            predicted_reward: None,
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
                let batch = self
                    .replay
                    .sample_transitions(self.config.batch_size, &mut self.replay_rng)?;
                report.q_loss = Some(self.dqn.td_update(&batch)?);
            }
        }
        self.obs = Some(out.observation);
        Ok(report)
    }

    fn env_steps(&self) -> usize {
        self.env_steps
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            latent_dim: 0,
            sections: vec![Section::from_store(DQN_SECTION, &self.dqn.online)],
        }
    }
}

/// Uniform random actions; learns nothing.
pub struct RandomAgent {
    rng: Rng64,
    env_steps: usize,
    started: bool,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream(seed, Stream::Explore),
            env_steps: 0,
            started: false,
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn begin_episode(&mut self, _obs: Observation) {
        self.started = true;
    }

    fn step(&mut self, env: &mut LawnEnv, mode: Mode) -> Result<StepReport> {
        if !self.started {
            return Err(Error::Unsupported("step called before begin_episode".into()));
        }
        let action = random_action(&mut self.rng);
        let out = env.step(action)?;
        if mode == Mode::Train {
            self.env_steps += 1;
        }
        Ok(StepReport {
            action,
            reward: out.reward,
            predicted_reward: None,
            done: out.done,
            epsilon: 1.0,
            wm_losses: None,
            q_loss: None,
        })
    }

    fn env_steps(&self) -> usize {
        self.env_steps
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            latent_dim: 0,
            sections: vec![Section {
                name: RANDOM_SECTION.into(),
                arrays: vec![],
            }],
        }
    }
}
