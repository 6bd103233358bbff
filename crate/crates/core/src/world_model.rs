//! Recurrent latent world model.
//!
//! * posterior: `z_t = GRU(z_{t−1}, [embed(x_t) ∥ onehot(a_{t−1})])`
//! * prior: `ẑ_{t+1} = MLP([z_t ∥ onehot(a_t)])` with a tanh output
//! * reward head: `r̂_t = MLP([z_t ∥ onehot(a_t)])`
//! * decoder: `x̂_t = MLP(z_t)`
//!
//! Training unrolls the posterior over replayed subsequences from `z = 0`
//! and minimizes reconstruction, reward and prior-consistency errors. The
//! consistency target is the next posterior latent, held constant.

use ndarray::{s, Array2};
use rand::Rng;

use crate::checkpoint::{CheckpointError, Section};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Dense, Grads, GruCell, Mlp, NnError, NodeId, ParamStore, Tape};
use crate::replay::SequenceBatch;

pub const SECTION: &str = "WM";

/// Recurrent belief state.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState(pub Vec<f64>);

impl LatentState {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldModelConfig {
    pub obs_dim: usize,
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub lambda_rec: f64,
    pub lambda_rew: f64,
    pub lambda_cons: f64,
}

impl WorldModelConfig {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            embed_dim: 128,
            latent_dim: 64,
            hidden_dim: 128,
            lr: 1e-3,
            lambda_rec: 1.0,
            lambda_rew: 10.0,
            lambda_cons: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WmLosses {
    pub reconstruction: f64,
    pub reward: f64,
    pub consistency: f64,
    pub total: f64,
}

/// One imagined step: from `latent`, take `action`, expect `reward`, land in
/// `next_latent`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImaginedTransition {
    pub latent: LatentState,
    pub action: Action,
    pub reward: f64,
    pub next_latent: LatentState,
}

/// One batched imagination step; row `i` of each field belongs to start `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImaginedBatch {
    pub latents: Array2<f64>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub next_latents: Array2<f64>,
}

/// Losses, gradients and posterior latents for one batch.
#[derive(Debug)]
pub struct LossEval {
    pub losses: WmLosses,
    pub grads: Grads,
    /// `(L·B) × d_z`, row `t·B + b` is sequence `b` at time `t`.
    pub posteriors: Array2<f64>,
}

pub fn one_hot(actions: &[Action]) -> Array2<f64> {
    let mut m = Array2::zeros((actions.len(), Action::COUNT));
    for (i, a) in actions.iter().enumerate() {
        m[[i, a.index()]] = 1.0;
    }
    m
}

fn stack_rows(v: &[f64]) -> Array2<f64> {
    crate::nn::row(v)
}

/// Layer layout of the world model; parameter values live in a separate
/// [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct WorldModelNet {
    pub config: WorldModelConfig,
    pub embed: Dense,
    pub posterior: GruCell,
    pub prior: Mlp,
    pub reward: Mlp,
    pub decoder: Mlp,
}

impl WorldModelNet {
    pub fn build<R: Rng + ?Sized>(config: WorldModelConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let a = Action::COUNT;
        let (d, h) = (config.latent_dim, config.hidden_dim);
        let embed = Dense::new(store, "embed", config.obs_dim, config.embed_dim, rng);
        let posterior = GruCell::new(store, "posterior", config.embed_dim + a, d, rng);
        let prior = Mlp::new(store, "prior", (d + a, h, d), Activation::Tanh, rng);
        let reward = Mlp::new(store, "reward", (d + a, h, 1), Activation::Identity, rng);
        let decoder = Mlp::new(store, "decoder", (d, h, config.obs_dim), Activation::Identity, rng);
        Self {
            config,
            embed,
            posterior,
            prior,
            reward,
            decoder,
        }
    }

    pub fn record_encode(
        &self,
        tape: &mut Tape<'_>,
        z_prev: NodeId,
        a_prev: &[Action],
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let e = self.embed.record(tape, x)?;
        let e = tape.tanh(e);
        let a = tape.input(one_hot(a_prev));
        let input = tape.concat(&[e, a])?;
        self.posterior.record(tape, z_prev, input)
    }

    fn with_action(&self, tape: &mut Tape<'_>, z: NodeId, actions: &[Action]) -> Result<NodeId, NnError> {
        let a = tape.input(one_hot(actions));
        tape.concat(&[z, a])
    }

    pub fn record_prior(&self, tape: &mut Tape<'_>, z: NodeId, actions: &[Action]) -> Result<NodeId, NnError> {
        let za = self.with_action(tape, z, actions)?;
        self.prior.record(tape, za)
    }

    pub fn record_reward(&self, tape: &mut Tape<'_>, z: NodeId, actions: &[Action]) -> Result<NodeId, NnError> {
        let za = self.with_action(tape, z, actions)?;
        self.reward.record(tape, za)
    }

    pub fn record_decode(&self, tape: &mut Tape<'_>, z: NodeId) -> Result<NodeId, NnError> {
        self.decoder.record(tape, z)
    }

    pub fn encode_batch(
        &self,
        store: &ParamStore,
        z_prev: &Array2<f64>,
        a_prev: &[Action],
        x: &Array2<f64>,
    ) -> Result<Array2<f64>, NnError> {
        let mut tape = Tape::new(store);
        let z = tape.input(z_prev.clone());
        let x = tape.input(x.clone());
        let out = self.record_encode(&mut tape, z, a_prev, x)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict_next_batch(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        actions: &[Action],
    ) -> Result<Array2<f64>, NnError> {
        let mut tape = Tape::new(store);
        let zn = tape.input(z.clone());
        let out = self.record_prior(&mut tape, zn, actions)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict_reward_batch(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        actions: &[Action],
    ) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::new(store);
        let zn = tape.input(z.clone());
        let out = self.record_reward(&mut tape, zn, actions)?;
        Ok(tape.value(out).iter().copied().collect())
    }

    /// Next latents and rewards for each row of `z` under each row's action,
    /// sharing one concatenation.
    pub fn step_batch(
        &self,
        store: &ParamStore,
        z: &Array2<f64>,
        actions: &[Action],
    ) -> Result<(Array2<f64>, Vec<f64>), NnError> {
        let mut tape = Tape::new(store);
        let zn = tape.input(z.clone());
        let za = self.with_action(&mut tape, zn, actions)?;
        let next = self.prior.record(&mut tape, za)?;
        let reward = self.reward.record(&mut tape, za)?;
        Ok((
            tape.value(next).clone(),
            tape.value(reward).iter().copied().collect(),
        ))
    }

    /// Posterior latents `z_1..z_L` of an unroll over `batch`, the
    /// consistency targets of [`Self::loss`].
    pub fn consistency_targets(&self, store: &ParamStore, batch: &SequenceBatch) -> Result<Vec<Array2<f64>>, NnError> {
        let b = batch.batch_size();
        let len = batch.seq_len();
        let mut z = Array2::zeros((b, self.config.latent_dim));
        let mut a_prev = vec![Action::Stay; b];
        let mut out = Vec::with_capacity(len);
        for t in 0..=len {
            let x = if t < len {
                batch.observations_at(t)
            } else {
                let mut last = Array2::zeros((b, self.config.obs_dim));
                for (mut row, seq) in last.rows_mut().into_iter().zip(&batch.sequences) {
                    row.assign(&ndarray::aview1(seq.final_next_observation.as_slice()));
                }
                last
            };
            z = self.encode_batch(store, &z, &a_prev, &x)?;
            if t > 0 {
                out.push(z.clone());
            }
            if t < len {
                a_prev = batch.actions_at(t);
            }
        }
        Ok(out)
    }

    pub fn decode_batch(&self, store: &ParamStore, z: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        let mut tape = Tape::new(store);
        let zn = tape.input(z.clone());
        let out = self.record_decode(&mut tape, zn)?;
        Ok(tape.value(out).clone())
    }

    /// Rolls the prior forward `horizon` steps from every row of `z0`, asking
    /// `rule` for one action per row at each step.
    pub fn imagine_batch<F>(
        &self,
        store: &ParamStore,
        z0: Array2<f64>,
        mut rule: F,
        horizon: usize,
    ) -> Result<Vec<ImaginedBatch>, NnError>
    where
        F: FnMut(&Array2<f64>) -> Result<Vec<Action>, NnError>,
    {
        let mut z = z0;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let actions = rule(&z)?;
            let (next, rewards) = self.step_batch(store, &z, &actions)?;
            out.push(ImaginedBatch {
                latents: z,
                actions,
                rewards,
                next_latents: next.clone(),
            });
            z = next;
        }
        Ok(out)
    }

    /// Training objective on `batch` with parameter values `store`.
    pub fn loss(&self, store: &ParamStore, batch: &SequenceBatch) -> Result<LossEval> {
        self.loss_with_targets(store, batch, None)
    }

    /// The training objective with the consistency targets supplied instead
    /// of taken from this unroll. With `targets` fixed the loss is an
    /// ordinary function of the parameters, which is what a finite
    /// difference check needs. `targets[t]` is the `B × d_z` target for step
    /// `t`.
    pub fn loss_with_targets(
        &self,
        store: &ParamStore,
        batch: &SequenceBatch,
        targets: Option<&[Array2<f64>]>,
    ) -> Result<LossEval> {
        let b = batch.batch_size();
        let len = batch.seq_len();
        if b == 0 || len == 0 {
            return Err(Error::Unsupported("world-model batch is empty".into()));
        }
        let cfg = &self.config;
        let mut tape = Tape::new(store);
        let mut z = tape.input(Array2::zeros((b, cfg.latent_dim)));
        let mut a_prev = vec![Action::Stay; b];
        let mut latents = Vec::with_capacity(len + 1);
        let mut rec_terms = Vec::with_capacity(len);
        let mut rew_terms = Vec::with_capacity(len);
        let mut step_actions = Vec::with_capacity(len);
        for t in 0..len {
            let obs = batch.observations_at(t);
            let x = tape.input(obs.clone());
            z = self.record_encode(&mut tape, z, &a_prev, x)?;
            latents.push(z);
            let x_hat = self.record_decode(&mut tape, z)?;
            rec_terms.push((tape.mean_squared_to(x_hat, obs)?, 1.0 / len as f64));
            let actions = batch.actions_at(t);
            let r_hat = self.record_reward(&mut tape, z, &actions)?;
            rew_terms.push((tape.mean_squared_to(r_hat, batch.rewards_at(t))?, 1.0 / len as f64));
            a_prev = actions.clone();
            step_actions.push(actions);
        }
        let mut last_obs = Array2::zeros((b, cfg.obs_dim));
        for (mut row, seq) in last_obs.rows_mut().into_iter().zip(&batch.sequences) {
            row.assign(&ndarray::aview1(seq.final_next_observation.as_slice()));
        }
        let x_last = tape.input(last_obs);
        let z_last = self.record_encode(&mut tape, z, &a_prev, x_last)?;
        latents.push(z_last);

        let mut cons_terms = Vec::with_capacity(len);
        for t in 0..len {
            let pred = self.record_prior(&mut tape, latents[t], &step_actions[t])?;
            let target = match targets {
                Some(fixed) => fixed[t].clone(),
                None => tape.value(latents[t + 1]).clone(),
            };
            cons_terms.push((tape.mean_squared_to(pred, target)?, 1.0 / len as f64));
        }
        let rec = tape.weighted_sum(&rec_terms)?;
        let rew = tape.weighted_sum(&rew_terms)?;
        let cons = tape.weighted_sum(&cons_terms)?;
        let total = tape.weighted_sum(&[(rec, cfg.lambda_rec), (rew, cfg.lambda_rew), (cons, cfg.lambda_cons)])?;
        let losses = WmLosses {
            reconstruction: tape.value(rec)[[0, 0]],
            reward: tape.value(rew)[[0, 0]],
            consistency: tape.value(cons)[[0, 0]],
            total: tape.value(total)[[0, 0]],
        };
        if !losses.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                component: "world model",
                detail: format!("{losses:?}"),
            });
        }
        let grads = tape.backward(total)?.params;

        let mut posteriors = Array2::zeros((len * b, cfg.latent_dim));
        for (t, id) in latents[..len].iter().enumerate() {
            posteriors
                .slice_mut(s![t * b..(t + 1) * b, ..])
                .assign(tape.value(*id));
        }
        Ok(LossEval {
            losses,
            grads,
            posteriors,
        })
    }
}

/// Output of one [`WorldModel::train_batch`] call.
#[derive(Debug)]
pub struct TrainOutput {
    pub losses: WmLosses,
    pub posteriors: Array2<f64>,
}

/// World-model parameters with their optimizer.
#[derive(Clone, Debug)]
pub struct WorldModel {
    pub net: WorldModelNet,
    pub params: ParamStore,
    pub adam: Adam,
}

impl WorldModel {
    pub fn new<R: Rng + ?Sized>(config: WorldModelConfig, rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        let lr = config.lr;
        let net = WorldModelNet::build(config, &mut params, rng);
        let adam = Adam::new(&params, AdamConfig::with_lr(lr));
        Self { net, params, adam }
    }

    pub fn config(&self) -> &WorldModelConfig {
        &self.net.config
    }

    pub fn latent_dim(&self) -> usize {
        self.net.config.latent_dim
    }

    pub fn initial_latent(&self) -> LatentState {
        LatentState::zeros(self.latent_dim())
    }

    pub fn encode_step(&self, z_prev: &LatentState, a_prev: Action, x: &Observation) -> Result<LatentState, NnError> {
        let out = self
            .net
            .encode_batch(&self.params, &stack_rows(&z_prev.0), &[a_prev], &stack_rows(x.as_slice()))?;
        Ok(LatentState(out.iter().copied().collect()))
    }

    pub fn predict_next(&self, z: &LatentState, a: Action) -> Result<LatentState, NnError> {
        let out = self.net.predict_next_batch(&self.params, &stack_rows(&z.0), &[a])?;
        Ok(LatentState(out.iter().copied().collect()))
    }

    pub fn predict_reward(&self, z: &LatentState, a: Action) -> Result<f64, NnError> {
        Ok(self.net.predict_reward_batch(&self.params, &stack_rows(&z.0), &[a])?[0])
    }

    pub fn decode(&self, z: &LatentState) -> Result<Vec<f64>, NnError> {
        let out = self.net.decode_batch(&self.params, &stack_rows(&z.0))?;
        Ok(out.iter().copied().collect())
    }

    /// `a_k = rule(z_k)`, `r̂_k = reward(z_k, a_k)`, `z_{k+1} = prior(z_k, a_k)`.
    pub fn imagine<F>(&self, z0: &LatentState, mut rule: F, horizon: usize) -> Result<Vec<ImaginedTransition>, NnError>
    where
        F: FnMut(&LatentState) -> Action,
    {
        let steps = self.net.imagine_batch(
            &self.params,
            stack_rows(&z0.0),
            |z| Ok(vec![rule(&LatentState(z.iter().copied().collect()))]),
            horizon,
        )?;
        Ok(steps
            .into_iter()
            .map(|s| ImaginedTransition {
                latent: LatentState(s.latents.iter().copied().collect()),
                action: s.actions[0],
                reward: s.rewards[0],
                next_latent: LatentState(s.next_latents.iter().copied().collect()),
            })
            .collect())
    }

    /// One Adam step on the training objective.
    pub fn train_batch(&mut self, batch: &SequenceBatch) -> Result<TrainOutput> {
        let eval = self.net.loss(&self.params, batch)?;
        self.adam.update(&mut self.params, &eval.grads)?;
        Ok(TrainOutput {
            losses: eval.losses,
            posteriors: eval.posteriors,
        })
    }

    /// Posterior latents of a real trajectory, starting from `z = 0` and the
    /// `Stay` action.
    pub fn filter(&self, observations: &[Observation], actions: &[Action]) -> Result<Vec<LatentState>, NnError> {
        let mut z = self.initial_latent();
        let mut a_prev = Action::Stay;
        let mut out = Vec::with_capacity(observations.len());
        for (t, x) in observations.iter().enumerate() {
            z = self.encode_step(&z, a_prev, x)?;
            out.push(z.clone());
            if let Some(&a) = actions.get(t) {
                a_prev = a;
            }
        }
        Ok(out)
    }

    /// Mean Euclidean error between `decode(prior^k(z_t))` and `x_{t+k}` for
    /// `k = 1..=max_k`, rolling the prior with the actions actually taken.
    /// `observations` holds `x_0..x_T` and `actions` holds `a_0..a_{T−1}`.
    pub fn horizon_errors(
        &self,
        observations: &[Observation],
        actions: &[Action],
        max_k: usize,
    ) -> Result<Vec<f64>, NnError> {
        let posteriors = self.filter(observations, actions)?;
        let mut sums = vec![0.0; max_k];
        let mut counts = vec![0usize; max_k];
        for t in 0..actions.len() {
            let mut z = posteriors[t].clone();
            for k in 1..=max_k {
                if t + k >= observations.len() {
                    break;
                }
                z = self.predict_next(&z, actions[t + k - 1])?;
                let x_hat = self.decode(&z)?;
                let err = x_hat
                    .iter()
                    .zip(observations[t + k].as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[k - 1] += err;
                counts[k - 1] += 1;
            }
        }
        Ok(sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect())
    }

    pub fn to_section(&self) -> Section {
        Section::from_store(SECTION, &self.params)
    }

    pub fn load_section(&mut self, section: &Section) -> Result<(), CheckpointError> {
        section.load_into(&mut self.params)
    }
}
