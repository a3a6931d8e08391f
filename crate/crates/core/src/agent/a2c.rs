//! Synchronous advantage actor-critic.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::envs::{Env, EnvConfig, FrameStack, ACTION_COUNT};
use crate::error::{contract, Error, Result};
use crate::numerics::{
    clip_grad_norm, derive_seed, forward_sequential, rng_from_seed, Architecture, Graph, Grads, LabRng, NetworkParams,
    OptimizerKind, OptimizerState, Tensor,
};

use super::returns::{nstep_returns, RolloutBatch};
use super::{policy_forward, select_action, ActMode};

/// Weights of the actor-critic objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// α, the entropy bonus.
    pub entropy: f32,
    pub value: f32,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { entropy: 0.01, value: 0.5, max_grad_norm: Some(0.5) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A2cConfig {
    pub workers: usize,
    /// Steps per worker between updates.
    pub n_steps: usize,
    pub gamma: f32,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub weights: LossWeights,
    /// Completed episodes averaged into the reported mean reward.
    pub reward_window: usize,
    /// Cut the bootstrapped return at every lost life, not only at episode end.
    pub life_loss_cuts_return: bool,
    pub seed: u64,
}

impl Default for A2cConfig {
    fn default() -> Self {
        A2cConfig {
            workers: 8,
            n_steps: 20,
            gamma: 0.99,
            learning_rate: 0.0007,
            optimizer: OptimizerKind::RMSPROP,
            weights: LossWeights::default(),
            reward_window: 8,
            life_loss_cuts_return: true,
            seed: 0,
        }
    }
}

/// States, taken actions and regression targets for one update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateBatch {
    /// `[batch, STACK, size, size]`.
    pub observations: Tensor,
    pub actions: Vec<usize>,
    pub targets: Vec<f32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct A2cLosses {
    /// mean −log π(a|s)·A.
    pub policy: f32,
    /// mean (V^n − V)².
    pub value: f32,
    /// mean H(π(·|s)).
    pub entropy: f32,
    /// policy − α·entropy + value_weight·value.
    pub total: f32,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Loss and gradients of the actor-critic objective; the advantage
/// `V^n − V(s)` enters the policy term as a constant.
pub fn a2c_gradients(
    arch: &Architecture,
    params: &NetworkParams,
    batch: &UpdateBatch,
    weights: &LossWeights,
) -> Result<(A2cLosses, Grads)> {
    let n = batch.actions.len();
    if n == 0 || batch.targets.len() != n || batch.observations.rows() != n {
        return Err(contract("update batch sizes disagree"));
    }
    if batch.actions.iter().any(|&a| a >= ACTION_COUNT) {
        return Err(contract("action outside the action set"));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.input(batch.observations.clone());
    let heads = forward_sequential(&mut g, &bound, arch, x)?;
    let (logits, value) = (heads[0], heads[1]);
    let inv_n = 1.0 / n as f32;

    let values = g.value(value).data().to_vec();
    let mut weighted_onehot = vec![0.0; n * ACTION_COUNT];
    for (i, (&a, (&t, &v))) in batch.actions.iter().zip(batch.targets.iter().zip(&values)).enumerate() {
        weighted_onehot[i * ACTION_COUNT + a] = (t - v) * inv_n;
    }
    let logp = g.log_softmax(logits);
    let probs = g.softmax(logits);
    let adv = g.input(Tensor::new([n, ACTION_COUNT], weighted_onehot)?);
    let picked = g.mul(logp, adv)?;
    let policy_sum = g.sum(picked);
    let policy = g.scale(policy_sum, -1.0);

    let plogp = g.mul(probs, logp)?;
    let neg_entropy_sum = g.sum(plogp);
    let entropy = g.scale(neg_entropy_sum, -inv_n);

    let target = g.input(Tensor::new([n, 1], batch.targets.clone())?);
    let diff = g.sub(target, value)?;
    let sq = g.square(diff);
    let sq_sum = g.sum(sq);
    let value_loss = g.scale(sq_sum, inv_n);

    let ent_term = g.scale(entropy, -weights.entropy);
    let val_term = g.scale(value_loss, weights.value);
    let pe = g.add(policy, ent_term)?;
    let total = g.add(pe, val_term)?;

    let losses = A2cLosses {
        policy: g.scalar(policy),
        value: g.scalar(value_loss),
        entropy: g.scalar(entropy),
        total: g.scalar(total),
        grad_norm: 0.0,
    };
    if !losses.total.is_finite() {
        let tensor = if !losses.value.is_finite() { "value loss" } else { "policy loss" };
        return Err(Error::NumericalFailure { tensor: tensor.into() });
    }
    let mut grads = g.backward(total)?;
    Ok((losses, bound.collect(&mut grads)))
}

/// One optimizer step on the actor-critic objective.
pub fn a2c_update(
    arch: &Architecture,
    params: &mut NetworkParams,
    optimizer: &mut OptimizerState,
    batch: &UpdateBatch,
    weights: &LossWeights,
) -> Result<A2cLosses> {
    let (mut losses, mut grads) = a2c_gradients(arch, params, batch, weights)?;
    losses.grad_norm = match weights.max_grad_norm {
        Some(max) => clip_grad_norm(&mut grads, max),
        None => crate::numerics::grad_norm(&grads),
    };
    optimizer.step(params, &grads)?;
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NumericalFailure { tensor: name.into() });
    }
    Ok(losses)
}

/// Training progress snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Progress {
    /// Environment steps summed over workers.
    pub frames: u64,
    pub updates: u64,
    /// Mean score of the most recent completed episodes (0 before any).
    pub mean_reward: f32,
    pub std_reward: f32,
    pub episodes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

struct Worker {
    env: Env,
    stack: FrameStack,
}

/// W lock-stepped environments feeding one shared network.
pub struct A2cRunner {
    arch: Architecture,
    params: NetworkParams,
    optimizer: OptimizerState,
    config: A2cConfig,
    workers: Vec<Worker>,
    rng: LabRng,
    frames: u64,
    updates: u64,
    episodes: u64,
    recent: VecDeque<f32>,
}

impl A2cRunner {
    pub fn new(env_config: &EnvConfig, arch: Architecture, params: NetworkParams, config: A2cConfig) -> Result<Self> {
        if config.workers == 0 || config.n_steps == 0 || config.reward_window == 0 {
            return Err(Error::Config("workers, n_steps and reward_window must be positive".into()));
        }
        let obs_size = arch.input[1];
        let workers = (0..config.workers)
            .map(|w| {
                let env = Env::new(*env_config, derive_seed(config.seed, w as u64))?;
                let mut stack = FrameStack::new(obs_size);
                stack.reset(env.frame())?;
                Ok(Worker { env, stack })
            })
            .collect::<Result<Vec<_>>>()?;
        let optimizer = OptimizerState::new(config.optimizer, config.learning_rate, &params);
        Ok(A2cRunner {
            arch,
            params,
            optimizer,
            config,
            workers,
            rng: rng_from_seed(derive_seed(config.seed, u64::MAX)),
            frames: 0,
            updates: 0,
            episodes: 0,
            recent: VecDeque::new(),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn config(&self) -> &A2cConfig {
        &self.config
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    /// Network and optimizer for extra (e.g. off-policy) updates between rollouts.
    pub fn parts_mut(&mut self) -> (&Architecture, &mut NetworkParams) {
        (&self.arch, &mut self.params)
    }

    pub fn progress(&self) -> Progress {
        let k = self.recent.len();
        let (mean, std) = if k == 0 {
            (0.0, 0.0)
        } else {
            let mean = self.recent.iter().sum::<f32>() / k as f32;
            let var = self.recent.iter().map(|r| (r - mean) * (r - mean)).sum::<f32>() / k as f32;
            (mean, libm::sqrtf(var))
        };
        Progress { frames: self.frames, updates: self.updates, mean_reward: mean, std_reward: std, episodes: self.episodes }
    }

    fn observations(&self) -> Result<Tensor> {
        let obs_len: usize = self.arch.input.iter().product();
        let mut data = vec![0.0; self.workers.len() * obs_len];
        for (w, chunk) in self.workers.iter().zip(data.chunks_mut(obs_len)) {
            w.stack.write_into(chunk);
        }
        let mut shape = vec![self.workers.len()];
        shape.extend_from_slice(&self.arch.input);
        Tensor::new(shape, data)
    }

    /// Steps every worker `n_steps` times with stochastic actions.
    pub fn rollout(&mut self) -> Result<RolloutBatch> {
        let w = self.workers.len();
        let obs_len: usize = self.arch.input.iter().product();
        let mut batch = RolloutBatch { workers: w, steps: self.config.n_steps, obs_len, ..Default::default() };
        for _ in 0..self.config.n_steps {
            let obs = self.observations()?;
            let out = policy_forward(&self.arch, &self.params, &obs)?;
            batch.observations.extend_from_slice(obs.data());
            for (worker, o) in self.workers.iter_mut().zip(&out) {
                let a = select_action(&o.probs, ActMode::Stochastic, &mut self.rng)?;
                let t = worker.env.step(a)?;
                batch.actions.push(a);
                batch.rewards.push(t.reward);
                batch.dones.push(t.terminal || (self.config.life_loss_cuts_return && t.life_lost));
                if t.terminal {
                    self.episodes += 1;
                    self.recent.push_back(worker.env.score());
                    if self.recent.len() > self.config.reward_window {
                        self.recent.pop_front();
                    }
                    worker.env.reset()?;
                    worker.stack.reset(worker.env.frame())?;
                } else {
                    worker.stack.push(&t.frame)?;
                }
            }
            self.frames += w as u64;
        }
        let last = policy_forward(&self.arch, &self.params, &self.observations()?)?;
        batch.bootstrap = last.iter().map(|o| o.value).collect();
        Ok(batch)
    }

    /// One rollout followed by one actor-critic update.
    pub fn update(&mut self) -> Result<A2cLosses> {
        let batch = self.rollout()?;
        let targets = nstep_returns(&batch, self.config.gamma)?;
        let mut shape = vec![batch.actions.len()];
        shape.extend_from_slice(&self.arch.input);
        let update = UpdateBatch { observations: Tensor::new(shape, batch.observations)?, actions: batch.actions, targets };
        let losses = a2c_update(&self.arch, &mut self.params, &mut self.optimizer, &update, &self.config.weights)?;
        self.updates += 1;
        Ok(losses)
    }
}

/// Budget and reporting cadence for [`train_a2c`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_updates: u64,
    pub max_frames: u64,
    /// Progress is reported every this many updates.
    pub report_every: u64,
}

/// Runs A2C until the budget is spent or `on_progress` asks to stop.
pub fn train_a2c(
    env_config: &EnvConfig,
    arch: Architecture,
    params: NetworkParams,
    config: A2cConfig,
    budget: Budget,
    on_progress: &mut dyn FnMut(&Progress) -> Control,
) -> Result<(NetworkParams, Progress)> {
    let mut runner = A2cRunner::new(env_config, arch, params, config)?;
    let every = budget.report_every.max(1);
    while runner.updates < budget.max_updates && runner.frames < budget.max_frames {
        runner.update()?;
        if runner.updates % every == 0 && on_progress(&runner.progress()) == Control::Stop {
            break;
        }
    }
    let progress = runner.progress();
    Ok((runner.into_params(), progress))
}
