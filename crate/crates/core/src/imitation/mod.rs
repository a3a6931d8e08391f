//! Imitation from imperfect demonstrations: trajectories gathered through a
//! translator, filtered by score against a deterministic reference run, then
//! used for supervised pretraining and gated off-policy updates during A2C.

mod gate;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::agent::{act, A2cConfig, A2cRunner, ActMode, Budget, Control, Progress};
use crate::envs::{Env, EnvConfig, FrameStack, ACTION_COUNT};
use crate::error::{contract, Error, Result};
use crate::numerics::{
    derive_seed, forward_sequential, rng_from_seed, Architecture, Graph, Grads, LabRng, NetworkParams, OptimizerKind,
    OptimizerState, Tensor,
};
use crate::transfer::{eval_with_translation, Translator};

pub use gate::GateState;

/// One played episode: raw target observations, actions and rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Tensor>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub score: f32,
    pub stochastic: bool,
}

/// `(observation, action, return)` triples kept for imitation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoBuffer {
    pub observations: Vec<Tensor>,
    pub actions: Vec<usize>,
    pub returns: Vec<f32>,
    /// Score of the deterministic reference run the filter used.
    pub reference: f32,
}

impl DemoBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push_trajectory(&mut self, t: &Trajectory, gamma: f32) -> Result<()> {
        let returns = compute_returns(&t.rewards, gamma)?;
        self.observations.extend(t.observations.iter().cloned());
        self.actions.extend_from_slice(&t.actions);
        self.returns.extend(returns);
        Ok(())
    }

    /// Stacks the listed triples into an update batch.
    pub fn batch(&self, indices: &[usize]) -> Result<IlBatch> {
        let obs: Vec<&Tensor> = indices.iter().map(|&i| &self.observations[i]).collect();
        Ok(IlBatch {
            observations: Tensor::stack(&obs)?,
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            returns: indices.iter().map(|&i| self.returns[i]).collect(),
        })
    }

    /// `size` triples drawn uniformly with replacement.
    pub fn sample(&self, size: usize, rng: &mut LabRng) -> Result<IlBatch> {
        if self.is_empty() {
            return Err(contract("demonstration buffer is empty"));
        }
        let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.len())).collect();
        self.batch(&idx)
    }
}

/// `R_t = Σ_{k ≥ t} γ^{k−t} r_k`.
pub fn compute_returns(rewards: &[f32], gamma: f32) -> Result<Vec<f32>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(contract("discount must lie in (0, 1]"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0f64;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r as f64 + gamma as f64 * acc;
        *o = acc as f32;
    }
    Ok(out)
}

/// Score of one deterministic episode through `translator`.
pub fn measure_reference_score(
    arch: &Architecture,
    params: &NetworkParams,
    translator: Translator<'_>,
    env: &EnvConfig,
    seed: u64,
) -> Result<f32> {
    Ok(eval_with_translation(arch, params, translator, env, 1, ActMode::Deterministic, seed)?.mean)
}

/// Plays one episode acting on translated frames while recording the raw
/// (untranslated) observations.
pub fn play_trajectory(
    arch: &Architecture,
    params: &NetworkParams,
    translator: Translator<'_>,
    env: &mut Env,
    mode: ActMode,
    rng: &mut LabRng,
) -> Result<Trajectory> {
    let size = arch.input[1];
    let cfg = *env.config();
    let (mut raw, mut seen) = (FrameStack::new(size), FrameStack::new(size));
    raw.reset(env.frame())?;
    seen.reset(&translator.apply(&cfg, env.state(), env.frame())?)?;
    let mut t = Trajectory { observations: Vec::new(), actions: Vec::new(), rewards: Vec::new(), score: 0.0, stochastic: mode == ActMode::Stochastic };
    loop {
        let (a, _) = act(arch, params, &seen.observation(), mode, rng)?;
        t.observations.push(raw.observation());
        t.actions.push(a);
        let step = env.step(a)?;
        t.rewards.push(step.reward);
        if step.terminal {
            break;
        }
        raw.push(&step.frame)?;
        seen.push(&translator.apply(&cfg, env.state(), &step.frame)?)?;
    }
    t.score = t.rewards.iter().sum();
    Ok(t)
}

/// Result of [`collect_demonstrations`].
#[derive(Clone, Debug, PartialEq)]
pub struct DemoCollection {
    pub buffer: DemoBuffer,
    /// Score of every trajectory played, in order.
    pub scores: Vec<f32>,
    pub kept: Vec<bool>,
    /// Length of every trajectory played.
    pub lengths: Vec<usize>,
    /// Environment steps spent.
    pub frames: u64,
}

impl DemoCollection {
    /// True when every trajectory was filtered out.
    pub fn all_filtered(&self) -> bool {
        self.buffer.is_empty()
    }
}

/// Plays `trajectories` stochastic episodes through `translator` and keeps
/// those scoring strictly above `β₁·R_T`.
#[allow(clippy::too_many_arguments)]
pub fn collect_demonstrations(
    arch: &Architecture,
    params: &NetworkParams,
    translator: Translator<'_>,
    env: &EnvConfig,
    trajectories: usize,
    gate: &GateState,
    gamma: f32,
    seed: u64,
) -> Result<DemoCollection> {
    if trajectories == 0 {
        return Err(contract("need at least one trajectory"));
    }
    gate.validate()?;
    let mut e = Env::new(*env, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let mut out = DemoCollection {
        buffer: DemoBuffer { reference: gate.reference, ..Default::default() },
        scores: Vec::new(),
        kept: Vec::new(),
        lengths: Vec::new(),
        frames: 0,
    };
    for i in 0..trajectories {
        if i > 0 {
            e.reset()?;
        }
        let t = play_trajectory(arch, params, translator, &mut e, ActMode::Stochastic, &mut rng)?;
        out.frames += t.actions.len() as u64;
        let keep = gate.keeps(t.score);
        if keep {
            out.buffer.push_trajectory(&t, gamma)?;
        }
        out.scores.push(t.score);
        out.kept.push(keep);
        out.lengths.push(t.actions.len());
    }
    Ok(out)
}

/// Demonstration minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct IlBatch {
    pub observations: Tensor,
    pub actions: Vec<usize>,
    pub returns: Vec<f32>,
}

/// Clamp keeping the log terms of the imitation loss finite.
pub const PROB_EPS: f32 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IlLosses {
    /// Mean over the batch of −(1/|A|) Σ_k [a_k ln â_k + (1 − a_k) ln(1 − â_k)].
    pub policy: f32,
    /// Mean of ½ (R − V)².
    pub value: f32,
    pub total: f32,
    pub grad_norm: f64,
}

/// Imitation loss and its gradients.
pub fn il_gradients(arch: &Architecture, params: &NetworkParams, batch: &IlBatch) -> Result<(IlLosses, Grads)> {
    let n = batch.actions.len();
    if n == 0 || batch.returns.len() != n || batch.observations.rows() != n {
        return Err(contract("imitation batch sizes disagree"));
    }
    let mut onehot = vec![0.0; n * ACTION_COUNT];
    for (i, &a) in batch.actions.iter().enumerate() {
        if a >= ACTION_COUNT {
            return Err(contract("action outside the action set"));
        }
        onehot[i * ACTION_COUNT + a] = 1.0;
    }
    let inv_n = 1.0 / n as f32;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.input(batch.observations.clone());
    let heads = forward_sequential(&mut g, &bound, arch, x)?;
    let probs = g.softmax(heads[0]);
    let p = g.clamp(probs, PROB_EPS, 1.0 - PROB_EPS);
    let log_p = g.log(p);
    let neg_p = g.scale(p, -1.0);
    let one_minus = g.add_scalar(neg_p, 1.0);
    let log_q = g.log(one_minus);
    let a = g.input(Tensor::new([n, ACTION_COUNT], onehot.clone())?);
    let not_a = g.input(Tensor::new([n, ACTION_COUNT], onehot.iter().map(|v| 1.0 - v).collect())?);
    let pos = g.mul(a, log_p)?;
    let neg = g.mul(not_a, log_q)?;
    let ll = g.add(pos, neg)?;
    let ll_sum = g.sum(ll);
    let policy = g.scale(ll_sum, -inv_n / ACTION_COUNT as f32);

    let r = g.input(Tensor::new([n, 1], batch.returns.clone())?);
    let d = g.sub(r, heads[1])?;
    let sq = g.square(d);
    let sq_sum = g.sum(sq);
    let value = g.scale(sq_sum, 0.5 * inv_n);
    let total = g.add(policy, value)?;
    let losses = IlLosses { policy: g.scalar(policy), value: g.scalar(value), total: g.scalar(total), grad_norm: 0.0 };
    if !losses.total.is_finite() {
        return Err(Error::NumericalFailure { tensor: "imitation loss".into() });
    }
    let mut grads = g.backward(total)?;
    let grads = bound.collect(&mut grads);
    Ok((IlLosses { grad_norm: crate::numerics::grad_norm(&grads), ..losses }, grads))
}

/// One optimizer step on the imitation loss.
pub fn il_update(arch: &Architecture, params: &mut NetworkParams, optimizer: &mut OptimizerState, batch: &IlBatch) -> Result<IlLosses> {
    let (losses, grads) = il_gradients(arch, params, batch)?;
    optimizer.step(params, &grads)?;
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NumericalFailure { tensor: name.into() });
    }
    Ok(losses)
}

/// Off-policy update settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub supervised_iterations: u64,
    pub seed: u64,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig { batch_size: 4, learning_rate: 0.0007, momentum: 0.9, supervised_iterations: 500, seed: 0 }
    }
}

impl IlConfig {
    pub fn optimizer(&self, params: &NetworkParams) -> OptimizerState {
        OptimizerState::new(OptimizerKind::SgdMomentum { momentum: self.momentum }, self.learning_rate, params)
    }
}

/// Supervised training on uniformly drawn demonstration batches.
pub fn pretrain(arch: &Architecture, mut params: NetworkParams, buffer: &DemoBuffer, config: &IlConfig) -> Result<NetworkParams> {
    if buffer.is_empty() {
        return Err(contract("cannot pretrain on an empty demonstration buffer"));
    }
    let mut opt = config.optimizer(&params);
    let mut rng = rng_from_seed(derive_seed(config.seed, 0x11));
    for _ in 0..config.supervised_iterations {
        let batch = buffer.sample(config.batch_size, &mut rng)?;
        il_update(arch, &mut params, &mut opt, &batch)?;
    }
    Ok(params)
}

/// Outcome of [`train_il`].
#[derive(Clone, Debug, PartialEq)]
pub struct IlOutcome {
    pub params: NetworkParams,
    pub progress: Progress,
    /// Update indices at which an off-policy batch was applied.
    pub off_policy_updates: Vec<u64>,
}

/// A2C from `params`, with one demonstration batch after every update whose
/// index the gate selects.
pub fn train_il(
    env: &EnvConfig,
    arch: Architecture,
    params: NetworkParams,
    buffer: &DemoBuffer,
    gate: &GateState,
    a2c: A2cConfig,
    il: &IlConfig,
    budget: Budget,
    on_progress: &mut dyn FnMut(&Progress) -> Control,
) -> Result<IlOutcome> {
    gate.validate()?;
    if buffer.is_empty() {
        return Err(contract("train_il needs a nonempty demonstration buffer"));
    }
    let mut opt = il.optimizer(&params);
    let mut rng = rng_from_seed(derive_seed(il.seed, 0x12));
    let mut runner = A2cRunner::new(env, arch, params, a2c)?;
    let mut off = Vec::new();
    let every = budget.report_every.max(1);
    loop {
        let p = runner.progress();
        if p.updates >= budget.max_updates || p.frames >= budget.max_frames {
            break;
        }
        runner.update()?;
        let p = runner.progress();
        if gate.off_policy_due(p.updates, p.mean_reward) {
            let batch = buffer.sample(il.batch_size, &mut rng)?;
            let (arch, params) = runner.parts_mut();
            il_update(arch, params, &mut opt, &batch)?;
            off.push(p.updates);
        }
        if p.updates % every == 0 && on_progress(&p) == Control::Stop {
            break;
        }
    }
    let progress = runner.progress();
    Ok(IlOutcome { params: runner.into_params(), progress, off_policy_updates: off })
}
