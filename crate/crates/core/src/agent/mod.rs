//! Feed-forward actor-critic: network, action selection, n-step targets,
//! the synchronous A2C loop and the layer-transfer settings.

mod a2c;
mod finetune;
mod returns;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::envs::{Env, EnvConfig, Frame, FrameStack, GameState, ACTION_COUNT, STACK};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{
    build_network, forward_sequential, sample_categorical, Architecture, Graph, Init, Layer, NetworkParams, Tensor,
};

pub use a2c::{a2c_gradients, a2c_update, train_a2c, A2cConfig, Budget, A2cLosses, A2cRunner, Control, LossWeights, Progress, UpdateBatch};
pub use finetune::{apply_finetune_setting, FinetuneSetting};
pub use returns::{nstep_returns, RolloutBatch};

/// Layers kept (and frozen) by the partial transfer settings.
pub const CONV_LAYERS: [&str; 3] = ["conv1", "conv2", "conv3"];
pub const OUTPUT_LAYERS: [&str; 2] = ["pi", "v"];

/// Size knobs of the policy network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyShape {
    /// Side of the square observation planes.
    pub obs_size: usize,
    pub channels: [usize; 3],
    pub hidden: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        PolicyShape { obs_size: 84, channels: [8, 16, 16], hidden: 128 }
    }
}

/// Three convolutions (8/4, 4/2, 3/1), a dense layer, and policy/value heads.
pub fn policy_architecture(shape: &PolicyShape) -> Result<Architecture> {
    let [c1, c2, c3] = shape.channels;
    let mut arch = Architecture {
        input: vec![STACK, shape.obs_size, shape.obs_size],
        layers: vec![Layer::conv("conv1", STACK, c1, 8, 4, 0), Layer::conv("conv2", c1, c2, 4, 2, 0), Layer::conv("conv3", c2, c3, 3, 1, 0)],
    };
    let shapes = arch.shapes()?;
    let flat: usize = shapes[2].iter().product();
    arch.layers.push(Layer::dense("fc", flat, shape.hidden));
    arch.layers.push(Layer::head("pi", shape.hidden, ACTION_COUNT));
    arch.layers.push(Layer::head("v", shape.hidden, 1));
    arch.shapes()?;
    Ok(arch)
}

/// Orthogonal weights with the usual actor-critic gains: √2 in the trunk,
/// 0.01 on the policy logits, 1 on the value.
pub fn init_policy(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    let mut params = build_network(arch, Init::Orthogonal, seed)?;
    for layer in &arch.layers {
        let gain = match layer.name() {
            "pi" => 0.01,
            "v" => 1.0,
            _ => core::f32::consts::SQRT_2,
        };
        let w = params
            .get_mut(&crate::numerics::weight_name(layer.name()))
            .ok_or_else(|| Error::Config(format!("no weight for `{}`", layer.name())))?;
        w.data_mut().iter_mut().for_each(|v| *v *= gain);
    }
    Ok(params)
}

/// π(·|s) and V(s) for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f32>,
    pub value: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActMode {
    Deterministic,
    Stochastic,
}

/// Evaluates the network on `obs: [batch, STACK, size, size]`.
pub fn policy_forward(arch: &Architecture, params: &NetworkParams, obs: &Tensor) -> Result<Vec<PolicyOutput>> {
    if obs.shape().get(1..) != Some(arch.input.as_slice()) {
        return Err(shape_err(format!("observation {:?} does not match network input {:?}", obs.shape(), arch.input)));
    }
    let mut g = Graph::new();
    let bound = params.bind_constant(&mut g);
    let x = g.input(obs.clone());
    let heads = forward_sequential(&mut g, &bound, arch, x)?;
    let probs = g.softmax(heads[0]);
    let (p, v) = (g.value(probs), g.value(heads[1]));
    if !p.is_finite() || !v.is_finite() {
        return Err(Error::NumericalFailure { tensor: "policy".into() });
    }
    Ok((0..p.rows()).map(|r| PolicyOutput { probs: p.row(r).to_vec(), value: v.data()[r] }).collect())
}

/// Argmax with ties resolved to the lowest index, or a draw from `probs`.
pub fn select_action<R: Rng + ?Sized>(probs: &[f32], mode: ActMode, rng: &mut R) -> Result<usize> {
    if probs.is_empty() || probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NumericalFailure { tensor: "policy".into() });
    }
    Ok(match mode {
        ActMode::Deterministic => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        ActMode::Stochastic => sample_categorical(rng, probs),
    })
}

/// Chooses an action for a single observation `[STACK, size, size]`.
pub fn act<R: Rng + ?Sized>(
    arch: &Architecture,
    params: &NetworkParams,
    obs: &Tensor,
    mode: ActMode,
    rng: &mut R,
) -> Result<(usize, PolicyOutput)> {
    let mut shape = vec![1];
    shape.extend_from_slice(obs.shape());
    let batch = obs.clone().reshape(shape)?;
    let out = policy_forward(arch, params, &batch)?.remove(0);
    let a = select_action(&out.probs, mode, rng)?;
    Ok((a, out))
}

/// Per-episode outcome of [`play_episodes`].
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub score: f32,
    pub length: u64,
}

/// Rewrites the rendered frame before preprocessing (e.g. a translator).
pub type FrameMap<'a> = dyn FnMut(&GameState, &Frame) -> Result<Frame> + 'a;

/// Plays `episodes` episodes of `env_config` with the policy, seeding the
/// environment and the action sampler from `seed`. Every rendered frame goes
/// through `map` before it reaches the policy; rewards are the environment's.
#[allow(clippy::too_many_arguments)]
pub fn play_episodes(
    arch: &Architecture,
    params: &NetworkParams,
    env_config: &EnvConfig,
    episodes: usize,
    mode: ActMode,
    seed: u64,
    map: &mut FrameMap<'_>,
) -> Result<Vec<EpisodeRecord>> {
    let obs_size = arch.input[1];
    let mut env = Env::new(*env_config, seed)?;
    let mut rng = crate::numerics::rng_from_seed(crate::numerics::derive_seed(seed, u64::MAX));
    let mut stack = FrameStack::new(obs_size);
    let mut out = Vec::with_capacity(episodes);
    for e in 0..episodes {
        if e > 0 {
            env.reset()?;
        }
        stack.reset(&map(env.state(), env.frame())?)?;
        let mut length = 0;
        loop {
            let (a, _) = act(arch, params, &stack.observation(), mode, &mut rng)?;
            let t = env.step(a)?;
            length += 1;
            if t.terminal {
                break;
            }
            stack.push(&map(env.state(), &t.frame)?)?;
        }
        out.push(EpisodeRecord { score: env.score(), length });
    }
    Ok(out)
}

/// Mean score of a uniformly random policy over `episodes` episodes.
pub fn random_baseline(env_config: &EnvConfig, episodes: usize, seed: u64) -> Result<f32> {
    let mut env = Env::new(*env_config, seed)?;
    let mut rng = crate::numerics::rng_from_seed(crate::numerics::derive_seed(seed, u64::MAX));
    let mut total = 0.0;
    for e in 0..episodes {
        if e > 0 {
            env.reset()?;
        }
        while !env.step(rng.random_range(0..ACTION_COUNT))?.terminal {}
        total += env.score();
    }
    Ok(total / episodes.max(1) as f32)
}
