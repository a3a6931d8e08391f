use alloc::vec::Vec;

use rand::Rng;

use crate::agent::Control;
use crate::envs::{Env, EnvConfig, Frame, GameState, ACTION_COUNT};
use crate::error::{contract, Result};
use crate::numerics::{derive_seed, rng_from_seed, Tensor};

use super::{gan_update, GanLosses, GanOptimizers, TranslatorPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

/// Frames of one domain, with the environment and seed that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDataset {
    pub domain: Domain,
    pub frames: Vec<Frame>,
    pub env: EnvConfig,
    pub seed: u64,
}

impl FrameDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame `i` as a batch of one.
    pub fn batch(&self, i: usize) -> Result<Tensor> {
        let f = &self.frames[i];
        let mut shape = alloc::vec![1];
        shape.extend_from_slice(f.shape());
        f.clone().reshape(shape)
    }
}

/// Plays uniformly random actions over repeated episodes and keeps the
/// states and frames seen, starting with each reset frame, until `count`.
pub fn collect_states(env: &EnvConfig, count: usize, seed: u64) -> Result<Vec<(GameState, Frame)>> {
    if count == 0 {
        return Err(contract("frame count must be positive"));
    }
    let mut e = Env::new(*env, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let mut out = Vec::with_capacity(count);
    out.push((e.state().clone(), e.frame().clone()));
    while out.len() < count {
        let t = e.step(rng.random_range(0..ACTION_COUNT))?;
        if t.terminal {
            e.reset()?;
        }
        out.push((e.state().clone(), e.frame().clone()));
    }
    Ok(out)
}

pub fn collect_frames(env: &EnvConfig, domain: Domain, count: usize, seed: u64) -> Result<FrameDataset> {
    let frames = collect_states(env, count, seed)?.into_iter().map(|(_, f)| f).collect();
    Ok(FrameDataset { domain, frames, env: *env, seed })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslatorConfig {
    pub iterations: u64,
    pub checkpoint_interval: u64,
    pub lambda_cyc: f32,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        TranslatorConfig { iterations: 20_000, checkpoint_interval: 1_000, lambda_cyc: 10.0, learning_rate: 1e-4, seed: 0 }
    }
}

/// Trains `pair` on uniformly drawn single frames from each dataset and hands
/// every `checkpoint_interval`-th state to `on_checkpoint(iteration, pair, losses)`.
pub fn train_translator(
    pair: &mut TranslatorPair,
    source: &FrameDataset,
    target: &FrameDataset,
    config: &TranslatorConfig,
    on_checkpoint: &mut dyn FnMut(u64, &TranslatorPair, &GanLosses) -> Result<Control>,
) -> Result<()> {
    if source.is_empty() || target.is_empty() {
        return Err(contract("translator datasets must be nonempty"));
    }
    if config.checkpoint_interval == 0 {
        return Err(contract("checkpoint interval must be positive"));
    }
    let mut opt = GanOptimizers::new(pair, crate::numerics::OptimizerKind::ADAM, config.learning_rate);
    let mut rng = rng_from_seed(config.seed);
    for it in 1..=config.iterations {
        let s = source.batch(rng.random_range(0..source.len()))?;
        let t = target.batch(rng.random_range(0..target.len()))?;
        let losses = gan_update(pair, &s, &t, &mut opt, config.lambda_cyc)?;
        if it % config.checkpoint_interval == 0 && on_checkpoint(it, pair, &losses)? == Control::Stop {
            break;
        }
    }
    Ok(())
}
