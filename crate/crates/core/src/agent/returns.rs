use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};

/// One synchronous rollout, stored time-major: entry `t * workers + w` is
/// worker `w` at step `t`. `dones[i]` marks that the episode ended on that
/// step, after its reward was paid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub workers: usize,
    pub steps: usize,
    /// Flattened observations, `steps · workers` rows of `obs_len` values.
    pub observations: Vec<f32>,
    pub obs_len: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    /// V(s_{t+n}) for every worker.
    pub bootstrap: Vec<f32>,
}

impl RolloutBatch {
    pub fn check(&self) -> Result<()> {
        let n = self.workers * self.steps;
        if self.actions.len() != n
            || self.rewards.len() != n
            || self.dones.len() != n
            || self.bootstrap.len() != self.workers
            || self.observations.len() != n * self.obs_len
        {
            return Err(contract("rollout batch is not rectangular"));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(contract("non-finite reward in rollout"));
        }
        Ok(())
    }
}

/// `V_t^n = Σ_d γ^d r_{t+d} + γ^{n−t} V(s_n)`, cut at episode ends.
pub fn nstep_returns(batch: &RolloutBatch, gamma: f32) -> Result<Vec<f32>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(contract("discount must lie in (0, 1]"));
    }
    batch.check()?;
    let w = batch.workers;
    let mut out = vec![0.0; w * batch.steps];
    for worker in 0..w {
        // accumulate in double so long rollouts round only once
        let mut acc = batch.bootstrap[worker] as f64;
        for t in (0..batch.steps).rev() {
            let i = t * w + worker;
            if batch.dones[i] {
                acc = 0.0;
            }
            acc = batch.rewards[i] as f64 + gamma as f64 * acc;
            out[i] = acc as f32;
        }
    }
    Ok(out)
}
