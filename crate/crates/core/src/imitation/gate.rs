use crate::error::{Error, Result};

/// Filter and off-policy switch driven by the reference score `R_T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateState {
    /// Trajectories must score above `beta1 · reference`.
    pub beta1: f32,
    /// Off-policy updates run while the agent's mean reward is below `beta2 · reference`.
    pub beta2: f32,
    pub reference: f32,
    /// Updates between off-policy opportunities.
    pub op_interval: u64,
}

impl GateState {
    pub fn new(reference: f32) -> Self {
        GateState { beta1: 0.75, beta2: 0.6, reference, op_interval: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f32| b > 0.0 && b <= 1.0;
        if !unit(self.beta1) || !unit(self.beta2) || self.op_interval == 0 || !self.reference.is_finite() {
            return Err(Error::Config("gate needs β₁, β₂ in (0, 1], a positive interval and a finite reference".into()));
        }
        Ok(())
    }

    /// Whether a trajectory with total `score` enters the buffer. A zero
    /// reference admits only strictly positive scores.
    pub fn keeps(&self, score: f32) -> bool {
        if self.reference == 0.0 {
            score > 0.0
        } else {
            score > self.beta1 * self.reference
        }
    }

    /// Whether update `index` is followed by an off-policy batch given the
    /// agent's current mean reward. Disabled for a zero reference.
    pub fn off_policy_due(&self, index: u64, mean_reward: f32) -> bool {
        self.reference != 0.0 && index % self.op_interval == 0 && mean_reward < self.beta2 * self.reference
    }
}
