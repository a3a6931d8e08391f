use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Grads, NetworkParams};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    RmsProp { decay: f64, eps: f64 },
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const RMSPROP: OptimizerKind = OptimizerKind::RmsProp { decay: 0.99, eps: 1e-5 };
    pub const SGD_MOMENTUM: OptimizerKind = OptimizerKind::SgdMomentum { momentum: 0.9 };
    pub const ADAM: OptimizerKind = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };

    fn slots(&self) -> usize {
        match self {
            OptimizerKind::Adam { .. } => 2,
            _ => 1,
        }
    }
}

/// Per-tensor accumulators of a stochastic optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub steps: u64,
    accumulators: BTreeMap<String, Vec<Tensor<T>>>,
}

impl<T: Real> OptimizerState<T> {
    /// Zeroed accumulators for every non-frozen tensor of `params`.
    pub fn new(kind: OptimizerKind, lr: f64, params: &NetworkParams<T>) -> Self {
        let accumulators = params
            .iter()
            .filter(|e| !e.frozen)
            .map(|e| (e.name.clone(), vec![Tensor::zeros(e.tensor.shape().to_vec()); kind.slots()]))
            .collect();
        OptimizerState { kind, lr, steps: 0, accumulators }
    }

    pub fn rmsprop(lr: f64, params: &NetworkParams<T>) -> Self {
        Self::new(OptimizerKind::RMSPROP, lr, params)
    }

    pub fn sgd_momentum(lr: f64, params: &NetworkParams<T>) -> Self {
        Self::new(OptimizerKind::SGD_MOMENTUM, lr, params)
    }

    pub fn adam(lr: f64, params: &NetworkParams<T>) -> Self {
        Self::new(OptimizerKind::ADAM, lr, params)
    }

    pub fn accumulator(&self, name: &str) -> Option<&[Tensor<T>]> {
        self.accumulators.get(name).map(Vec::as_slice)
    }

    pub fn remove_accumulator(&mut self, name: &str) -> bool {
        self.accumulators.remove(name).is_some()
    }

    /// Applies one update. Every gradient must name a non-frozen tensor that
    /// has accumulators; frozen tensors are never written.
    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &Grads<T>) -> Result<()> {
        for (name, g) in grads {
            let entry = params.entry(name).ok_or_else(|| contract(format!("gradient for unknown tensor `{name}`")))?;
            if entry.frozen {
                return Err(contract(format!("gradient supplied for frozen tensor `{name}`")));
            }
            if entry.tensor.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!("gradient for `{name}`")));
            }
            let acc = self.accumulators.get(name).ok_or_else(|| Error::StateCorruption(name.clone()))?;
            if acc.iter().any(|a| a.shape() != g.shape()) {
                return Err(Error::StateCorruption(name.clone()));
            }
        }
        self.steps += 1;
        let lr = T::of(self.lr);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked").data_mut();
            let acc = self.accumulators.get_mut(name).expect("checked");
            match self.kind {
                OptimizerKind::RmsProp { decay, eps } => {
                    let (decay, eps) = (T::of(decay), T::of(eps));
                    let sq = acc[0].data_mut();
                    for ((p, s), &g) in p.iter_mut().zip(sq.iter_mut()).zip(g.data()) {
                        *s = decay * *s + (T::one() - decay) * g * g;
                        *p -= lr * g / (s.sqrt() + eps);
                    }
                }
                OptimizerKind::SgdMomentum { momentum } => {
                    let m = T::of(momentum);
                    let vel = acc[0].data_mut();
                    for ((p, v), &g) in p.iter_mut().zip(vel.iter_mut()).zip(g.data()) {
                        *v = m * *v + g;
                        *p -= lr * *v;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.steps as i32;
                    let c1 = T::of(1.0 - beta1.powi(t));
                    let c2 = T::of(1.0 - beta2.powi(t));
                    let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
                    let (m_acc, v_acc) = acc.split_at_mut(1);
                    let (m, v) = (m_acc[0].data_mut(), v_acc[0].data_mut());
                    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
