mod common;

use common::oracles::brute_returns;
use proptest::prelude::*;
use transferlab_core::agent::{
    init_policy, policy_architecture, policy_forward, A2cConfig, ActMode, Budget, Control, PolicyShape,
};
use transferlab_core::envs::{BreakoutVariant, EnvConfig};
use transferlab_core::error::Error;
use transferlab_core::imitation::{
    collect_demonstrations, compute_returns, il_gradients, measure_reference_score, pretrain, train_il, DemoBuffer,
    GateState, IlBatch, IlConfig,
};
use transferlab_core::numerics::{grad_norm, Architecture, Layer, NetworkParams, Tensor};
use transferlab_core::transfer::{eval_with_translation, Translator};

fn linear_heads() -> Architecture {
    Architecture { input: vec![3], layers: vec![Layer::head("pi", 3, 3), Layer::head("v", 3, 1)] }
}

fn linear_params(pi_b: [f32; 3], v_b: f32) -> NetworkParams {
    let mut p = NetworkParams::new();
    p.insert("pi.w", Tensor::zeros([3, 3])).unwrap();
    p.insert("pi.b", Tensor::new([3], pi_b.to_vec()).unwrap()).unwrap();
    p.insert("v.w", Tensor::zeros([1, 3])).unwrap();
    p.insert("v.b", Tensor::new([1], vec![v_b]).unwrap()).unwrap();
    p
}

fn one(action: usize, ret: f32) -> IlBatch {
    IlBatch { observations: Tensor::zeros([1, 3]), actions: vec![action], returns: vec![ret] }
}

fn small() -> (Architecture, NetworkParams) {
    let arch = policy_architecture(&PolicyShape { obs_size: 42, channels: [4, 8, 8], hidden: 16 }).unwrap();
    let params = init_policy(&arch, 1).unwrap();
    (arch, params)
}

#[test]
fn policy_term_matches_the_hand_value() {
    let params = linear_params([0.5f32.ln(), 0.25f32.ln(), 0.25f32.ln()], 2.0);
    let (l, _) = il_gradients(&linear_heads(), &params, &one(0, 2.0)).unwrap();
    let want = -(0.5f64.ln() + 2.0 * 0.75f64.ln()) / 3.0;
    assert!((l.policy as f64 - want).abs() < 1e-5, "{} vs {want}", l.policy);
    assert!((l.policy - 0.4228).abs() < 1e-4);
    assert_eq!(l.value, 0.0);
}

#[test]
fn value_term_is_half_squared_error() {
    let params = linear_params([0.0; 3], 1.0);
    let (l, _) = il_gradients(&linear_heads(), &params, &one(1, 4.0)).unwrap();
    assert!((l.value - 4.5).abs() < 1e-6);
    assert!((l.total - (l.policy + l.value)).abs() < 1e-6);
}

#[test]
fn perfect_fit_has_zero_gradient() {
    let params = linear_params([40.0, 0.0, 0.0], 3.0);
    let (l, grads) = il_gradients(&linear_heads(), &params, &one(0, 3.0)).unwrap();
    assert_eq!(grad_norm(&grads), 0.0);
    assert!(l.policy < 1e-6);
}

#[test]
fn bad_batches_are_rejected() {
    let params = linear_params([0.0; 3], 0.0);
    let arch = linear_heads();
    assert!(il_gradients(&arch, &params, &one(3, 0.0)).is_err());
    let b = IlBatch { observations: Tensor::zeros([2, 3]), actions: vec![0], returns: vec![0.0] };
    assert!(il_gradients(&arch, &params, &b).is_err());
}

#[test]
fn returns_small_example() {
    assert_eq!(compute_returns(&[1.0, 0.0, 2.0], 0.5).unwrap(), [1.5, 1.0, 2.0]);
    assert!(compute_returns(&[], 0.9).unwrap().is_empty());
    assert!(compute_returns(&[1.0], 0.0).is_err());
    assert!(compute_returns(&[1.0], 1.5).is_err());
}

proptest! {
    #[test]
    fn returns_match_the_brute_force_sum(rewards in prop::collection::vec(-5.0f32..5.0, 0..40), gamma in 0.01f32..=1.0) {
        let got = compute_returns(&rewards, gamma).unwrap();
        let want = brute_returns(&rewards.iter().map(|&r| r as f64).collect::<Vec<_>>(), gamma as f64);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((*g as f64 - w).abs() <= 1e-4 * w.abs().max(1.0));
        }
    }
}

#[test]
fn gate_scan() {
    let gate = GateState::new(10.0);
    for index in 0..1000u64 {
        for r in [0.0f32, 5.9, 6.0, 6.1, 100.0] {
            let expect = index % 100 == 0 && r < 6.0;
            assert_eq!(gate.off_policy_due(index, r), expect, "index {index} r {r}");
        }
    }
    assert!(!gate.keeps(7.5));
    assert!(gate.keeps(7.6));
    let zero = GateState::new(0.0);
    assert!((0..1000).all(|i| !zero.off_policy_due(i, -1.0)));
    assert!(!zero.keeps(0.0));
    assert!(zero.keeps(0.1));
    assert!(matches!(GateState { beta1: 1.5, ..gate }.validate(), Err(Error::Config(_))));
    assert!(GateState { op_interval: 0, ..gate }.validate().is_err());
}

#[test]
fn reference_score_is_one_deterministic_episode() {
    let (arch, params) = small();
    let env = EnvConfig::breakout(BreakoutVariant::Diagonals).with_max_steps(200);
    let r = measure_reference_score(&arch, &params, Translator::Oracle, &env, 4).unwrap();
    let e = eval_with_translation(&arch, &params, Translator::Oracle, &env, 1, ActMode::Deterministic, 4).unwrap();
    assert_eq!(r, e.mean);
}

#[test]
fn collected_buffer_holds_only_qualifying_trajectories() {
    let (arch, params) = small();
    let env = EnvConfig::road(2).with_max_steps(150);
    let gate = GateState::new(3.0);
    let c = collect_demonstrations(&arch, &params, Translator::Oracle, &env, 12, &gate, 0.99, 5).unwrap();
    assert_eq!(c.scores.len(), 12);
    let mut expected = 0;
    for ((s, k), n) in c.scores.iter().zip(&c.kept).zip(&c.lengths) {
        assert_eq!(*k, *s > 0.75 * 3.0);
        expected += if *k { *n } else { 0 };
    }
    assert_eq!(c.buffer.len(), expected);
    assert_eq!(c.buffer.observations.len(), expected);
    assert_eq!(c.buffer.returns.len(), expected);
    assert_eq!(c.buffer.reference, 3.0);
    assert_eq!(c.frames, c.lengths.iter().sum::<usize>() as u64);
    assert!(c.buffer.observations.iter().all(|o| o.shape() == [4, 42, 42]));

    let strict = GateState::new(1e9);
    let none = collect_demonstrations(&arch, &params, Translator::Oracle, &env, 3, &strict, 0.99, 5).unwrap();
    assert!(none.all_filtered());
}

#[test]
fn pretraining_edge_cases() {
    let (arch, params) = small();
    let empty = DemoBuffer::default();
    assert!(matches!(pretrain(&arch, params.clone(), &empty, &IlConfig::default()), Err(Error::Contract(_))));
    let env = EnvConfig::road(1).with_max_steps(30);
    let c = collect_demonstrations(&arch, &params, Translator::Identity, &env, 1, &GateState::new(0.0), 0.99, 1).unwrap();
    let cfg = IlConfig { supervised_iterations: 0, ..Default::default() };
    assert_eq!(pretrain(&arch, params.clone(), &c.buffer, &cfg).unwrap(), params);
}

#[test]
fn pretraining_overfits_a_tiny_buffer() {
    let (arch, params) = small();
    let env = EnvConfig::road(1).with_max_steps(30);
    let c = collect_demonstrations(&arch, &params, Translator::Identity, &env, 1, &GateState::new(0.0), 0.99, 1).unwrap();
    let mut buf = c.buffer.clone();
    buf.observations.truncate(4);
    buf.actions = vec![0, 1, 2, 1];
    buf.returns = vec![1.0, 0.5, -0.5, 0.0];
    let all = buf.batch(&[0, 1, 2, 3]).unwrap();
    let (before, _) = il_gradients(&arch, &params, &all).unwrap();
    let cfg = IlConfig { supervised_iterations: 1500, learning_rate: 0.01, ..Default::default() };
    let trained = pretrain(&arch, params, &buf, &cfg).unwrap();
    let (after, _) = il_gradients(&arch, &trained, &all).unwrap();
    assert!(after.total < 0.25 * before.total, "{before:?} -> {after:?}");
    let out = policy_forward(&arch, &trained, &all.observations).unwrap();
    for (o, &a) in out.iter().zip(&buf.actions) {
        let best = (0..3).max_by(|&i, &j| o.probs[i].total_cmp(&o.probs[j])).unwrap();
        assert_eq!(best, a);
    }
}

#[test]
fn off_policy_updates_follow_the_gate() {
    let (arch, params) = small();
    let env = EnvConfig::road(1).with_max_steps(40);
    let c = collect_demonstrations(&arch, &params, Translator::Identity, &env, 1, &GateState::new(0.0), 0.99, 2).unwrap();
    let a2c = A2cConfig { workers: 2, n_steps: 5, ..Default::default() };
    let budget = Budget { max_updates: 7, max_frames: u64::MAX, report_every: 1 };
    let eager = GateState { op_interval: 2, ..GateState::new(1e9) };
    let out = train_il(&env, arch.clone(), params.clone(), &c.buffer, &eager, a2c, &IlConfig::default(), budget, &mut |_| Control::Continue).unwrap();
    assert_eq!(out.off_policy_updates, [2, 4, 6]);
    assert_eq!(out.progress.updates, 7);

    let satisfied = GateState { op_interval: 2, ..GateState::new(-1e9) };
    let out = train_il(&env, arch.clone(), params.clone(), &c.buffer, &satisfied, a2c, &IlConfig::default(), budget, &mut |_| Control::Continue).unwrap();
    assert!(out.off_policy_updates.is_empty());

    let empty = DemoBuffer::default();
    assert!(train_il(&env, arch, params, &empty, &eager, a2c, &IlConfig::default(), budget, &mut |_| Control::Continue).is_err());
}
