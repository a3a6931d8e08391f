mod common;

use common::oracles::brute_nstep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transferlab_core::agent::*;
use transferlab_core::envs::{BreakoutVariant, EnvConfig};
use transferlab_core::numerics::{rng_from_seed, Architecture, Init, Layer, NetworkParams, OptimizerState, Tensor};

fn small_shape() -> PolicyShape {
    PolicyShape { obs_size: 42, channels: [4, 8, 8], hidden: 16 }
}

#[test]
fn deterministic_mode_takes_argmax_with_low_tie_break() {
    let mut rng = rng_from_seed(0);
    assert_eq!(select_action(&[0.2, 0.5, 0.3], ActMode::Deterministic, &mut rng).unwrap(), 1);
    assert_eq!(select_action(&[0.5, 0.5, 0.0], ActMode::Deterministic, &mut rng).unwrap(), 0);
    assert!(select_action(&[f32::NAN, 0.5, 0.5], ActMode::Deterministic, &mut rng).is_err());
}

#[test]
fn stochastic_mode_matches_the_distribution() {
    let mut rng = rng_from_seed(11);
    let probs = [0.2, 0.5, 0.3];
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        counts[select_action(&probs, ActMode::Stochastic, &mut rng).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        assert!((*c as f32 / 10_000.0 - p).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn policy_output_is_a_simplex() {
    let arch = policy_architecture(&small_shape()).unwrap();
    let params = init_policy(&arch, 4).unwrap();
    let obs = Tensor::new([2, 4, 42, 42], (0..2 * 4 * 42 * 42).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
    for o in policy_forward(&arch, &params, &obs).unwrap() {
        assert!(o.probs.iter().all(|&p| p >= 0.0));
        assert!((o.probs.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(o.value.is_finite());
    }
    let wrong = Tensor::zeros([1, 4, 40, 40]);
    assert!(policy_forward(&arch, &params, &wrong).is_err());
}

fn batch(rewards: &[f32], dones: &[bool], bootstrap: f32) -> RolloutBatch {
    RolloutBatch {
        workers: 1,
        steps: rewards.len(),
        observations: vec![0.0; rewards.len()],
        obs_len: 1,
        actions: vec![0; rewards.len()],
        rewards: rewards.to_vec(),
        dones: dones.to_vec(),
        bootstrap: vec![bootstrap],
    }
}

#[test]
fn nstep_examples() {
    let zero = nstep_returns(&batch(&[0.0; 3], &[false; 3], 0.0), 0.99).unwrap();
    assert_eq!(zero, vec![0.0; 3]);
    let boot = nstep_returns(&batch(&[0.0; 3], &[false; 3], 1.0), 0.99).unwrap();
    assert!((boot[0] - 0.99f32.powi(3)).abs() < 1e-6);
    let cut = nstep_returns(&batch(&[1.0, 2.0, 4.0], &[false, true, false], 8.0), 0.9).unwrap();
    assert!((cut[0] - (1.0 + 0.9 * 2.0)).abs() < 1e-6);
    assert!((cut[2] - (4.0 + 0.9 * 8.0)).abs() < 1e-6);
    assert!(nstep_returns(&batch(&[0.0], &[false], 0.0), 0.0).is_err());
}

#[test]
fn nstep_matches_brute_force_on_multi_worker_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (w, n) = (rng.random_range(1..5), rng.random_range(1..25));
        let rewards: Vec<f32> = (0..w * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..w * n).map(|_| rng.random_bool(0.15)).collect();
        let bootstrap: Vec<f32> = (0..w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = RolloutBatch {
            workers: w,
            steps: n,
            observations: vec![0.0; w * n],
            obs_len: 1,
            actions: vec![0; w * n],
            rewards: rewards.clone(),
            dones: dones.clone(),
            bootstrap: bootstrap.clone(),
        };
        let got = nstep_returns(&b, 0.97).unwrap();
        for worker in 0..w {
            let r: Vec<f64> = (0..n).map(|t| rewards[t * w + worker] as f64).collect();
            let d: Vec<bool> = (0..n).map(|t| dones[t * w + worker]).collect();
            let want = brute_nstep(&r, &d, bootstrap[worker] as f64, 0.97);
            for t in 0..n {
                assert!((got[t * w + worker] as f64 - want[t]).abs() < 1e-5);
            }
        }
    }
}

/// Heads directly on a 3-feature input: logits = W x + b, V = u·x + c.
fn linear_heads() -> Architecture {
    Architecture { input: vec![3], layers: vec![Layer::head("pi", 3, 3), Layer::head("v", 3, 1)] }
}

fn linear_params(pi_w: [f32; 9], pi_b: [f32; 3], v_w: [f32; 3], v_b: f32) -> NetworkParams {
    let mut p = NetworkParams::new();
    p.insert("pi.w", Tensor::new([3, 3], pi_w.to_vec()).unwrap()).unwrap();
    p.insert("pi.b", Tensor::new([3], pi_b.to_vec()).unwrap()).unwrap();
    p.insert("v.w", Tensor::new([1, 3], v_w.to_vec()).unwrap()).unwrap();
    p.insert("v.b", Tensor::new([1], vec![v_b]).unwrap()).unwrap();
    p
}

#[test]
fn zero_advantage_leaves_only_the_entropy_bonus() {
    let arch = linear_heads();
    let params = linear_params([0.0; 9], [0.0; 3], [0.0; 3], 0.25);
    let batch = UpdateBatch { observations: Tensor::new([2, 3], vec![0.5; 6]).unwrap(), actions: vec![0, 2], targets: vec![0.25, 0.25] };
    let w = LossWeights::default();
    let (l, _) = a2c_gradients(&arch, &params, &batch, &w).unwrap();
    assert!(l.value.abs() < 1e-7);
    assert!(l.policy.abs() < 1e-7);
    assert!((l.entropy - 3f32.ln()).abs() < 1e-6);
    assert!((l.total + w.entropy * 3f32.ln()).abs() < 1e-6);
}

#[test]
fn deterministic_policy_has_zero_entropy() {
    let arch = linear_heads();
    let params = linear_params([0.0; 9], [60.0, 0.0, 0.0], [0.0; 3], 0.0);
    let batch = UpdateBatch { observations: Tensor::zeros([1, 3]), actions: vec![0], targets: vec![0.0] };
    let (l, _) = a2c_gradients(&arch, &params, &batch, &LossWeights::default()).unwrap();
    assert!(l.entropy.abs() < 1e-6);
}

#[test]
fn single_transition_gradient_matches_hand_derivation() {
    let arch = linear_heads();
    let pi_w = [0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.2, -0.4];
    let pi_b = [0.05, -0.05, 0.1];
    let v_w = [0.3, -0.1, 0.2];
    let v_b = 0.1;
    let params = linear_params(pi_w, pi_b, v_w, v_b);
    let x = [0.7f64, -0.3, 0.4];
    let (action, target, alpha) = (1usize, 1.5f64, 0.01f64);
    let batch = UpdateBatch { observations: Tensor::new([1, 3], x.iter().map(|&v| v as f32).collect()).unwrap(), actions: vec![action], targets: vec![target as f32] };
    let weights = LossWeights { entropy: alpha as f32, value: 0.5, max_grad_norm: None };
    let (_, grads) = a2c_gradients(&arch, &params, &batch, &weights).unwrap();

    // logits z, probabilities p, value V, advantage A held constant
    let z: Vec<f64> = (0..3).map(|i| (0..3).map(|j| pi_w[i * 3 + j] as f64 * x[j]).sum::<f64>() + pi_b[i] as f64).collect();
    let zmax = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let s: f64 = e.iter().sum();
    let p: Vec<f64> = e.iter().map(|v| v / s).collect();
    let v: f64 = (0..3).map(|j| v_w[j] as f64 * x[j]).sum::<f64>() + v_b as f64;
    let adv = target - v;
    let h: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
    // d/dz [−A log p_a − αH]
    let dz: Vec<f64> = (0..3)
        .map(|k| {
            let onehot = if k == action { 1.0 } else { 0.0 };
            -adv * (onehot - p[k]) + alpha * p[k] * (p[k].ln() + h)
        })
        .collect();
    // d/dV [½ (R − V)²]
    let dv = -(target - v);

    let g_pib = grads["pi.b"].data();
    let g_piw = grads["pi.w"].data();
    for k in 0..3 {
        assert!((g_pib[k] as f64 - dz[k]).abs() < 1e-5, "pi.b[{k}]");
        for j in 0..3 {
            assert!((g_piw[k * 3 + j] as f64 - dz[k] * x[j]).abs() < 1e-5, "pi.w[{k},{j}]");
        }
    }
    assert!((grads["v.b"].data()[0] as f64 - dv).abs() < 1e-5);
    for j in 0..3 {
        assert!((grads["v.w"].data()[j] as f64 - dv * x[j]).abs() < 1e-5);
    }
}

#[test]
fn a2c_update_never_touches_frozen_tensors() {
    let arch = linear_heads();
    let mut params = linear_params([0.1; 9], [0.0; 3], [0.2; 3], 0.0);
    params.set_frozen("pi.w", true).unwrap();
    let before = params.get("pi.w").unwrap().clone();
    let mut opt = OptimizerState::rmsprop(0.0007, &params);
    let batch = UpdateBatch { observations: Tensor::new([1, 3], vec![1.0, 2.0, 3.0]).unwrap(), actions: vec![2], targets: vec![3.0] };
    for _ in 0..10 {
        a2c_update(&arch, &mut params, &mut opt, &batch, &LossWeights::default()).unwrap();
    }
    assert_eq!(params.get("pi.w").unwrap(), &before);
    assert_ne!(params.get("v.b").unwrap().data()[0], 0.0);
}

#[test]
fn zero_update_budget_returns_initial_params() {
    let arch = policy_architecture(&small_shape()).unwrap();
    let params = init_policy(&arch, 2).unwrap();
    let budget = Budget { max_updates: 0, max_frames: u64::MAX, report_every: 1 };
    let env = EnvConfig::breakout(BreakoutVariant::Source);
    let (out, progress) = train_a2c(&env, arch, params.clone(), A2cConfig::default(), budget, &mut |_| Control::Continue).unwrap();
    assert_eq!(out, params);
    assert_eq!(progress.frames, 0);
}

#[test]
fn training_is_deterministic_and_counts_frames() {
    let arch = policy_architecture(&small_shape()).unwrap();
    let params = init_policy(&arch, 2).unwrap();
    let budget = Budget { max_updates: 3, max_frames: u64::MAX, report_every: 1 };
    let env = EnvConfig::breakout(BreakoutVariant::Source);
    let config = A2cConfig { workers: 2, n_steps: 5, ..Default::default() };
    let mut seen = Vec::new();
    let (a, pa) = train_a2c(&env, arch.clone(), params.clone(), config, budget, &mut |p| {
        seen.push(*p);
        Control::Continue
    })
    .unwrap();
    let (b, _) = train_a2c(&env, arch, params.clone(), config, budget, &mut |_| Control::Continue).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, params);
    assert_eq!(pa.frames, 30);
    assert_eq!(seen.iter().map(|p| p.updates).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn progress_callback_can_stop_training() {
    let arch = policy_architecture(&small_shape()).unwrap();
    let params = init_policy(&arch, 2).unwrap();
    let budget = Budget { max_updates: 100, max_frames: u64::MAX, report_every: 2 };
    let env = EnvConfig::road(1);
    let config = A2cConfig { workers: 2, n_steps: 4, ..Default::default() };
    let (_, p) = train_a2c(&env, arch, params, config, budget, &mut |p| if p.updates >= 4 { Control::Stop } else { Control::Continue }).unwrap();
    assert_eq!(p.updates, 4);
}

fn trained_source() -> (Architecture, NetworkParams) {
    let arch = policy_architecture(&small_shape()).unwrap();
    let params = init_policy(&arch, 8).unwrap();
    let budget = Budget { max_updates: 5, max_frames: u64::MAX, report_every: 5 };
    let config = A2cConfig { workers: 2, n_steps: 5, ..Default::default() };
    let (p, _) = train_a2c(&EnvConfig::breakout(BreakoutVariant::Source), arch.clone(), params, config, budget, &mut |_| Control::Continue).unwrap();
    (arch, p)
}

#[test]
fn finetune_settings_follow_their_definitions() {
    let (arch, source) = trained_source();

    let full = apply_finetune_setting(&source, &arch, FinetuneSetting::FullFt, 1).unwrap();
    assert_eq!(full, source);

    let scratch = apply_finetune_setting(&source, &arch, FinetuneSetting::FromScratch, 1).unwrap();
    for e in scratch.iter() {
        assert_ne!(&e.tensor, source.get(&e.name).unwrap(), "{} shared", e.name);
        assert!(!e.frozen);
    }

    let ro1 = apply_finetune_setting(&source, &arch, FinetuneSetting::RandomOutput, 3).unwrap();
    let ro2 = apply_finetune_setting(&source, &arch, FinetuneSetting::RandomOutput, 3).unwrap();
    assert_eq!(ro1, ro2);
    for e in ro1.iter() {
        let is_output = OUTPUT_LAYERS.iter().any(|l| e.name.starts_with(&format!("{l}.")));
        assert_eq!(&e.tensor == source.get(&e.name).unwrap(), !is_output, "{}", e.name);
    }

    let prf = apply_finetune_setting(&source, &arch, FinetuneSetting::PartialRandomFt, 3).unwrap();
    for e in prf.iter() {
        let is_conv = CONV_LAYERS.iter().any(|l| e.name.starts_with(&format!("{l}.")));
        assert_eq!(e.frozen, is_conv);
        assert_eq!(&e.tensor == source.get(&e.name).unwrap(), is_conv, "{}", e.name);
    }
}

#[test]
fn partial_ft_keeps_convolutions_through_training() {
    let (arch, source) = trained_source();
    let start = apply_finetune_setting(&source, &arch, FinetuneSetting::PartialFt, 1).unwrap();
    let budget = Budget { max_updates: 100, max_frames: u64::MAX, report_every: 100 };
    let config = A2cConfig { workers: 2, n_steps: 5, ..Default::default() };
    let (after, _) = train_a2c(&EnvConfig::breakout(BreakoutVariant::ConstRect), arch, start, config, budget, &mut |_| Control::Continue).unwrap();
    for e in after.iter() {
        let is_conv = CONV_LAYERS.iter().any(|l| e.name.starts_with(&format!("{l}.")));
        if is_conv {
            assert_eq!(&e.tensor, source.get(&e.name).unwrap(), "{}", e.name);
        }
    }
    assert_ne!(after.get("fc.w"), source.get("fc.w"));
}

#[test]
fn finetune_rejects_foreign_architecture() {
    let (arch, _) = trained_source();
    let other = transferlab_core::numerics::build_network(&linear_heads(), Init::Xavier, 1).unwrap();
    assert!(matches!(
        apply_finetune_setting(&other, &arch, FinetuneSetting::FullFt, 1),
        Err(transferlab_core::Error::Config(_))
    ));
}

#[test]
fn setting_ids_round_trip() {
    for s in FinetuneSetting::ALL {
        assert_eq!(FinetuneSetting::from_id(s.id()), Some(s));
    }
    assert_eq!(FinetuneSetting::from_id("nope"), None);
}
