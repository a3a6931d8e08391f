//! Central finite-difference checks for every graph operator.
//!
//! Each case draws random inputs, contracts the operator output with a random
//! weight tensor to get a scalar, and compares the reverse-mode gradient of
//! every input with a central difference evaluated in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transferlab_core::numerics::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::Single => 1e-3,
            Precision::Double => 1e-5,
        }
    }

    pub fn step(self) -> f64 {
        match self {
            Precision::Single => 1e-3,
            Precision::Double => 1e-5,
        }
    }
}

type Build<T> = fn(&mut Graph<T>, &[Var]) -> Var;

/// One operator under test: input shapes, an input sampler and the graph
/// construction, instantiated for both precisions.
pub struct OpCase {
    pub name: &'static str,
    pub shapes: fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>,
    /// Maps a raw N(0,1)-ish draw into the operator's smooth domain.
    pub domain: fn(f64) -> f64,
    pub build32: Build<f32>,
    pub build64: Build<f64>,
}

fn away_from_zero(x: f64) -> f64 {
    if x.abs() < 0.05 {
        x.signum() * 0.05 + x
    } else {
        x
    }
}

fn positive(x: f64) -> f64 {
    0.2 + x.abs()
}

fn identity(x: f64) -> f64 {
    x
}

fn away_from_clamp(x: f64) -> f64 {
    // clamp bounds are ±0.5
    let y = away_from_zero(x);
    if (y.abs() - 0.5).abs() < 0.05 {
        y * 1.3
    } else {
        y
    }
}

fn small_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let r = rng.random_range(1..4);
    let c = rng.random_range(2..6);
    vec![vec![r, c], vec![r, c]]
}

fn unary_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    vec![small_matrix(rng)[0].clone()]
}

fn dense_shapes(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let (b, i, o) = (rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..5));
    vec![vec![b, i], vec![o, i], vec![o]]
}

fn conv_shapes(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = rng.random_range(1..3);
    let c = rng.random_range(1..3);
    let o = rng.random_range(1..3);
    let k = 3;
    let h = rng.random_range(4..7);
    let w = rng.random_range(4..7);
    vec![vec![n, c, h, w], vec![o, c, k, k], vec![o]]
}

fn deconv_shapes(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = rng.random_range(1..3);
    let c = rng.random_range(1..3);
    let o = rng.random_range(1..3);
    let h = rng.random_range(2..4);
    let w = rng.random_range(2..4);
    vec![vec![n, c, h, w], vec![c, o, 4, 4], vec![o]]
}

macro_rules! both {
    ($f:expr) => {
        ($f as Build<f32>, $f as Build<f64>)
    };
}

fn case(name: &'static str, shapes: fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>, domain: fn(f64) -> f64, b: (Build<f32>, Build<f64>)) -> OpCase {
    OpCase { name, shapes, domain, build32: b.0, build64: b.1 }
}

fn g_add<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.add(v[0], v[1]).unwrap()
}
fn g_sub<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.sub(v[0], v[1]).unwrap()
}
fn g_mul<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.mul(v[0], v[1]).unwrap()
}
fn g_scale<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.scale(v[0], T::of(-1.7))
}
fn g_shift<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.add_scalar(v[0], T::of(0.3))
}
fn g_relu<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.relu(v[0])
}
fn g_leaky<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.leaky_relu(v[0], T::of(0.2))
}
fn g_tanh<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.tanh(v[0])
}
fn g_sigmoid<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.sigmoid(v[0])
}
fn g_log<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.log(v[0])
}
fn g_square<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.square(v[0])
}
fn g_abs<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.abs(v[0])
}
fn g_clamp<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.clamp(v[0], T::of(-0.5), T::of(0.5))
}
fn g_softmax<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.softmax(v[0])
}
fn g_log_softmax<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.log_softmax(v[0])
}
fn g_sum<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.sum(v[0])
}
fn g_mean<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.mean(v[0])
}
fn g_sum_last<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.sum_last(v[0])
}
fn g_reshape<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    let n = g.value(v[0]).numel();
    g.reshape(v[0], &[n]).unwrap()
}
fn g_dense<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.dense(v[0], v[1], v[2]).unwrap()
}
fn g_conv_s1<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.conv2d(v[0], v[1], v[2], 1, 1).unwrap()
}
fn g_conv_s2<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.conv2d(v[0], v[1], v[2], 2, 0).unwrap()
}
fn g_deconv<T: Real>(g: &mut Graph<T>, v: &[Var]) -> Var {
    g.conv_transpose2d(v[0], v[1], v[2], 2, 1).unwrap()
}

/// Every operator of the graph.
pub fn operator_cases() -> Vec<OpCase> {
    vec![
        case("add", small_matrix, identity, both!(g_add)),
        case("sub", small_matrix, identity, both!(g_sub)),
        case("mul", small_matrix, identity, both!(g_mul)),
        case("scale", unary_matrix, identity, both!(g_scale)),
        case("add_scalar", unary_matrix, identity, both!(g_shift)),
        case("relu", unary_matrix, away_from_zero, both!(g_relu)),
        case("leaky_relu", unary_matrix, away_from_zero, both!(g_leaky)),
        case("tanh", unary_matrix, identity, both!(g_tanh)),
        case("sigmoid", unary_matrix, identity, both!(g_sigmoid)),
        case("log", unary_matrix, positive, both!(g_log)),
        case("square", unary_matrix, identity, both!(g_square)),
        case("abs", unary_matrix, away_from_zero, both!(g_abs)),
        case("clamp", unary_matrix, away_from_clamp, both!(g_clamp)),
        case("softmax", unary_matrix, identity, both!(g_softmax)),
        case("log_softmax", unary_matrix, identity, both!(g_log_softmax)),
        case("sum", unary_matrix, identity, both!(g_sum)),
        case("mean", unary_matrix, identity, both!(g_mean)),
        case("sum_last", unary_matrix, identity, both!(g_sum_last)),
        case("reshape", unary_matrix, identity, both!(g_reshape)),
        case("dense", dense_shapes, identity, both!(g_dense)),
        case("conv2d_stride1_pad1", conv_shapes, identity, both!(g_conv_s1)),
        case("conv2d_stride2", conv_shapes, identity, both!(g_conv_s2)),
        case("conv_transpose2d", deconv_shapes, identity, both!(g_deconv)),
    ]
}

fn contract_loss<T: Real>(build: Build<T>, inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>) -> (T, Vec<Tensor<f64>>, Tensor<f64>) {
    let mut g = Graph::<T>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.cast())).collect();
    let y = build(&mut g, &vars);
    let w = match weights {
        Some(w) => w.clone(),
        None => {
            // deterministic pseudo-random contraction weights
            let shape = g.value(y).shape().to_vec();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662).fract() * 2.0 - 1.0).collect();
            Tensor::new(shape, data).unwrap()
        }
    };
    let wv = g.input(w.cast());
    let prod = g.mul(y, wv).unwrap();
    let loss = g.sum(prod);
    let value = g.scalar(loss);
    let mut grads = g.backward(loss).unwrap();
    let gs = vars.iter().map(|&v| grads.take(v).map(|t| t.cast()).unwrap_or_else(|| Tensor::zeros(g.value(v).shape().to_vec()))).collect();
    (value, gs, w)
}

/// Largest relative error over all input entries of one random case.
pub fn check_case(op: &OpCase, precision: Precision, rng: &mut ChaCha8Rng) -> f64 {
    let shapes = (op.shapes)(rng);
    let inputs: Vec<Tensor<f64>> = shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let data = (0..n).map(|_| (op.domain)(rng.random::<f64>() * 2.0 - 1.0)).collect();
            Tensor::new(s.clone(), data).unwrap()
        })
        .collect();
    let (analytic, weights) = match precision {
        Precision::Single => {
            let (_, g, w) = contract_loss::<f32>(op.build32, &inputs, None);
            (g, w)
        }
        Precision::Double => {
            let (_, g, w) = contract_loss::<f64>(op.build64, &inputs, None);
            (g, w)
        }
    };
    let h = precision.step();
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let eval = |delta: f64| {
                let mut perturbed = inputs.clone();
                perturbed[i].data_mut()[j] += delta;
                contract_loss::<f64>(op.build64, &perturbed, Some(&weights)).0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic[i].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

/// Runs `cases` random draws of every operator; returns `(name, worst error)`.
pub fn run_suite(precision: Precision, cases: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    operator_cases()
        .iter()
        .map(|op| {
            let worst = (0..cases).map(|_| check_case(op, precision, &mut rng)).fold(0.0, f64::max);
            (op.name, worst)
        })
        .collect()
}
