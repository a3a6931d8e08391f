//! Layer descriptors, parameter initialisation and a generic sequential
//! forward/backward entry point.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvGeometry;
use super::graph::{Graph, Var};
use super::params::{Grads, NetworkParams, ParamLookup};
use super::random::{rng_from_seed, standard_normal, LabRng};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d { name: String, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose2d { name: String, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    /// Fully connected layer. A `head` consumes the current trunk output
    /// without becoming the input of the next layer.
    Dense { name: String, inputs: usize, outputs: usize, head: bool },
}

impl Layer {
    pub fn conv(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Layer::Conv2d { name: name.into(), in_channels, out_channels, kernel, stride, padding }
    }

    pub fn deconv(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Layer::ConvTranspose2d { name: name.into(), in_channels, out_channels, kernel, stride, padding }
    }

    pub fn dense(name: &str, inputs: usize, outputs: usize) -> Self {
        Layer::Dense { name: name.into(), inputs, outputs, head: false }
    }

    pub fn head(name: &str, inputs: usize, outputs: usize) -> Self {
        Layer::Dense { name: name.into(), inputs, outputs, head: true }
    }

    pub fn name(&self) -> &str {
        match self {
            Layer::Conv2d { name, .. } | Layer::ConvTranspose2d { name, .. } | Layer::Dense { name, .. } => name,
        }
    }

    /// `(weight shape, fan_in, fan_out)`.
    fn weight_shape(&self) -> (Vec<usize>, usize, usize) {
        match *self {
            Layer::Conv2d { in_channels, out_channels, kernel, .. } => (
                vec![out_channels, in_channels, kernel, kernel],
                in_channels * kernel * kernel,
                out_channels * kernel * kernel,
            ),
            Layer::ConvTranspose2d { in_channels, out_channels, kernel, .. } => (
                vec![in_channels, out_channels, kernel, kernel],
                out_channels * kernel * kernel,
                in_channels * kernel * kernel,
            ),
            Layer::Dense { inputs, outputs, .. } => (vec![outputs, inputs], inputs, outputs),
        }
    }

    fn bias_len(&self) -> usize {
        match *self {
            Layer::Conv2d { out_channels, .. } | Layer::ConvTranspose2d { out_channels, .. } => out_channels,
            Layer::Dense { outputs, .. } => outputs,
        }
    }
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.w")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.b")
}

/// A network's input shape (per sample) and its layers in application order.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl Architecture {
    /// Walks the layer chain and returns the per-sample output shape of every
    /// layer, failing on the first inconsistency.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut current = self.input.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = match *layer {
                Layer::Conv2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                    let [c, h, w] = spatial(&current, layer.name())?;
                    if c != in_channels {
                        return Err(chain_err(layer.name(), &current, in_channels));
                    }
                    let oh = ConvGeometry::out_extent(h, kernel, stride, padding);
                    let ow = ConvGeometry::out_extent(w, kernel, stride, padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => vec![out_channels, oh, ow],
                        _ => return Err(shape_err(format!("`{}`: kernel does not fit {current:?}", layer.name()))),
                    }
                }
                Layer::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                    let [c, h, w] = spatial(&current, layer.name())?;
                    if c != in_channels {
                        return Err(chain_err(layer.name(), &current, in_channels));
                    }
                    let oh = ((h - 1) * stride + kernel).checked_sub(2 * padding).filter(|&v| v > 0);
                    let ow = ((w - 1) * stride + kernel).checked_sub(2 * padding).filter(|&v| v > 0);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => vec![out_channels, oh, ow],
                        _ => return Err(shape_err(format!("`{}`: empty output", layer.name()))),
                    }
                }
                Layer::Dense { inputs, outputs, .. } => {
                    let flat: usize = current.iter().product();
                    if flat != inputs {
                        return Err(chain_err(layer.name(), &current, inputs));
                    }
                    vec![outputs]
                }
            };
            let is_head = matches!(layer, Layer::Dense { head: true, .. });
            if !is_head {
                current = next.clone();
            }
            out.push(next);
        }
        Ok(out)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name() == name)
    }
}

fn spatial(shape: &[usize], layer: &str) -> Result<[usize; 3]> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(shape_err(format!("`{layer}` needs a [c, h, w] input, got {shape:?}"))),
    }
}

fn chain_err(layer: &str, got: &[usize], expected: usize) -> Error {
    shape_err(format!("`{layer}` expects {expected} input channels/features, chain provides {got:?}"))
}

/// Weight initialisation scheme. Biases start at zero except under
/// `Constant`, which fills every tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with variance `2 / (fan_in + fan_out)`.
    Xavier,
    /// Orthonormal rows or columns of the weight viewed as `[dim0, rest]`.
    Orthogonal,
    Constant(f64),
}

/// Draws fresh parameters for `arch`; deterministic in `seed`.
pub fn build_network<T: Real>(arch: &Architecture, init: Init, seed: u64) -> Result<NetworkParams<T>> {
    arch.shapes()?;
    let mut rng = rng_from_seed(seed);
    let mut params = NetworkParams::new();
    for layer in &arch.layers {
        let (shape, fan_in, fan_out) = layer.weight_shape();
        let w = init_tensor::<T>(&shape, fan_in, fan_out, init, &mut rng);
        let bias_value = match init {
            Init::Constant(c) => T::of(c),
            _ => T::zero(),
        };
        params.insert(weight_name(layer.name()), w)?;
        params.insert(bias_name(layer.name()), Tensor::full([layer.bias_len()], bias_value))?;
    }
    Ok(params)
}

/// Re-draws the tensors of the listed layers in place.
pub fn reinit_layers<T: Real>(
    params: &mut NetworkParams<T>,
    arch: &Architecture,
    layers: &[&str],
    init: Init,
    seed: u64,
) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    for &name in layers {
        let layer = arch.layer(name).ok_or_else(|| Error::Config(format!("no layer `{name}`")))?;
        let (shape, fan_in, fan_out) = layer.weight_shape();
        let w = init_tensor::<T>(&shape, fan_in, fan_out, init, &mut rng);
        let bias_value = match init {
            Init::Constant(c) => T::of(c),
            _ => T::zero(),
        };
        *params.get_mut(&weight_name(name)).ok_or_else(|| Error::Config(format!("no tensor for `{name}`")))? = w;
        *params.get_mut(&bias_name(name)).ok_or_else(|| Error::Config(format!("no tensor for `{name}`")))? =
            Tensor::full([layer.bias_len()], bias_value);
    }
    Ok(())
}

pub(crate) fn init_tensor<T: Real>(shape: &[usize], fan_in: usize, fan_out: usize, init: Init, rng: &mut LabRng) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = match init {
        Init::Constant(c) => vec![c; numel],
        Init::Xavier => {
            let std = libm::sqrt(2.0 / (fan_in + fan_out) as f64);
            (0..numel).map(|_| standard_normal(rng) * std).collect()
        }
        Init::Orthogonal => orthogonal(shape[0], numel / shape[0], rng),
    };
    Tensor::new(shape.to_vec(), data.into_iter().map(T::of).collect()).expect("shape product")
}

/// `rows × cols` matrix with orthonormal rows (if `rows ≤ cols`) or columns.
fn orthogonal(rows: usize, cols: usize, rng: &mut LabRng) -> Vec<f64> {
    // Orthonormalise the vectors of the short side with two passes of
    // modified Gram–Schmidt over Gaussian draws.
    let (count, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = (0..count).map(|_| (0..dim).map(|_| standard_normal(rng)).collect()).collect();
    for _ in 0..2 {
        for i in 0..count {
            for j in 0..i {
                let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = vecs.split_at_mut(i);
                tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = libm::sqrt(vecs[i].iter().map(|a| a * a).sum());
            vecs[i].iter_mut().for_each(|a| *a /= norm);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (v, vector) in vecs.iter().enumerate() {
        for (d, &x) in vector.iter().enumerate() {
            if rows <= cols {
                out[v * cols + d] = x;
            } else {
                out[d * cols + v] = x;
            }
        }
    }
    out
}

/// Applies one layer to `x` (`[batch, ...]`).
pub fn apply_layer<T: Real>(g: &mut Graph<T>, p: &impl ParamLookup, layer: &Layer, x: Var) -> Result<Var> {
    let w = p.var(&weight_name(layer.name()))?;
    let b = p.var(&bias_name(layer.name()))?;
    match *layer {
        Layer::Conv2d { stride, padding, .. } => g.conv2d(x, w, b, stride, padding),
        Layer::ConvTranspose2d { stride, padding, .. } => g.conv_transpose2d(x, w, b, stride, padding),
        Layer::Dense { .. } => g.dense(x, w, b),
    }
}

/// Runs the layer chain with ReLU between trunk layers. Returns the head
/// outputs in order, or the final trunk output when there are no heads.
pub fn forward_sequential<T: Real>(g: &mut Graph<T>, p: &impl ParamLookup, arch: &Architecture, x: Var) -> Result<Vec<Var>> {
    let trunk_len = arch.layers.iter().filter(|l| !matches!(l, Layer::Dense { head: true, .. })).count();
    let mut h = x;
    let mut trunk_seen = 0;
    let mut heads = Vec::new();
    for layer in &arch.layers {
        let y = apply_layer(g, p, layer, h)?;
        if matches!(layer, Layer::Dense { head: true, .. }) {
            heads.push(y);
        } else {
            trunk_seen += 1;
            h = if trunk_seen < trunk_len || heads_follow(arch) { g.relu(y) } else { y };
        }
    }
    if heads.is_empty() {
        heads.push(h);
    }
    Ok(heads)
}

fn heads_follow(arch: &Architecture) -> bool {
    arch.layers.iter().any(|l| matches!(l, Layer::Dense { head: true, .. }))
}

/// Loss applied to the (first) network output.
#[derive(Clone, Debug, PartialEq)]
pub enum LossHead<T = f32> {
    /// Mean over rows of the summed squared error.
    SquaredError { target: Tensor<T> },
    /// Mean softmax cross-entropy against class indices, one per row.
    SoftmaxCrossEntropy { labels: Vec<usize> },
    /// Plain sum of all outputs.
    Sum,
}

/// One forward pass of a sequential network plus the loss gradient with
/// respect to every non-frozen tensor.
pub fn forward_backward<T: Real>(
    arch: &Architecture,
    params: &NetworkParams<T>,
    input: &Tensor<T>,
    head: &LossHead<T>,
) -> Result<(T, Grads<T>)> {
    let mut expected = vec![input.rows()];
    expected.extend_from_slice(&arch.input);
    if input.shape() != expected.as_slice() {
        return Err(shape_err(format!("input {:?} does not match network input {:?}", input.shape(), arch.input)));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.input(input.clone());
    let y = forward_sequential(&mut g, &bound, arch, x)?[0];
    let rows = T::of(input.rows() as f64);
    let loss = match head {
        LossHead::SquaredError { target } => {
            let t = g.input(target.clone());
            let d = g.sub(y, t)?;
            let sq = g.square(d);
            let s = g.sum(sq);
            g.scale(s, T::one() / rows)
        }
        LossHead::SoftmaxCrossEntropy { labels } => {
            let logits = g.value(y);
            let classes = logits.row_len();
            if labels.len() != logits.rows() || labels.iter().any(|&l| l >= classes) {
                return Err(shape_err("labels do not match the output rows/classes"));
            }
            let mut onehot = Tensor::zeros(logits.shape().to_vec());
            for (r, &l) in labels.iter().enumerate() {
                onehot.data_mut()[r * classes + l] = T::one();
            }
            let lp = g.log_softmax(y);
            let oh = g.input(onehot);
            let picked = g.mul(lp, oh)?;
            let s = g.sum(picked);
            g.scale(s, -T::one() / rows)
        }
        LossHead::Sum => g.sum(y),
    };
    let value = g.scalar(loss);
    if !value.is_finite() {
        let tensor = params.first_non_finite().map(String::from).unwrap_or_else(|| {
            if input.is_finite() { "loss".into() } else { "input".into() }
        });
        return Err(Error::NumericalFailure { tensor });
    }
    let mut grads = g.backward(loss)?;
    let grads = bound.collect(&mut grads);
    if let Some((name, _)) = grads.iter().find(|(_, t)| !t.is_finite()) {
        return Err(Error::NumericalFailure { tensor: name.clone() });
    }
    Ok((value, grads))
}
