//! Unpaired frame translation between a source and a target skin: two
//! residual generators, two patch discriminators, least-squares adversarial
//! losses and an L1 cycle term.

mod data;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, shape_err, Error, Result};
use crate::numerics::{
    apply_layer, build_network, derive_seed, Architecture, Chain, Graph, Grads, Init, Layer, NetworkParams, OptimizerKind,
    OptimizerState, ParamLookup, Tensor, Var,
};

pub use data::{collect_frames, collect_states, train_translator, Domain, FrameDataset, TranslatorConfig};

/// Whether the two generators share their inner layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SharingMode {
    /// Inner encoder, residual and first decoder layers are one set of tensors.
    SharedInner,
    Independent,
}

impl SharingMode {
    pub fn id(self) -> &'static str {
        match self {
            SharingMode::SharedInner => "shared-inner",
            SharingMode::Independent => "independent",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        [SharingMode::SharedInner, SharingMode::Independent].into_iter().find(|m| m.id() == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// G1: target skin → source skin.
    TargetToSource,
    /// G2: source skin → target skin.
    SourceToTarget,
}

/// Layers that live in the shared set under [`SharingMode::SharedInner`].
pub const SHARED_LAYERS: [&str; 6] = ["e2", "r1a", "r1b", "r2a", "r2b", "d1"];
const RESIDUAL_BLOCKS: [(&str, &str); 2] = [("r1a", "r1b"), ("r2a", "r2b")];
const LEAK: f32 = 0.2;

/// Channel widths of the translator networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranslatorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Generator width after the first downsample (doubled after the second).
    pub gen_base: usize,
    pub disc_base: usize,
}

impl Default for TranslatorShape {
    fn default() -> Self {
        TranslatorShape { channels: 3, height: 84, width: 84, gen_base: 8, disc_base: 8 }
    }
}

/// Two stride-2 convolutions, two residual blocks, two stride-2 deconvolutions.
/// The network predicts a residual that is added to its input.
pub fn generator_architecture(s: &TranslatorShape) -> Result<Architecture> {
    let (c, b) = (s.channels, s.gen_base);
    let arch = Architecture {
        input: vec![c, s.height, s.width],
        layers: vec![
            Layer::conv("e1", c, b, 4, 2, 1),
            Layer::conv("e2", b, 2 * b, 4, 2, 1),
            Layer::conv("r1a", 2 * b, 2 * b, 3, 1, 1),
            Layer::conv("r1b", 2 * b, 2 * b, 3, 1, 1),
            Layer::conv("r2a", 2 * b, 2 * b, 3, 1, 1),
            Layer::conv("r2b", 2 * b, 2 * b, 3, 1, 1),
            Layer::deconv("d1", 2 * b, b, 4, 2, 1),
            Layer::deconv("d2", b, c, 4, 2, 1),
        ],
    };
    let shapes = arch.shapes()?;
    if shapes.last().map(Vec::as_slice) != Some(arch.input.as_slice()) {
        return Err(shape_err(format!("generator does not restore {:?} (frame sides must be divisible by 4)", arch.input)));
    }
    Ok(arch)
}

/// Three convolutions down to a one-channel score map.
pub fn discriminator_architecture(s: &TranslatorShape) -> Result<Architecture> {
    let (c, b) = (s.channels, s.disc_base);
    let arch = Architecture {
        input: vec![c, s.height, s.width],
        layers: vec![Layer::conv("c1", c, b, 4, 2, 1), Layer::conv("c2", b, 2 * b, 4, 2, 1), Layer::conv("c3", 2 * b, 1, 3, 1, 1)],
    };
    arch.shapes()?;
    Ok(arch)
}

fn generate(g: &mut Graph, p: &impl ParamLookup, arch: &Architecture, x: Var) -> Result<Var> {
    let layer = |name: &str| arch.layer(name).ok_or_else(|| contract(format!("generator lacks `{name}`")));
    let e1 = apply_layer(g, p, layer("e1")?, x)?;
    let h = g.leaky_relu(e1, LEAK);
    let e2 = apply_layer(g, p, layer("e2")?, h)?;
    let mut h = g.leaky_relu(e2, LEAK);
    for (a, b) in RESIDUAL_BLOCKS {
        let ya = apply_layer(g, p, layer(a)?, h)?;
        let ya = g.relu(ya);
        let yb = apply_layer(g, p, layer(b)?, ya)?;
        h = g.add(h, yb)?;
    }
    let d1 = apply_layer(g, p, layer("d1")?, h)?;
    let h = g.leaky_relu(d1, LEAK);
    let residual = apply_layer(g, p, layer("d2")?, h)?;
    g.add(x, residual)
}

fn discriminate(g: &mut Graph, p: &impl ParamLookup, arch: &Architecture, x: Var) -> Result<Var> {
    let mut h = x;
    for (i, layer) in arch.layers.iter().enumerate() {
        h = apply_layer(g, p, layer, h)?;
        if i + 1 < arch.layers.len() {
            h = g.leaky_relu(h, LEAK);
        }
    }
    Ok(h)
}

/// Generators G1 (target→source), G2 (source→target) and discriminators
/// D1 (target side), D2 (source side).
#[derive(Clone, Debug, PartialEq)]
pub struct TranslatorPair {
    pub mode: SharingMode,
    pub g1: NetworkParams,
    pub g2: NetworkParams,
    /// Inner generator layers used by both G1 and G2; empty when independent.
    pub shared: NetworkParams,
    pub d1: NetworkParams,
    pub d2: NetworkParams,
    gen_arch: Architecture,
    disc_arch: Architecture,
}

fn split_shared(full: NetworkParams) -> Result<(NetworkParams, NetworkParams)> {
    let (mut own, mut shared) = (NetworkParams::new(), NetworkParams::new());
    for e in full.iter() {
        let layer = e.name.split('.').next().unwrap_or("");
        let dst = if SHARED_LAYERS.contains(&layer) { &mut shared } else { &mut own };
        dst.insert(e.name.clone(), e.tensor.clone())?;
    }
    Ok((own, shared))
}

fn drop_shared(full: NetworkParams) -> Result<NetworkParams> {
    split_shared(full).map(|(own, _)| own)
}

impl TranslatorPair {
    /// Fresh pair. Generators and discriminators are drawn with `gen_init`
    /// and `disc_init` from independent streams of `seed`.
    pub fn new(shape: &TranslatorShape, mode: SharingMode, gen_init: Init, disc_init: Init, seed: u64) -> Result<Self> {
        let gen_arch = generator_architecture(shape)?;
        let disc_arch = discriminator_architecture(shape)?;
        let g1_full = build_network(&gen_arch, gen_init, derive_seed(seed, 1))?;
        let g2_full = build_network(&gen_arch, gen_init, derive_seed(seed, 2))?;
        let (g1, g2, shared) = match mode {
            SharingMode::SharedInner => {
                let (g1, shared) = split_shared(g1_full)?;
                (g1, drop_shared(g2_full)?, shared)
            }
            SharingMode::Independent => (g1_full, g2_full, NetworkParams::new()),
        };
        Ok(TranslatorPair {
            mode,
            g1,
            g2,
            shared,
            d1: build_network(&disc_arch, disc_init, derive_seed(seed, 3))?,
            d2: build_network(&disc_arch, disc_init, derive_seed(seed, 4))?,
            gen_arch,
            disc_arch,
        })
    }

    /// Reassembles a pair from stored tensors, checking every layout.
    pub fn from_parts(
        shape: &TranslatorShape,
        mode: SharingMode,
        g1: NetworkParams,
        g2: NetworkParams,
        shared: NetworkParams,
        d1: NetworkParams,
        d2: NetworkParams,
    ) -> Result<Self> {
        let template = Self::new(shape, mode, Init::Constant(0.0), Init::Constant(0.0), 0)?;
        let ok = template.g1.same_layout(&g1)
            && template.g2.same_layout(&g2)
            && template.shared.same_layout(&shared)
            && template.d1.same_layout(&d1)
            && template.d2.same_layout(&d2);
        if !ok {
            return Err(Error::Config("translator tensors do not match the architecture".into()));
        }
        Ok(TranslatorPair { g1, g2, shared, d1, d2, ..template })
    }

    pub fn generator_arch(&self) -> &Architecture {
        &self.gen_arch
    }

    pub fn discriminator_arch(&self) -> &Architecture {
        &self.disc_arch
    }

    /// Complete parameter set of G1 (`TargetToSource`) or G2, shared layers included.
    pub fn generator(&self, direction: Direction) -> NetworkParams {
        let mut full = match direction {
            Direction::TargetToSource => self.g1.clone(),
            Direction::SourceToTarget => self.g2.clone(),
        };
        for e in self.shared.iter() {
            full.insert(e.name.clone(), e.tensor.clone()).expect("shared names are disjoint");
        }
        full
    }

    fn own(&self, direction: Direction) -> &NetworkParams {
        match direction {
            Direction::TargetToSource => &self.g1,
            Direction::SourceToTarget => &self.g2,
        }
    }

    fn check_frame(&self, frame: &Tensor) -> Result<()> {
        let batched = frame.shape().len() == 4 && frame.shape()[1..] == self.gen_arch.input[..];
        if batched {
            Ok(())
        } else {
            Err(contract(format!("frame {:?} does not match translator input {:?}", frame.shape(), self.gen_arch.input)))
        }
    }

    /// Raw generator output for `[batch, C, H, W]` frames (not clamped).
    pub fn generate_raw(&self, frames: &Tensor, direction: Direction) -> Result<Tensor> {
        self.check_frame(frames)?;
        let mut g = Graph::new();
        let own = self.own(direction).bind_constant(&mut g);
        let shared = self.shared.bind_constant(&mut g);
        let x = g.input(frames.clone());
        let y = generate(&mut g, &Chain(&own, &shared), &self.gen_arch, x)?;
        let out = g.value(y).clone();
        if !out.is_finite() {
            return Err(Error::NumericalFailure { tensor: "generator output".into() });
        }
        Ok(out)
    }

    /// Translates one `[C, H, W]` frame; output is clamped to `[0, 1]`.
    pub fn translate(&self, frame: &Tensor, direction: Direction) -> Result<Tensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(frame.shape());
        let batched = frame.clone().reshape(shape).map_err(|_| contract("frame shape"))?;
        let out = self.generate_raw(&batched, direction)?;
        out.map(|v| v.clamp(0.0, 1.0)).reshape(frame.shape().to_vec())
    }

    /// Mean discriminator score of `frames` on the target (`D1`) or source (`D2`) side.
    pub fn score(&self, frames: &Tensor, target_side: bool) -> Result<f32> {
        self.check_frame(frames)?;
        let mut g = Graph::new();
        let d = if target_side { &self.d1 } else { &self.d2 }.bind_constant(&mut g);
        let x = g.input(frames.clone());
        let y = discriminate(&mut g, &d, &self.disc_arch, x)?;
        let m = g.mean(y);
        Ok(g.scalar(m))
    }
}

/// Adam states for every trainable part of a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GanOptimizers {
    pub g1: OptimizerState,
    pub g2: OptimizerState,
    pub shared: OptimizerState,
    pub d1: OptimizerState,
    pub d2: OptimizerState,
}

impl GanOptimizers {
    pub fn new(pair: &TranslatorPair, kind: OptimizerKind, lr: f64) -> Self {
        GanOptimizers {
            g1: OptimizerState::new(kind, lr, &pair.g1),
            g2: OptimizerState::new(kind, lr, &pair.g2),
            shared: OptimizerState::new(kind, lr, &pair.shared),
            d1: OptimizerState::new(kind, lr, &pair.d1),
            d2: OptimizerState::new(kind, lr, &pair.d2),
        }
    }

    /// Adam with learning rate 1e-4.
    pub fn adam(pair: &TranslatorPair) -> Self {
        Self::new(pair, OptimizerKind::ADAM, 1e-4)
    }
}

/// Losses of one [`gan_update`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GanLosses {
    /// ½[(D1(t) − 1)² + D1(G2(s))²], averaged over the score map.
    pub d1: f32,
    pub d2: f32,
    /// (D2(G1(t)) − 1)² + (D1(G2(s)) − 1)².
    pub adversarial: f32,
    /// |G2(G1(t)) − t| + |G1(G2(s)) − s|, mean absolute error per direction.
    pub cycle: f32,
    /// adversarial + λ·cycle.
    pub generator: f32,
}

fn mse_to(g: &mut Graph, x: Var, target: f32) -> Var {
    let d = g.add_scalar(x, -target);
    let sq = g.square(d);
    g.mean(sq)
}

fn l1(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let ab = g.abs(d);
    Ok(g.mean(ab))
}

fn finite(value: f32, what: &str) -> Result<f32> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericalFailure { tensor: what.into() })
    }
}

fn step_part(opt: &mut OptimizerState, params: &mut NetworkParams, grads: &Grads) -> Result<()> {
    if !grads.is_empty() {
        opt.step(params, grads)?;
    }
    Ok(())
}

/// Cycle loss `|G2(G1(t)) − t| + |G1(G2(s)) − s|` under the current generators.
pub fn cycle_loss(pair: &TranslatorPair, source: &Tensor, target: &Tensor) -> Result<f32> {
    let fake_s = pair.generate_raw(target, Direction::TargetToSource)?;
    let back_t = pair.generate_raw(&fake_s, Direction::SourceToTarget)?;
    let fake_t = pair.generate_raw(source, Direction::SourceToTarget)?;
    let back_s = pair.generate_raw(&fake_t, Direction::TargetToSource)?;
    let mae = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.numel() as f32;
    Ok(mae(&back_t, target) + mae(&back_s, source))
}

/// One discriminator step followed by one generator step on a single
/// source frame and a single target frame (`[1, C, H, W]` each).
pub fn gan_update(
    pair: &mut TranslatorPair,
    source: &Tensor,
    target: &Tensor,
    opt: &mut GanOptimizers,
    lambda_cyc: f32,
) -> Result<GanLosses> {
    pair.check_frame(source)?;
    pair.check_frame(target)?;
    if source.rows() != 1 || target.rows() != 1 {
        return Err(contract("translator updates use batch size 1"));
    }
    let mut losses = GanLosses::default();

    // discriminators: real → 1, fake → 0
    let fake_s = pair.generate_raw(target, Direction::TargetToSource)?;
    let fake_t = pair.generate_raw(source, Direction::SourceToTarget)?;
    for target_side in [true, false] {
        let (real, fake) = if target_side { (target, &fake_t) } else { (source, &fake_s) };
        let mut g = Graph::new();
        let params = if target_side { &pair.d1 } else { &pair.d2 };
        let bound = params.bind(&mut g);
        let xr = g.input(real.clone());
        let xf = g.input(fake.clone());
        let sr = discriminate(&mut g, &bound, &pair.disc_arch, xr)?;
        let sf = discriminate(&mut g, &bound, &pair.disc_arch, xf)?;
        let lr = mse_to(&mut g, sr, 1.0);
        let lf = mse_to(&mut g, sf, 0.0);
        let sum = g.add(lr, lf)?;
        let loss = g.scale(sum, 0.5);
        let value = finite(g.scalar(loss), if target_side { "d1 loss" } else { "d2 loss" })?;
        let mut grads = g.backward(loss)?;
        let grads = bound.collect(&mut grads);
        if target_side {
            losses.d1 = value;
            step_part(&mut opt.d1, &mut pair.d1, &grads)?;
        } else {
            losses.d2 = value;
            step_part(&mut opt.d2, &mut pair.d2, &grads)?;
        }
    }

    // generators: fool the updated discriminators and close both cycles
    let mut g = Graph::new();
    let b1 = pair.g1.bind(&mut g);
    let b2 = pair.g2.bind(&mut g);
    let bs = pair.shared.bind(&mut g);
    let bd1 = pair.d1.bind_constant(&mut g);
    let bd2 = pair.d2.bind_constant(&mut g);
    let (gen1, gen2) = (Chain(&b1, &bs), Chain(&b2, &bs));
    let arch = &pair.gen_arch;
    let t = g.input(target.clone());
    let s = g.input(source.clone());
    let fs = generate(&mut g, &gen1, arch, t)?;
    let rt = generate(&mut g, &gen2, arch, fs)?;
    let ft = generate(&mut g, &gen2, arch, s)?;
    let rs = generate(&mut g, &gen1, arch, ft)?;
    let score_s = discriminate(&mut g, &bd2, &pair.disc_arch, fs)?;
    let score_t = discriminate(&mut g, &bd1, &pair.disc_arch, ft)?;
    let adv_s = mse_to(&mut g, score_s, 1.0);
    let adv_t = mse_to(&mut g, score_t, 1.0);
    let adv = g.add(adv_s, adv_t)?;
    let cyc_t = l1(&mut g, rt, t)?;
    let cyc_s = l1(&mut g, rs, s)?;
    let cyc = g.add(cyc_t, cyc_s)?;
    let weighted = g.scale(cyc, lambda_cyc);
    let total = g.add(adv, weighted)?;
    losses.adversarial = finite(g.scalar(adv), "adversarial loss")?;
    losses.cycle = finite(g.scalar(cyc), "cycle loss")?;
    losses.generator = finite(g.scalar(total), "generator loss")?;
    let mut grads = g.backward(total)?;
    let (gr1, gr2, grs) = (b1.collect(&mut grads), b2.collect(&mut grads), bs.collect(&mut grads));
    step_part(&mut opt.g1, &mut pair.g1, &gr1)?;
    step_part(&mut opt.g2, &mut pair.g2, &gr2)?;
    step_part(&mut opt.shared, &mut pair.shared, &grs)?;
    for p in [&pair.g1, &pair.g2, &pair.shared, &pair.d1, &pair.d2] {
        if let Some(name) = p.first_non_finite() {
            return Err(Error::NumericalFailure { tensor: name.into() });
        }
    }
    Ok(losses)
}
