use alloc::format;

use crate::error::{Error, Result};
use crate::numerics::{bias_name, derive_seed, weight_name, Architecture, NetworkParams};

use super::{init_policy, CONV_LAYERS, OUTPUT_LAYERS};

/// How a target-task network is initialised from a source network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FinetuneSetting {
    /// Fresh random weights.
    FromScratch,
    /// Copy everything; train everything.
    FullFt,
    /// Copy everything except the output heads, which are redrawn.
    RandomOutput,
    /// Copy everything; freeze the convolutions.
    PartialFt,
    /// Copy and freeze the convolutions; redraw the rest.
    PartialRandomFt,
}

impl FinetuneSetting {
    pub const ALL: [FinetuneSetting; 5] = [
        FinetuneSetting::FromScratch,
        FinetuneSetting::FullFt,
        FinetuneSetting::RandomOutput,
        FinetuneSetting::PartialFt,
        FinetuneSetting::PartialRandomFt,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FinetuneSetting::FromScratch => "from-scratch",
            FinetuneSetting::FullFt => "full-ft",
            FinetuneSetting::RandomOutput => "random-output",
            FinetuneSetting::PartialFt => "partial-ft",
            FinetuneSetting::PartialRandomFt => "partial-random-ft",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.id() == id)
    }
}

fn copy_layer(dst: &mut NetworkParams, src: &NetworkParams, layer: &str) -> Result<()> {
    for name in [weight_name(layer), bias_name(layer)] {
        let t = src.get(&name).ok_or_else(|| Error::Config(format!("source lacks `{name}`")))?;
        *dst.get_mut(&name).ok_or_else(|| Error::Config(format!("target lacks `{name}`")))? = t.clone();
    }
    Ok(())
}

fn freeze_layer(p: &mut NetworkParams, layer: &str) -> Result<()> {
    p.set_frozen(&weight_name(layer), true)?;
    p.set_frozen(&bias_name(layer), true)
}

/// Builds the starting network for `setting`. Random parts are drawn from
/// `seed` with the policy initialiser.
pub fn apply_finetune_setting(
    source: &NetworkParams,
    arch: &Architecture,
    setting: FinetuneSetting,
    seed: u64,
) -> Result<NetworkParams> {
    let fresh = init_policy(arch, derive_seed(seed, 0x5eed))?;
    if !fresh.same_layout(source) {
        return Err(Error::Config("source network does not match the policy architecture".into()));
    }
    let mut out = match setting {
        FinetuneSetting::FromScratch | FinetuneSetting::PartialRandomFt => fresh.clone(),
        _ => source.clone(),
    };
    for e in out.iter_mut() {
        e.frozen = false;
    }
    match setting {
        FinetuneSetting::FromScratch | FinetuneSetting::FullFt => {}
        FinetuneSetting::RandomOutput => {
            for layer in OUTPUT_LAYERS {
                copy_layer(&mut out, &fresh, layer)?;
            }
        }
        FinetuneSetting::PartialFt => {
            for layer in CONV_LAYERS {
                freeze_layer(&mut out, layer)?;
            }
        }
        FinetuneSetting::PartialRandomFt => {
            for layer in CONV_LAYERS {
                copy_layer(&mut out, source, layer)?;
                freeze_layer(&mut out, layer)?;
            }
        }
    }
    Ok(out)
}
