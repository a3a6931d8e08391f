//! Desk-scale laboratory for zero-shot visual transfer of pixel policies.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! the differentiable numerics, the programmatic games, the actor-critic
//! agent, the unpaired frame translator, transfer evaluation and imitation
//! from imperfect demonstrations. File formats, configuration and the
//! command line live in the `transferlab` companion crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod agent;
pub mod envs;
pub mod imitation;
pub mod error;
pub mod numerics;
pub mod transfer;
pub mod translate;

pub use error::{Error, Result};
