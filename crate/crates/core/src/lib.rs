//! Multiscale solver for isothermal liquid-vapor flow with a sharp phase
//! boundary.
//!
//! The bulk phases are advanced by a front-tracking finite-volume scheme
//! ([`macrosolver`]). The dynamics of the phase boundary come from a
//! microscale Riemann solver built on a 1D nearest-neighbor particle chain
//! ([`mdchain`], [`kirkwood`], [`microsolver`]). Microscale responses are
//! cached and interpolated by a kernel surrogate with distance-gated
//! sampling ([`surrogate`]).
//!
//! All thermodynamics derive from a single van der Waals parameter set
//! ([`eos::VdwParams`]). The particle potential is chosen so that the
//! zero-temperature chain pressure reproduces the macroscopic EOS.

pub mod eos;
pub mod error;
pub mod kirkwood;
pub mod macrosolver;
pub mod mdchain;
pub mod microsolver;
mod roots;
pub mod state;
pub mod surrogate;

pub use eos::{MaxwellStates, Phase, PhaseBounds, VdwParams};
pub use error::{Error, Result};
pub use state::FluidState;
