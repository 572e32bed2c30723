//! Numerics for a pair of fixed-frequency transmons joined by one or more
//! coupling paths (a direct exchange coupler plus any number of bus modes).
//!
//! The crate covers the full chain from a device description to a benchmarked
//! two-qubit gate:
//!
//! * [`model`] builds the bare-basis Hamiltonian of the circuit.
//! * [`spectrum`] diagonalizes it, labels the dressed states and computes the
//!   static quantities (ZZ, the cross-resonance coefficient μ, J_eff, χ).
//! * [`pulses`] samples the drive envelopes.
//! * [`dynamics`] integrates the driven rotating-frame Schrödinger equation and
//!   extracts cross-resonance rates by Hamiltonian tomography.
//! * [`calibration`] tunes a single-pulse direct CNOT.
//! * [`clifford`], [`channels`] and [`rb`] provide the two-qubit Clifford group,
//!   noise channels and the randomized-benchmarking protocols with their fits.
//!
//! Everything is `no_std` with `alloc`; IO, config files and the command line
//! live in the companion `cqed` crate.
//!
//! Units: energies are linear frequencies in GHz (h = 1), times in ns. Public
//! signatures that take or return MHz, kHz or Hz say so in their names.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod channels;
pub mod clifford;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod pulses;
pub mod rb;
pub mod spectrum;

pub use error::{Error, Result};
