//! Simulation and pulse compilation for an XY spin chain that is controlled
//! entirely through its first two sites.
//!
//! The chain is diagonalized into free fermion modes; resonant cosine drives
//! on the site-1/2 coupling induce Rabi oscillations between the decoupled
//! workspace mode `b_1` and any other eigenmode, out of which swap, X-rotation,
//! refocused Z-rotation, and controlled-X protocols are assembled. Three
//! simulation tiers (single excitation, fixed particle number, full Hilbert
//! space) cross-validate each other, with the full 2^N construction acting as
//! the exact many-body reference.
//!
//! Entry points:
//! - [`chain`]: chain specifications, engineered couplings, mode spectra.
//! - [`oracle`]: exact 2^N Jordan-Wigner reference operators and encodings.
//! - [`pulse`]: symbolic control waveforms (tones + durations).
//! - [`dynamics`]: time-dependent Schrödinger propagation and fidelity metrics.
//! - [`compiler`]: logical circuits to pulse schedules.
//! - [`generic`]: toy-scale generic-controllability construction.
//! - [`experiments`]: scripted sweeps reproducing the scaling claims.
//! - [`io`]: config, circuit and schedule file formats, CSV/SVG emitters.

pub mod chain;
pub mod compiler;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod generic;
pub mod io;
pub mod oracle;
pub mod pulse;

pub use error::{Error, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
