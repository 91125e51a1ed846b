//! Simulation of a dispersive, cavity-mediated protocol that prepares a
//! genuine four-qubit chi-type entangled state of driven three-level
//! artificial atoms coupled to a single resonator mode.
//!
//! The crate is organised along the derivation chain of the scheme:
//!
//! * [`statespace`] — dense complex linear algebra over tensor-product
//!   Hilbert spaces (states, operators, embeddings, partial traces).
//! * [`model`] — physical parameters, derived coupling coefficients, regime
//!   validation, and builders for every Hamiltonian level of the reduction
//!   (full three-level model, ground-manifold model, rotating-frame model,
//!   effective dispersive model).
//! * [`evolve`] — time-evolution engines: fixed-step unitary integration,
//!   Lindblad open-system integration, and the closed-form evolution of the
//!   effective model.
//! * [`protocol`] — the two-step chi-state generation schedule, target
//!   state constructors, and protocol execution under any engine.
//! * [`analysis`] — timing-error fidelity sweeps, approximation-ladder
//!   cross-checks, entanglement diagnostics, decoherence impact, and the
//!   SI-unit feasibility report.
//! * [`config`] — the JSON run configuration consumed by the CLI.

pub mod analysis;
pub mod config;
pub mod error;
pub mod evolve;
pub mod model;
pub mod protocol;
pub mod statespace;

pub use error::{ChiError, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
