//! Transmission and distribution frequency-dynamics co-simulation engine.
//!
//! The engine couples a positive-sequence transmission dynamics solver with
//! three-phase distribution quasi-static power-flow solvers through a
//! conservative, deterministic time-synchronization kernel. Distributed
//! energy resources respond to frequency with droop (primary response) and
//! centrally dispatched AGC setpoints (secondary response) while a
//! sensitivity-based linear program keeps their combined output inside
//! feeder voltage and thermal limits.
//!
//! Module map:
//! - [`cosim`]: federate registration, time grants, message routing.
//! - [`transmission`]: network model, power flow, mass-matrix DAE dynamics.
//! - [`agc`]: area control error, PI control, participation dispatch.
//! - [`der`]: DER droop, command limiting, first-order tracking.
//! - [`distribution`]: three-phase feeder model and sweep solver.
//! - [`headroom`]: voltage-sensitivity matrix and headroom maximization.
//! - [`scenario`]: configuration, noise, federation assembly, outputs.
//!
//! Numeric kernels ([`linalg`], [`simplex`], [`dae`]) are generic over the
//! [`Scalar`] floating-point type; the engine itself runs on [`Real`].

pub mod agc;
pub mod cosim;
pub mod dae;
pub mod der;
pub mod distribution;
pub mod headroom;
pub mod linalg;
pub mod scalar;
pub mod scenario;
pub mod simplex;
pub mod transmission;

/// Floating-point type used by the concrete engine.
pub type Real = f64;

/// Complex phasor over [`Real`].
pub type Cplx = num_complex::Complex<Real>;

pub use scalar::Scalar;

/// Nominal system frequency in Hz.
pub const F_NOMINAL_HZ: Real = 60.0;
