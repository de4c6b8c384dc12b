//! Numerical laboratory for open-quantum-system dynamics with memory.
//!
//! The crate bundles four layers that build on one another:
//!
//! - [`hilbert`]: dense complex linear algebra and quantum-information
//!   primitives (trace distance, partial trace, Choi matrices, Haar-random
//!   states and unitaries, matrix exponentials).
//! - [`grw`]: Monte Carlo unraveling of the GRW localization process: a
//!   piecewise-deterministic jump process for a wavefunction on a 1-D
//!   position grid.
//! - [`lindblad`]: Lindblad generators and their dense superoperator
//!   representation, including the position-localization generator, its
//!   translationally covariant momentum-kick form, exact propagation and the
//!   closed-form decoherence solution.
//! - [`nonmarkov`]: trace-distance non-Markovianity analysis (distance
//!   trajectories, BLP measure, CP-divisibility of intermediate maps) on
//!   families of dynamical maps.
//! - [`composite`]: exact system+environment unitary dynamics at small
//!   dimension and the information-flow bound relating distinguishability
//!   revivals to correlations and environment-state changes.
//!
//! Everything works in units with ħ = 1; all quantities are dimensionless
//! internally. Randomized routines take explicit seeds and are deterministic
//! per seed on a fixed platform.

pub mod composite;
pub mod grw;
pub mod hilbert;
pub mod lindblad;
pub mod nonmarkov;

pub use hilbert::{CMatrix, CVector, DensityMatrix};
pub use num_complex::Complex64;
