//! Zhang neural network (ZNN) solvers for time-varying matrix problems.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: dense matrices, LU, right generalized inverse, polynomial roots
//! * [`fdforms`]: finite-difference stencils with exact rational weights
//! * [`stability`]: characteristic polynomials and the root condition
//! * [`problems`]: benchmark signals and ground-truth oracles
//! * [`models`]: the discrete ZNN steppers
//! * [`harness`]: run configuration, sweeps, trace files and plots

pub mod fdforms;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod problems;
pub mod stability;

pub use fdforms::{FdFormula, UpdateWeights};
pub use linalg::{Mat, RealPoly};
pub use models::{DecaySpec, DerivativeMode, InitMode, SolverKind, ZnnRun};
pub use stability::StabilityReport;
