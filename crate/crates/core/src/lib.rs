//! Soft-pulse dynamical decoupling of a single qubit under slow classical
//! noise and Markovian decoherence: pulse coefficients, cumulant expansion
//! of the average decoherence operator, noise synthesis, and ensemble
//! propagation of the Bloch evolution matrix.

pub mod coeffs;
pub mod config;
pub mod designer;
pub mod ensemble;
pub mod error;
pub mod fidelity;
pub mod linalg;
pub mod magnus;
pub mod noise;
pub mod propagator;
pub mod quadrature;
pub mod rates;
pub mod runner;
pub mod sequences;
pub mod shapes;
pub mod verify;

pub use coeffs::{compute_coefficients, ShapeCoefficients};
pub use error::{Error, Result};
pub use linalg::{Mat3, Vec3};
pub use shapes::{PulseInstance, PulseShape, ShapeKind, ShapeRegistry};
