//! Exact polynomial vector fields over the rationals and the algebra built on
//! them: Lie brackets, graded weights, bracket flags, adapted charts and
//! nilpotent approximations of hypoelliptic systems.
//!
//! Everything here runs on `alloc` only. Floating-point evaluation lives in
//! [`compiled`]; simulation and IO are in the `hypoloop` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod chart;
pub mod compiled;
pub mod error;
pub mod field;
pub mod grading;
pub mod linalg;
pub mod map;
pub mod nilpotent;
pub mod poly;
pub mod syntax;
pub mod weights;

/// Exact coefficients.
pub type Rational = num_rational::BigRational;

pub use chart::{construct_adapted, validate_adapted, AdaptedChart, Certificate, Validation, Violation};
pub use compiled::{CompiledField, CompiledMap, CompiledPoly};
pub use error::{Error, Result};
pub use field::{apply_operator, ito_drift_correction, lie_bracket, PolyVectorField};
pub use grading::{build_graded_structure, BracketTable, GradedStructure, DEFAULT_MAX_DEPTH};
pub use map::{pushforward, PolyMap, DEFAULT_MAX_DEGREE};
pub use nilpotent::{nilpotentize, NilpotentSystem};
pub use poly::{Monomial, Polynomial};
pub use syntax::{parse_field, parse_polynomial, parse_rational, VarNames};
pub use weights::{graded_truncate, graded_weight, Dilation, GradedWeight, Weights};
