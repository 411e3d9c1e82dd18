//! Monte Carlo side of the toolkit: simulation of the small-noise diffusion
//! and its nilpotent limit, localization, loop sampling by rejection,
//! density and scaling estimates, the reweighted-bridge oracle, model files
//! and CSV export.

pub mod error;
pub mod io;
pub mod localize;
pub mod loops;
pub mod model;
pub mod modelfile;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use hypoloop_core as core;
pub use model::{FieldEval, SdeModel};
pub use simulate::{PathEnsemble, PathRecord, SimConfig};
