//! Robust local polynomial M-estimation with data-driven contrast, kernel and
//! bandwidth selection.

pub mod cli;
pub mod config;
pub mod contrast;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod lepski;
pub mod lpa;
pub mod parametric;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod variance;

pub use contrast::{ContrastKind, ContrastSpec};
pub use error::{Error, Result};
pub use kernel::{Bandwidth, KernelSpec};
pub use lpa::{fit_lpa, LpaConfig, LpaFit};
pub use simulate::{ModelSpec, SampleSet};
