//! Numerical laboratory for the self-similar Smoluchowski coagulation
//! equation with kernels `K = 2 + eps * W`.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: kernel families and their validation,
//! - [`grid`]: grids, quadrature, interpolation, convolution, tail primitives,
//! - [`norms`]: weighted norms and the embedding/interpolation constants,
//! - [`coagulation`]: the coagulation operator and its bilinear form,
//! - [`evolution`]: mild-form time stepping and the physical change of variables,
//! - [`profiles`]: self-similar profiles as fixed points of the integrated equation,
//! - [`linearized`]: the linearised operator, its splitting and gap estimates,
//! - [`fourier`]: explicit lower bounds on Fourier moduli and the L² envelope,
//! - [`harness`]: rate fitting, configuration, presets and report emission.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coagulation;
pub mod error;
pub mod evolution;
pub mod fourier;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod linearized;
pub mod norms;
pub mod profiles;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{make_grid, Grid, GridFunction, GridKind};
pub use kernels::{KernelSpec, PerturbationFamily};
pub use norms::NormKind;
