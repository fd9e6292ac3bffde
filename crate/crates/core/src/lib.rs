//! Counterfactual shape morphologies by deformation-based targeted adversarial
//! attacks.
//!
//! A cubic B-spline free-form deformation (FFD) is optimized at test time so that
//! the warped occupancy volume is classified as a chosen target class by every
//! member of a frozen classifier ensemble. Smoothness and bending-energy penalties
//! keep the deformation plausible.
//!
//! Module map:
//!
//! - [`volume`]: dense 3D occupancy grids, trilinear sampling, SVOL files, manifests.
//! - [`ffd`]: lattice geometry, displacement fields, warping and its adjoint.
//! - [`regularize`]: smoothness and bending penalties with exact gradients.
//! - [`classifier`]: differentiable linear / small convnet classifiers, training, metrics.
//! - [`attack`]: the smooth worst-case margin loss and the attack loop.
//! - [`synth`]: synthetic labeled "skulloid" volumes.
//! - [`export`]: PGM slice export.
//! - [`cli`]: the `cfmorph` command-line tool.

pub mod attack;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod export;
pub mod ffd;
pub mod optim;
pub mod regularize;
pub mod rng;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
