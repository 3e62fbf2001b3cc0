//! Linear fusion of low-light enhancement outputs.
//!
//! Several enhancement methods are run independently on the same low-light
//! input and their output images are blended with scalar weights that sum to
//! a fixed constant (normally 1). This crate provides:
//!
//! - [`image`]: the [`Raster`] container and bit-exact PNG/PPM I/O,
//! - [`metrics`]: MSE, PSNR and SSIM plus dataset-level reports,
//! - [`enhancers`]: classical stand-in enhancers, random gamma augmentation
//!   and a seeded low-light degrader,
//! - [`fusion`]: weighted fusion, closed-form equality-constrained least
//!   squares, simplex grid sweeps and Gram diagnostics,
//! - [`ranking`]: weighted competition-rank aggregation,
//! - [`cli`]: the `lumafuse` command line front end.

pub mod cli;
pub mod enhancers;
mod error;
pub mod filter;
pub mod fusion;
pub mod image;
pub mod metrics;
pub mod ranking;

pub use error::{Error, Result};
pub use image::Raster;
