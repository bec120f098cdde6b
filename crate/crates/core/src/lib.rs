//! Geometry and fusion kernels for panoramic semantic scene completion.
//!
//! The crate covers the full path from a calibrated panoramic annular lens
//! (PAL) image to per-voxel semantic scores:
//!
//! - [`camera`]: Taylor radial model, equirectangular angles, point projection.
//! - [`unwrap`]: annulus to equirectangular remap tables and bilinear resampling.
//! - [`bigrid`]: Cartesian and cylindrical-polar voxel grids, cross-grid index tables.
//! - [`lifting`]: voxel-centroid feature lifting with gait displacement compensation
//!   and convex multi-scale fusion.
//! - [`amoe3d`]: polar injection, channel/spatial saliency gates and the
//!   gradient-energy gated mixture of experts.
//! - [`ssc`]: argmax labeling, CE/SCAL/FP losses and SSC metrics.
//! - [`synth`]: small synthetic voxel worlds and an ideal panoramic renderer.
//! - [`ptns`], [`manifest`]: on-disk formats.

pub mod amoe3d;
pub mod bigrid;
pub mod camera;
mod error;
pub mod lifting;
pub mod manifest;
pub mod ptns;
pub mod reduce;
pub mod sampling;
pub mod ssc;
pub mod synth;
pub mod unwrap;

pub use error::{Error, Result};
