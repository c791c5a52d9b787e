//! Learned joint geometry and color compression for voxelized point clouds.
//!
//! One analysis encoder turns an RGB point cloud into a stride-8 latent.
//! Two decoders read that latent back: the geometry decoder grows the
//! voxel set with top-k occupancy pruning, and the attribute decoder
//! colors exactly the voxels the geometry decoder produced.
//!
//! Module map:
//! - [`cloud`]: point clouds, PLY I/O, voxel utilities, color spaces, nearest neighbors
//! - [`sparse`]: sparse tensors, sparse convolutions, reverse-mode autodiff
//! - [`bitstream`]: range coder, octree coder, container format
//! - [`codec`]: network graphs, quantization, entropy model, encode/decode
//! - [`training`]: losses, Adam, the three-stage schedule, teacher training
//! - [`metrics`]: D1-PSNR, Y-PSNR, BD-rate, rate-distortion curves
//! - [`datagen`]: synthetic colored shapes
//! - [`app`]: the command-line workflow behind the `sedd` binary

pub mod app;
pub mod bitstream;
pub mod cloud;
pub mod codec;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod sparse;
pub mod training;

pub use cloud::{PointCloud, Coord, Rgb};
pub use error::{Error, Result};
