//! The joint codec: networks, quantization, entropy model, and the
//! encode/decode pipeline.

pub mod entropy;
mod model;
pub mod network;
mod pipeline;
mod quant;

pub use entropy::{channel_pmf, laplace_cdf, symbol_bits, EntropyModel, ALPHABET, QMAX, RATE_FLOOR};
pub use model::{ArchConfig, ModelKind, ModelParams};
pub use pipeline::{
    decode_attributes, decode_full, decode_geometry, decode_latent, encode_analysis, encode_full, encode_with_report,
    reconstruct, CodingReport, LatentCode,
};
pub use quant::{add_noise, quantize_matrix, quantize_round, QuantMode};
