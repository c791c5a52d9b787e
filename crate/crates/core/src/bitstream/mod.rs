//! Entropy coding and framing: range coder, fixed-point pmfs, octree
//! coordinate coding and the container format.

mod adaptive;
mod container;
mod octree;
mod pmf;
mod range;

pub use adaptive::AdaptiveByteModel;
pub use container::{read_varint, write_varint, Bitstream, FLAG_NO_TRANSFORM, MAGIC, VERSION};
pub use octree::{coords_from_occupancy, occupancy_bytes, octree_decode, octree_encode};
pub use pmf::{quantize_pmf, range_decode, range_encode, Pmf16, PMF_BITS, PMF_TOTAL};
pub use range::{RangeDecoder, RangeEncoder, MAX_TOTAL};
