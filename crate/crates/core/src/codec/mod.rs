//! Parameter quantization, bit allocation, entropy coding and the
//! bitstream container.

pub mod aac;
pub mod bits;
pub mod channel;
pub mod cholesky;
pub mod container;
pub mod quant;

pub use aac::{aac_decode, aac_encode};
pub use bits::{bit_table, candidate_bits, BitTable, Param};
pub use channel::{ChannelSection, BlockSymbols};
pub use cholesky::{cholesky_r, CholeskyFactors};
pub use container::{Bitstream, GeometryHeader, MAGIC, VERSION};
pub use quant::QuantParam;
