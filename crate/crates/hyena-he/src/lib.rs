//! Leveled BFV homomorphic encryption with three encrypted-convolution
//! algorithms (conventional packed, padded, and Walsh-Hadamard
//! output-channel packing), encryption-parameter search, lazy-reduction
//! accumulation, and a storage/communication cost model.

pub mod bfv;
pub mod conv;
pub mod error;
pub mod harness;
pub mod modring;
pub mod oracle;
pub mod params;

pub use error::HeError;
