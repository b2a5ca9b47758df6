//! Error type shared across the crate.

use crate::modring::Domain;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum HeError {
    DomainMismatch { expected: Domain, found: Domain },
    ModulusMismatch,
    LengthMismatch { expected: usize, found: usize },
    IndexOutOfRange { index: usize, n: usize },
    ScaleMismatch { left: u64, right: u64 },
    MissingKey { shift: usize, swap: bool },
    BaseMismatch { keys: u32, operand: u32 },
    CapacityExceeded { terms: u64, s_max: u64 },
    UnsupportedLayout(String),
    InfeasibleLayer { w_min: u32 },
    DecryptionMargin { noise_bits: f64, margin_bits: f64 },
    PrimeSearchExhausted { bits: u32 },
    InvalidParams(String),
    Serialization(String),
}

impl fmt::Display for HeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeError::DomainMismatch { expected, found } => {
                write!(f, "domain mismatch: expected {expected:?}, found {found:?}")
            }
            HeError::ModulusMismatch => write!(f, "modulus or degree mismatch"),
            HeError::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            HeError::IndexOutOfRange { index, n } => {
                write!(f, "index {index} out of range for degree {n}")
            }
            HeError::ScaleMismatch { left, right } => {
                write!(f, "scale tags differ: {left} vs {right}")
            }
            HeError::MissingKey { shift, swap } => {
                write!(f, "no switching key for rotation (shift {shift}, swap {swap})")
            }
            HeError::BaseMismatch { keys, operand } => {
                write!(f, "decomposition base mismatch: keys W={keys}, operand W={operand}")
            }
            HeError::CapacityExceeded { terms, s_max } => {
                write!(f, "accumulation plan overflows 128-bit lanes ({terms} terms, max scalar {s_max})")
            }
            HeError::UnsupportedLayout(msg) => write!(f, "unsupported layout: {msg}"),
            HeError::InfeasibleLayer { w_min } => {
                write!(f, "no decomposition base down to W={w_min} leaves the required noise margin")
            }
            HeError::DecryptionMargin { noise_bits, margin_bits } => {
                write!(f, "noise {noise_bits:.1} bits exceeds margin {margin_bits:.1} bits")
            }
            HeError::PrimeSearchExhausted { bits } => {
                write!(f, "no admissible prime of {bits} bits")
            }
            HeError::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            HeError::Serialization(msg) => write!(f, "serialization error: {msg}"),
        }
    }
}

impl std::error::Error for HeError {}
