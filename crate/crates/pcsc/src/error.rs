//! Crate-wide error type.

use std::fmt;

/// Failures surfaced by the codec.
///
/// Variants carry enough context to point at the offending input: byte
/// offsets for parsers, Morton keys for geometry mismatches, key names for
/// configuration problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed PLY header or payload.
    Ply {
        /// Byte offset of the problem, when known.
        offset: usize,
        reason: String,
    },
    /// Input violates a geometric precondition (empty cloud, bad depth, ...).
    Geometry(String),
    /// Two clouds that must share a voxel set differ.
    CoordMismatch {
        /// First differing Morton key.
        key: u64,
    },
    /// A solver precondition failed (non-SPD operator, divergence risk, ...).
    Solver(String),
    /// Configuration problem; names the offending key.
    Config { key: String, reason: String },
    /// Bitstream container cannot be decoded; names the offending field.
    Bitstream { field: String, reason: String },
    /// Entropy-coded chunk is corrupt or truncated.
    Entropy { offset: usize, reason: String },
    /// Numerical failure in the encoder (non-finite objective, overflow).
    Numeric(String),
    /// Filesystem error wrapped with the path involved.
    Io { path: String, reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Ply { offset, reason } => {
                write!(f, "ply error at byte {offset}: {reason}")
            }
            Error::Geometry(reason) => write!(f, "geometry error: {reason}"),
            Error::CoordMismatch { key } => {
                write!(f, "voxel sets differ, first differing Morton key {key:#x}")
            }
            Error::Solver(reason) => write!(f, "solver error: {reason}"),
            Error::Config { key, reason } => write!(f, "config key \"{key}\": {reason}"),
            Error::Bitstream { field, reason } => {
                write!(f, "bitstream field \"{field}\": {reason}")
            }
            Error::Entropy { offset, reason } => {
                write!(f, "entropy chunk error at bit {offset}: {reason}")
            }
            Error::Numeric(reason) => write!(f, "numeric error: {reason}"),
            Error::Io { path, reason } => write!(f, "io error on {path}: {reason}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
