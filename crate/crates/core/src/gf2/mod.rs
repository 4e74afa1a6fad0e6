//! Bit-packed linear algebra over GF(2).
//!
//! Matrices are stored row-major as 64-bit words, little-endian bit order
//! within a word. All arithmetic is exact; there are no tolerances.

mod bitvec;
mod io;
mod matrix;

pub use bitvec::BitVec;
pub use io::{read_matrix, write_matrix, FormatError};
pub use matrix::{EchelonResult, GF2Matrix, SolutionSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("matrix is singular (rank {rank} < {n})")]
    SingularMatrix { rank: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
