//! GF(2) binary matroid toolkit.
//!
//! Bit-packed linear algebra over GF(2), k-uniform hypergraph core peeling
//! with fixed-point size predictions, random column models, binary matroid
//! minors, a constructive minor-finding pipeline and a seeded Monte Carlo
//! experiment harness.

pub mod gf2;
pub mod harness;
pub mod hypergraph;
pub mod matroid;
pub mod pipeline;
pub mod poisson;
pub mod sampler;
