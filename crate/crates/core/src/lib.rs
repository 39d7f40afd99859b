//! Compressed-layout compiler and interpreter for structured tensor algebra.
//!
//! A STUR program describes a tensor kernel together with the structure of
//! its operands (unique sets and redundancy maps). The compiler derives, for
//! every accessed region, a polynomial that maps a coordinate to its position
//! in a densely packed buffer, then builds loop nests that run directly over
//! those buffers.

pub mod affine;
pub mod codegen;
pub mod counting;
pub mod error;
pub mod indexing;
pub mod kernels;
pub mod poly;
pub mod polyhedra;
pub mod runtime;
pub mod stur;

pub use error::{Error, Result};
