//! STUR programs: parsing, printing, simplification, and compressed summands.

mod ast;
mod compress;
mod parser;
mod simplify;

pub use ast::{Access, Program, RedundancyMap, Rule, Summand, UniqueSet};
pub use compress::{build_compressed_summands, expand_symbolic_mods};
pub use parser::{parse_constraints, parse_program, print_program};
pub use simplify::{drop_implied, simplify_summand};
