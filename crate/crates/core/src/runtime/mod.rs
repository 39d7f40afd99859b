//! Dense tensors, packing, the reference oracle, and footprint accounting.

mod footprint;
mod pack;
mod reference;
mod run;
mod tensor;

pub use footprint::{footprint_report, rate_text, ratio, Footprint, TensorFootprint};
pub use pack::{apply_redundancy, eval_extents, pack, pack_all, unpack, unpack_output};
pub use reference::{dense_shape, random_inputs, reference_execute, structured_input};
pub use run::{max_relative_error, run_plan, run_verified, Verified};
pub use tensor::{DenseTensor, Scalar};
