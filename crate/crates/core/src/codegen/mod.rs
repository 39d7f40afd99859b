//! Loop nests, executable plans, the interpreter, and C emission.

mod emit_c;
mod exec;
mod loopnest;
mod plan;

pub use emit_c::emit_c;
pub use exec::{execute, ExecOptions, ExecStats};
pub use loopnest::{Bound, Level, LevelKind, LoopNest};
pub use plan::{AccessPlan, KernelPlan, Schedule, SummandPlan};
