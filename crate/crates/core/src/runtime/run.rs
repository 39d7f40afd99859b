//! Compile, pack, execute, unpack, and compare against the dense oracle.

use std::collections::HashMap;

use crate::affine::Var;
use crate::codegen::{execute, ExecOptions, ExecStats, KernelPlan};
use crate::error::Result;
use crate::indexing::{compile_rule, Compression};
use crate::stur::Program;

use super::pack::{pack_all, unpack_output};
use super::reference::{random_inputs, reference_execute};
use super::tensor::{DenseTensor, Scalar};

#[derive(Clone, Debug)]
pub struct Verified<T> {
    pub output: DenseTensor<T>,
    pub reference: DenseTensor<T>,
    pub stats: ExecStats,
    /// Largest `|a - b| / max(|a|, |b|, 1)` over all positions.
    pub max_rel: f64,
    pub pass: bool,
}

pub fn max_relative_error<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> f64 {
    if a.shape != b.shape {
        return f64::INFINITY;
    }
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Runs a prepared plan on `inputs` and unpacks the output.
pub fn run_plan<T: Scalar>(
    p: &Program,
    plan: &KernelPlan,
    inputs: &std::collections::BTreeMap<String, DenseTensor<T>>,
    binding: &HashMap<Var, i64>,
    opts: ExecOptions,
) -> Result<(DenseTensor<T>, ExecStats)> {
    let mut bufs = pack_all(&plan.compiled, inputs, binding)?;
    let stats = execute(plan, binding, &mut bufs, opts)?;
    Ok((unpack_output(p, &plan.compiled, &bufs, binding)?, stats))
}

/// Full pipeline on seeded structured inputs, checked against the oracle.
pub fn run_verified<T: Scalar>(
    p: &Program,
    rule: &str,
    compression: Compression,
    binding: &HashMap<Var, i64>,
    seed: u64,
    opts: ExecOptions,
) -> Result<Verified<T>> {
    let plan = KernelPlan::build(compile_rule(p, rule, compression)?)?;
    let inputs = random_inputs::<T>(p, rule, binding, seed)?;
    let (output, stats) = run_plan(p, &plan, &inputs, binding, opts)?;
    let reference = reference_execute(p, rule, binding, &inputs)?;
    let pass = output.first_difference(&reference).is_none();
    let max_rel = max_relative_error(&output, &reference);
    Ok(Verified {
        output,
        reference,
        stats,
        max_rel,
        pass,
    })
}
