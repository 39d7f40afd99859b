//! Symbolic index functions, hoisting, and the buffer registry.

mod hoist;
mod registry;
mod symbolic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::affine::{AffineExpr, Constraint, Var};
use crate::error::{Error, Result};
use crate::polyhedra::{fm, iteration_space, positivity, Polyhedron};
use crate::stur::{build_compressed_summands, Program, Summand};

pub use hoist::{
    exact_div, hoist_schedule, schedule_terms, slot_table, HoistSchedule, IndexPlan, IntConstraint, IntKind, IntPoly, ModSlot,
};
pub use registry::{build_registry, regions_disjoint, regions_equal, Buffer, BufferRegistry};
pub use symbolic::{dense_index, index_access, symbolic_indexing, IndexFunction, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Compression {
    None,
    Input,
    InputOutput,
}

impl fmt::Display for Compression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compression::None => "none",
            Compression::Input => "input",
            Compression::InputOutput => "input+output",
        })
    }
}

impl FromStr for Compression {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "dense" => Ok(Compression::None),
            "input" => Ok(Compression::Input),
            "input+output" | "inout" | "all" => Ok(Compression::InputOutput),
            other => Err(Error::Invalid(format!("unknown compression level `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompiledSummand {
    pub summand: Summand,
    pub space: Polyhedron,
    /// Per access slot (output first); empty when not compressed.
    pub functions: Vec<std::result::Result<IndexFunction, Error>>,
}

#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub rule: String,
    pub params: Vec<Var>,
    pub summands: Vec<CompiledSummand>,
    pub registry: BufferRegistry,
    pub extents: BTreeMap<String, Vec<AffineExpr>>,
    pub compression: Compression,
}

impl CompiledRule {
    pub fn output(&self) -> &str {
        &self.summands[0].summand.output.tensor
    }

    /// Tensors read by the rule, in first-appearance order.
    pub fn inputs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.summands {
            for a in &s.summand.inputs {
                if !out.contains(&a.tensor) {
                    out.push(a.tensor.clone());
                }
            }
        }
        out
    }
}

fn params_of(cons: &[Constraint], dims: &[Var]) -> Vec<Var> {
    let mut p: Vec<Var> = cons
        .iter()
        .flat_map(|c| c.vars().into_iter())
        .filter(|v| !dims.contains(v))
        .collect();
    p.sort();
    p.dedup();
    p
}

/// `a >= b` for every admissible parameter value.
fn dominates(a: &AffineExpr, b: &AffineExpr) -> bool {
    let mut vars: Vec<Var> = a.vars().chain(b.vars()).cloned().collect();
    vars.sort();
    vars.dedup();
    fm::implies(&positivity(&vars), &Constraint::Ge(a.clone() - b.clone()))
}

/// Smallest provable exclusive upper bound of `dim` over one conjunction.
fn extent_in(cons: &[Constraint], dims: &[Var], dim: &str) -> Option<AffineExpr> {
    let mut sys = cons.to_vec();
    for d in dims.iter().filter(|d| *d != dim) {
        sys = fm::eliminate_relaxed(&sys, d);
    }
    let one = AffineExpr::constant(1);
    let mut cands: Vec<AffineExpr> = Vec::new();
    for c in &sys {
        let (e, is_eq) = match c {
            Constraint::Ge(e) => (e, false),
            Constraint::Eq(e) => (e, true),
            Constraint::Mod { .. } => continue,
        };
        let k = e.coeff(dim);
        if k.is_integer() && (k.to_integer() == -1 || (is_eq && k.to_integer() == 1)) {
            let bound = fm::solve_for(e, dim);
            if bound.is_integral() {
                cands.push(bound + one.clone());
            }
        }
    }
    let best = cands
        .iter()
        .find(|c| cands.iter().all(|o| dominates(o, c)))
        .or(cands.first())?;
    Some(best.clone())
}

fn join_extents(cands: Vec<AffineExpr>) -> Option<AffineExpr> {
    cands
        .iter()
        .find(|c| cands.iter().all(|o| dominates(c, o)))
        .cloned()
}

/// Dense extents of `tensor`: declared shape, else the bounds of its unique
/// set, else the bounds of the iterators indexing it.
pub fn tensor_extents(p: &Program, rule: &str, tensor: &str) -> Result<Vec<AffineExpr>> {
    if let Some(s) = p.shapes.get(tensor) {
        return Ok(s.clone());
    }
    let unknown = |dim| Error::UnknownExtent {
        tensor: tensor.to_string(),
        dim,
    };
    if let Some(u) = p.unique_sets.get(tensor) {
        let mut out = Vec::new();
        for (k, x) in u.iters.iter().enumerate() {
            let cands: Option<Vec<AffineExpr>> =
                u.pieces.iter().map(|c| extent_in(c, &u.iters, x)).collect();
            out.push(cands.and_then(join_extents).ok_or_else(|| unknown(k))?);
        }
        return Ok(out);
    }
    let r = p.rule(rule).ok_or_else(|| Error::UnknownKernel(rule.to_string()))?;
    let mut arity = None;
    let mut per_dim: Vec<Vec<AffineExpr>> = Vec::new();
    for s in &r.summands {
        for a in s.accesses().filter(|a| a.tensor == tensor) {
            arity = Some(a.indices.len());
            per_dim.resize(a.indices.len(), Vec::new());
            for (k, x) in a.indices.iter().enumerate() {
                per_dim[k].push(extent_in(&s.constraints, &s.iterators, x).ok_or_else(|| unknown(k))?);
            }
        }
    }
    let n = arity.ok_or_else(|| unknown(0))?;
    (0..n)
        .map(|k| join_extents(per_dim[k].clone()).ok_or_else(|| unknown(k)))
        .collect()
}

/// Compressed summands, their index functions, and the buffer registry.
pub fn compile_rule(p: &Program, rule: &str, compression: Compression) -> Result<CompiledRule> {
    let summands = build_compressed_summands(p, rule)?;
    let mut compiled = Vec::new();
    for s in summands {
        let space = iteration_space(&s)?;
        let mut functions = Vec::new();
        if !s.empty && compression != Compression::None {
            for (slot, a) in s.accesses().enumerate() {
                let wanted = slot > 0 || compression == Compression::InputOutput;
                functions.push(if wanted {
                    index_access(&space, a)
                } else {
                    Err(Error::Invalid("not compressed".into()))
                });
            }
        }
        compiled.push(CompiledSummand {
            summand: s,
            space,
            functions,
        });
    }
    let mut extents = BTreeMap::new();
    let mut params: Vec<Var> = Vec::new();
    for cs in &compiled {
        params.extend(params_of(&cs.summand.constraints, &cs.summand.iterators));
        for a in cs.summand.accesses() {
            if !extents.contains_key(&a.tensor) {
                if let Ok(e) = tensor_extents(p, rule, &a.tensor) {
                    extents.insert(a.tensor.clone(), e);
                }
            }
        }
    }
    for e in extents.values().flatten() {
        params.extend(e.vars().cloned());
    }
    params.sort();
    params.dedup();
    let registry = build_registry(&compiled, compression, &extents)?;
    Ok(CompiledRule {
        rule: rule.to_string(),
        params,
        summands: compiled,
        registry,
        extents,
        compression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stur::parse_program;

    const TTM: &str = "
shape A(M, N, P)
B_U(i, j, l) := (0 <= i < M) * (i <= j < N) * (0 <= l < Q)
C_U(k, l) := (0 <= k < P) * (0 <= l < Q)
A(i, j, k) := B(i, j, l) * C(k, l)
";

    #[test]
    fn extents_from_shape_and_unique_sets() {
        let p = parse_program(TTM).unwrap();
        let b = tensor_extents(&p, "A", "B").unwrap();
        let want: Vec<AffineExpr> = ["M", "N", "Q"].iter().map(|v| AffineExpr::var(v)).collect();
        assert_eq!(b, want);
        assert_eq!(tensor_extents(&p, "A", "A").unwrap().len(), 3);
    }

    #[test]
    fn compression_levels_parse() {
        for c in [Compression::None, Compression::Input, Compression::InputOutput] {
            assert_eq!(c.to_string().parse::<Compression>().unwrap(), c);
        }
        assert!("zip".parse::<Compression>().is_err());
    }

    #[test]
    fn ttm_registry_compresses_inputs() {
        let p = parse_program(TTM).unwrap();
        let c = compile_rule(&p, "A", Compression::Input).unwrap();
        let b = c.registry.buffers_of("B").next().unwrap();
        assert_eq!(b.function.layout, Layout::Compressed);
        let a = c.registry.buffers_of("A").next().unwrap();
        assert_eq!(a.function.layout, Layout::Dense);
        assert!(c.registry.demoted.is_empty());
    }

    #[test]
    fn overlapping_reads_demote() {
        // the same tensor read through two overlapping windows
        let src = "
shape X(n)
shape Y(n)
Y(i) := X(i) * (0 <= i < n) + X(j) * (0 <= i < n) * (j = i + 1) * (j < n)
";
        let p = parse_program(src).unwrap();
        let c = compile_rule(&p, "Y", Compression::Input).unwrap();
        assert_eq!(c.registry.demoted.get("X").map(String::as_str), Some("partial-overlap"));
    }
}
