//! Element counts of dense, unique-set, and compressed storage.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::affine::{Rat, Var};
use crate::counting::count_points;
use crate::error::Result;
use crate::indexing::CompiledRule;
use crate::polyhedra::Polyhedron;
use crate::stur::{expand_symbolic_mods, Program};

use super::pack::eval_extents;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorFootprint {
    pub tensor: String,
    pub output: bool,
    /// Full dense extent product.
    pub dense: i128,
    /// Unique-set size for inputs, dense size for outputs.
    pub unique_input: i128,
    /// Sum of the registry's buffer sizes.
    pub compressed: i128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub tensors: Vec<TensorFootprint>,
}

impl Footprint {
    pub fn dense_total(&self) -> i128 {
        self.tensors.iter().map(|t| t.dense).sum()
    }

    pub fn unique_input_total(&self) -> i128 {
        self.tensors.iter().map(|t| t.unique_input).sum()
    }

    pub fn compressed_total(&self) -> i128 {
        self.tensors.iter().map(|t| t.compressed).sum()
    }

    /// Dense elements over compressed elements.
    pub fn rate(&self) -> Rat {
        ratio(self.dense_total(), self.compressed_total())
    }

    /// Dense elements over unique-input-plus-dense-output elements.
    pub fn unique_input_rate(&self) -> Rat {
        ratio(self.dense_total(), self.unique_input_total())
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorFootprint> {
        self.tensors.iter().find(|t| t.tensor == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.tensors {
            let _ = writeln!(
                out,
                "{} {}: dense={} unique_input={} compressed={} rate={}",
                if t.output { "output" } else { "input" },
                t.tensor,
                t.dense,
                t.unique_input,
                t.compressed,
                rate_text(&ratio(t.dense, t.compressed))
            );
        }
        let _ = writeln!(
            out,
            "total: dense={} unique_input={} compressed={} rate={} unique_input_rate={}",
            self.dense_total(),
            self.unique_input_total(),
            self.compressed_total(),
            rate_text(&self.rate()),
            rate_text(&self.unique_input_rate())
        );
        out
    }
}

/// `a / b`, or `a / 1` when nothing is stored.
pub fn ratio(a: i128, b: i128) -> Rat {
    Rat::new(a, b.max(1))
}

/// Exact value plus a decimal rendering: `50005000/25005000 (1.9998)`.
pub fn rate_text(r: &Rat) -> String {
    let approx = *r.numer() as f64 / *r.denom() as f64;
    if r.is_integer() {
        format!("{} ({approx:.4})", r.numer())
    } else {
        format!("{}/{} ({approx:.4})", r.numer(), r.denom())
    }
}

fn unique_count(p: &Program, tensor: &str, binding: &HashMap<Var, i64>) -> Result<Option<i128>> {
    let Some(u) = p.unique_sets.get(tensor) else {
        return Ok(None);
    };
    let mut total = 0i128;
    for piece in &u.pieces {
        for cons in expand_symbolic_mods(piece.clone())? {
            let mut params: Vec<Var> = cons
                .iter()
                .flat_map(|c| c.vars())
                .filter(|v| !u.iters.contains(v))
                .collect();
            params.sort();
            params.dedup();
            let poly = Polyhedron::new(u.iters.clone(), params, cons);
            if poly.empty {
                continue;
            }
            total += count_points(&poly, &poly.dims)?.evaluate(binding)?;
        }
    }
    Ok(Some(total))
}

/// Symbolic sizes evaluated at `binding`; no tensor data is allocated.
pub fn footprint_report(p: &Program, c: &CompiledRule, binding: &HashMap<Var, i64>) -> Result<Footprint> {
    let out_name = c.output().to_string();
    let mut names = vec![out_name.clone()];
    names.extend(c.inputs());
    let mut tensors = Vec::new();
    for t in names {
        let output = t == out_name;
        let dense: i128 = match c.extents.get(&t) {
            Some(e) => eval_extents(e, binding)?.iter().map(|&x| x as i128).product(),
            None => 0,
        };
        let unique_input = if output {
            dense
        } else {
            unique_count(p, &t, binding)?.unwrap_or(dense)
        };
        let mut compressed = 0i128;
        for b in c.registry.buffers_of(&t) {
            compressed += b.function.size_at(binding)?.max(0);
        }
        tensors.push(TensorFootprint {
            tensor: t,
            output,
            dense,
            unique_input,
            compressed,
        });
    }
    Ok(Footprint { tensors })
}
