use std::collections::BTreeMap;

use crate::affine::{AffineExpr, Constraint, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access {
    pub tensor: String,
    pub indices: Vec<Var>,
}

impl Access {
    pub fn new(tensor: &str, indices: &[&str]) -> Self {
        Access {
            tensor: tensor.to_string(),
            indices: indices.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summand {
    pub output: Access,
    pub inputs: Vec<Access>,
    pub constraints: Vec<Constraint>,
    /// Iterators of this summand in first-appearance order of the rule.
    pub iterators: Vec<Var>,
    /// Set by simplification when the constraints are contradictory.
    pub empty: bool,
}

impl Summand {
    pub fn accesses(&self) -> impl Iterator<Item = &Access> {
        std::iter::once(&self.output).chain(self.inputs.iter())
    }

    /// Symbols: every variable of the constraints that is not an iterator.
    pub fn symbols(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self
            .constraints
            .iter()
            .flat_map(|c| c.vars())
            .filter(|v| !self.iterators.contains(v))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub summands: Vec<Summand>,
}

/// `T_U(x, ...) := piece + piece + ...`; each piece is a conjunction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniqueSet {
    pub iters: Vec<Var>,
    pub pieces: Vec<Vec<Constraint>>,
}

impl UniqueSet {
    /// Full box `0 <= x_k < extent_k`.
    pub fn full_box(iters: &[Var], extents: &[AffineExpr]) -> Self {
        let cons = iters
            .iter()
            .zip(extents)
            .flat_map(|(x, e)| {
                [
                    Constraint::le(AffineExpr::zero(), AffineExpr::var(x)),
                    Constraint::lt(AffineExpr::var(x), e.clone()),
                ]
            })
            .collect();
        UniqueSet {
            iters: iters.to_vec(),
            pieces: vec![cons],
        }
    }
}

/// `T_R(x, ..., x', ...) := domain * (x' = f(x)) ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedundancyMap {
    pub iters: Vec<Var>,
    pub primed: Vec<Var>,
    /// Redundant positions (constraints over `iters` and symbols).
    pub domain: Vec<Constraint>,
    /// `primed[k] = image[k]`, affine in `iters`.
    pub image: Vec<AffineExpr>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub unique_sets: BTreeMap<String, UniqueSet>,
    pub redundancy_maps: BTreeMap<String, RedundancyMap>,
    /// Declared dense extents, `shape T(e1, e2, ...)`.
    pub shapes: BTreeMap<String, Vec<AffineExpr>>,
}

impl Program {
    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// All symbols mentioned anywhere in the program, sorted.
    pub fn symbols(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for r in &self.rules {
            for s in &r.summands {
                out.extend(s.symbols());
            }
        }
        for u in self.unique_sets.values() {
            for p in &u.pieces {
                out.extend(p.iter().flat_map(|c| c.vars()).filter(|v| !u.iters.contains(v)));
            }
        }
        for e in self.shapes.values().flatten() {
            out.extend(e.vars().cloned());
        }
        out.sort();
        out.dedup();
        out
    }
}
