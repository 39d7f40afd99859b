//! Parametric integer-point counting with piecewise quasi-polynomials.

mod count;
pub mod faulhaber;
mod fusion;

use std::collections::HashMap;
use std::fmt;

use crate::affine::{all_hold, is_falsum, normalize_all, Constraint, Rat, Var};
use crate::error::{Error, Result};
use crate::poly::QuasiPolynomial;
use crate::polyhedra::fm;

pub use count::{count_points, count_points_with};
pub use faulhaber::{faulhaber_sum, DEFAULT_MAX_DEGREE};
pub use fusion::{fuse_piecewise, fuse_pieces_only};

/// A disjoint union of conjunctions.
pub type Domain = Vec<Vec<Constraint>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub domain: Domain,
    pub poly: QuasiPolynomial,
}

impl Piece {
    pub fn contains(&self, values: &HashMap<Var, i64>) -> bool {
        self.domain
            .iter()
            .any(|c| all_hold(c, values).unwrap_or(false))
    }

    pub fn equality_count(&self) -> usize {
        self.domain
            .iter()
            .map(|c| c.iter().filter(|x| matches!(x, Constraint::Eq(_))).count())
            .max()
            .unwrap_or(0)
    }
}

/// Piecewise polynomial over `vars`, defined on the universe `context`.
/// Universe points covered by no piece have value 0; pieces are pairwise
/// disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseQuasiPolynomial {
    pub vars: Vec<Var>,
    pub context: Vec<Constraint>,
    pub pieces: Vec<Piece>,
}

impl PiecewiseQuasiPolynomial {
    pub fn zero(vars: Vec<Var>, context: Vec<Constraint>) -> Self {
        PiecewiseQuasiPolynomial {
            vars,
            context,
            pieces: vec![],
        }
    }

    /// The single polynomial when one piece covers the whole universe.
    pub fn as_total(&self) -> Option<&QuasiPolynomial> {
        match self.pieces.as_slice() {
            [p] if complement(&p.domain, &self.context).is_empty() => Some(&p.poly),
            [] => None,
            _ => None,
        }
    }

    pub fn piece_at(&self, values: &HashMap<Var, i64>) -> Result<Option<&Piece>> {
        for v in &self.vars {
            if !values.contains_key(v) {
                return Err(Error::MissingBinding(v.clone()));
            }
        }
        if !all_hold(&self.context, values).unwrap_or(false) {
            return Err(Error::OutsideDomain);
        }
        Ok(self.pieces.iter().find(|p| p.contains(values)))
    }

    pub fn evaluate_rat(&self, values: &HashMap<Var, i64>) -> Result<Rat> {
        match self.piece_at(values)? {
            Some(p) => p.poly.eval(values).ok_or(Error::OutsideDomain),
            None => Ok(Rat::from_integer(0)),
        }
    }

    /// Exact integer value at a point of the universe.
    pub fn evaluate(&self, values: &HashMap<Var, i64>) -> Result<i128> {
        let v = self.evaluate_rat(values)?;
        if v.is_integer() {
            Ok(v.to_integer())
        } else {
            Err(Error::NonInteger(crate::affine::fmt_rat(&v)))
        }
    }

    /// Pointwise sum; both operands must share the universe.
    pub fn add(&self, other: &Self) -> Self {
        let ctx = &self.context;
        let mut pieces = Vec::new();
        let rest_b = complement(&union_of(&other.pieces), ctx);
        let rest_a = complement(&union_of(&self.pieces), ctx);
        for a in &self.pieces {
            for b in &other.pieces {
                let d = intersect(&a.domain, &b.domain, ctx);
                let poly = &a.poly + &b.poly;
                if !d.is_empty() && !poly.is_zero() {
                    pieces.push(Piece { domain: d, poly });
                }
            }
            let d = intersect(&a.domain, &rest_b, ctx);
            if !d.is_empty() {
                pieces.push(Piece {
                    domain: d,
                    poly: a.poly.clone(),
                });
            }
        }
        for b in &other.pieces {
            let d = intersect(&rest_a, &b.domain, ctx);
            if !d.is_empty() {
                pieces.push(Piece {
                    domain: d,
                    poly: b.poly.clone(),
                });
            }
        }
        let mut vars = self.vars.clone();
        for v in &other.vars {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        PiecewiseQuasiPolynomial {
            vars,
            context: ctx.clone(),
            pieces: pieces
                .into_iter()
                .map(|p| Piece {
                    domain: p.domain.iter().map(|c| simplify_in(c, ctx)).collect(),
                    poly: p.poly,
                })
                .collect(),
        }
    }

    pub fn max_denominator(&self) -> i128 {
        self.pieces
            .iter()
            .map(|p| p.poly.denominator_lcm())
            .max()
            .unwrap_or(1)
    }

    pub fn total_degree(&self) -> u32 {
        self.pieces
            .iter()
            .map(|p| p.poly.total_degree())
            .max()
            .unwrap_or(0)
    }

    /// Render with the polynomial grouped by `order` (loop nesting).
    pub fn display_nested(&self, order: &[Var]) -> String {
        if let Some(p) = self.as_total() {
            return p.display_nested(order);
        }
        if self.pieces.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|p| format!("{} if {}", p.poly.display_nested(order), domain_text(&p.domain)))
            .collect();
        format!("{{ {} }}", parts.join("; "))
    }
}

pub fn domain_text(d: &Domain) -> String {
    let comps: Vec<String> = d
        .iter()
        .map(|c| {
            if c.is_empty() {
                "true".to_string()
            } else {
                c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" and ")
            }
        })
        .collect();
    if comps.len() == 1 {
        comps[0].clone()
    } else {
        comps
            .iter()
            .map(|c| format!("({c})"))
            .collect::<Vec<_>>()
            .join(" or ")
    }
}

impl fmt::Display for PiecewiseQuasiPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.as_total() {
            return write!(f, "{p}");
        }
        if self.pieces.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|p| format!("{} if {}", p.poly, domain_text(&p.domain)))
            .collect();
        write!(f, "{{ {} }}", parts.join("; "))
    }
}

fn union_of(pieces: &[Piece]) -> Domain {
    pieces.iter().flat_map(|p| p.domain.iter().cloned()).collect()
}

pub(crate) fn feasible_in(c: &[Constraint], context: &[Constraint]) -> bool {
    let mut sys = c.to_vec();
    sys.extend(context.iter().cloned());
    !is_falsum(&normalize_all(&sys)) && !fm::infeasible(&sys)
}

/// Canonical piece constraints relative to the universe.
pub(crate) fn simplify_in(c: &[Constraint], context: &[Constraint]) -> Vec<Constraint> {
    let c = fm::implicit_equalities(c, context);
    let c = fm::remove_redundant(&c, context);
    // equalities first, then inequalities, each in a stable order
    let mut eqs: Vec<Constraint> = c.iter().filter(|x| matches!(x, Constraint::Eq(_))).cloned().collect();
    eqs.extend(c.iter().filter(|x| !matches!(x, Constraint::Eq(_))).cloned());
    eqs
}

/// Pairwise intersections of two unions, infeasible parts dropped.
pub fn intersect(a: &Domain, b: &Domain, context: &[Constraint]) -> Domain {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let mut c = x.clone();
            for k in y {
                if !c.contains(k) {
                    c.push(k.clone());
                }
            }
            if feasible_in(&c, context) {
                out.push(c);
            }
        }
    }
    out
}

/// Disjoint decomposition of `context \ (∪ d)`.
pub fn complement(d: &Domain, context: &[Constraint]) -> Domain {
    let mut acc: Domain = vec![vec![]];
    for comp in d {
        // complement of one conjunction: ¬c1 ∨ (c1 ∧ ¬c2) ∨ ...
        let mut comp_neg: Domain = Vec::new();
        let mut prefix: Vec<Constraint> = Vec::new();
        for c in comp {
            for n in c.negate() {
                let mut part = prefix.clone();
                part.push(n);
                comp_neg.push(part);
            }
            prefix.push(c.clone());
        }
        acc = intersect(&acc, &comp_neg, context);
        if acc.is_empty() {
            break;
        }
    }
    acc.into_iter()
        .filter(|c| feasible_in(c, context))
        .map(|c| simplify_in(&c, context))
        .collect()
}
