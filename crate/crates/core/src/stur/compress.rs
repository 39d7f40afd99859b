//! Construction of compressed-tensor summands: a rule summand conjoined
//! with the unique sets of every tensor it touches.

use std::collections::HashMap;

use crate::affine::{rat, AffineExpr, Constraint, Modulus, Var};
use crate::error::{Error, Result};
use crate::polyhedra::{emptiness_of, fm, positivity, Emptiness};

use super::ast::{Program, Summand, UniqueSet};
use super::simplify::simplify_summand;

/// Range of quotients tried when expanding a symbolic modulus.
const QUOTIENT_RANGE: i64 = 4;

/// One compressed summand per (rule summand × unique-set piece combination),
/// simplified. Summands proven empty are dropped.
pub fn build_compressed_summands(p: &Program, rule: &str) -> Result<Vec<Summand>> {
    let r = p
        .rule(rule)
        .ok_or_else(|| Error::UnknownIdentifier(rule.to_string()))?;
    let mut out = Vec::new();
    for s in &r.summands {
        for a in &s.inputs {
            if a.tensor == s.output.tensor {
                return Err(Error::Invalid(format!(
                    "tensor `{}` is both read and written",
                    a.tensor
                )));
            }
        }
        let mut combos: Vec<Vec<Constraint>> = vec![s.constraints.clone()];
        for (k, a) in s.accesses().enumerate() {
            let u = match p.unique_sets.get(&a.tensor) {
                Some(u) => u.clone(),
                None => match p.shapes.get(&a.tensor) {
                    Some(ext) => {
                        let iters: Vec<Var> = (0..ext.len()).map(|d| format!("_d{d}")).collect();
                        UniqueSet::full_box(&iters, ext)
                    }
                    // an unstructured output is bounded by its summand
                    None if k == 0 => continue,
                    None => return Err(Error::MissingUniqueSet(a.tensor.clone())),
                },
            };
            if u.iters.len() != a.indices.len() {
                return Err(Error::ArityMismatch {
                    tensor: a.tensor.clone(),
                    access: a.indices.len(),
                    structure: u.iters.len(),
                });
            }
            let map: HashMap<Var, Var> = u
                .iters
                .iter()
                .cloned()
                .zip(a.indices.iter().cloned())
                .collect();
            let mut next = Vec::new();
            for base in &combos {
                for piece in &u.pieces {
                    let mut c = base.clone();
                    c.extend(piece.iter().map(|x| x.rename(&map)));
                    next.push(c);
                }
            }
            combos = next;
        }
        let mut produced: Vec<Summand> = Vec::new();
        for cons in combos {
            for cons in expand_symbolic_mods(cons)? {
                let t = simplify_summand(&Summand {
                    constraints: cons,
                    ..s.clone()
                });
                if !t.empty {
                    produced.push(t);
                }
            }
        }
        check_disjoint(&produced)?;
        if produced.is_empty() {
            let mut t = s.clone();
            t.constraints = vec![Constraint::falsum()];
            t.empty = true;
            produced.push(t);
        }
        out.extend(produced);
    }
    Ok(out)
}

fn check_disjoint(summands: &[Summand]) -> Result<()> {
    for a in 0..summands.len() {
        for b in a + 1..summands.len() {
            let mut sys = summands[a].constraints.clone();
            sys.extend(summands[b].constraints.iter().cloned());
            let mut params = summands[a].symbols();
            params.extend(summands[b].symbols());
            params.sort();
            params.dedup();
            sys.extend(positivity(&params));
            if emptiness_of(&sys, &params) == Emptiness::NonEmpty {
                return Err(Error::Invalid(
                    "unique-set pieces overlap; the union must be disjoint".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Rewrite `(e) % M = r` with a symbolic modulus `M` into a disjunction over
/// the quotient `t`: `e - r - t*M = 0 ∧ 0 <= r < M`. Quotients whose piece is
/// infeasible are dropped; a feasible piece at the edge of the tried range
/// means the quotient is not bounded by the other constraints.
pub fn expand_symbolic_mods(cons: Vec<Constraint>) -> Result<Vec<Vec<Constraint>>> {
    let Some(pos) = cons
        .iter()
        .position(|c| matches!(c, Constraint::Mod { modulus: Modulus::Sym(_), .. }))
    else {
        return Ok(vec![cons]);
    };
    let Constraint::Mod {
        expr,
        modulus: Modulus::Sym(m),
        residue,
    } = cons[pos].clone()
    else {
        unreachable!()
    };
    let rest: Vec<Constraint> = cons
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != pos)
        .map(|(_, c)| c.clone())
        .collect();
    let mut out = Vec::new();
    for t in -QUOTIENT_RANGE..=QUOTIENT_RANGE {
        let mut piece = rest.clone();
        piece.push(Constraint::Eq(
            expr.clone() - residue.clone() - AffineExpr::term(&m, rat(t as i128)),
        ));
        piece.push(Constraint::le(AffineExpr::zero(), residue.clone()));
        piece.push(Constraint::lt(residue.clone(), AffineExpr::var(&m)));
        let mut check = piece.clone();
        // the modulus is a dimension size; the remaining vars are only
        // constrained by the summand itself
        check.extend(positivity(std::slice::from_ref(&m)));
        if fm::infeasible(&check) {
            continue;
        }
        if t.abs() == QUOTIENT_RANGE {
            return Err(Error::UnsupportedPeriodic(format!(
                "quotient of ({expr}) % {m} is not bounded by the constraints"
            )));
        }
        out.extend(expand_symbolic_mods(piece)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stur::{parse_constraints, parse_program};

    fn sorted(mut c: Vec<Constraint>) -> Vec<Constraint> {
        c.sort();
        c
    }

    #[test]
    fn hadamard_with_diagonal_and_symmetric() {
        let p = parse_program(
            "T(x, y) := M(x, y) * V(x, y)\n\
             M_U(x, y) := (0 <= x < n) * (0 <= y < n) * (x = y)\n\
             V_U(x, y) := (0 <= x < n) * (0 <= y < n) * (x <= y)",
        )
        .unwrap();
        let s = build_compressed_summands(&p, "T").unwrap();
        assert_eq!(s.len(), 1);
        // same point set as (0 <= x < n) * (0 <= y < n) * (x = y)
        let expected = parse_constraints("(0 <= x < n) * (x = y)").unwrap();
        let mut e2 = expected.clone();
        e2.extend(positivity(&["n".to_string()]));
        for c in &s[0].constraints {
            assert!(fm::implies(&e2, c), "{c}");
        }
        let mut got = s[0].constraints.clone();
        got.extend(positivity(&["n".to_string()]));
        for c in &expected {
            assert!(fm::implies(&got, c), "{c}");
        }
    }

    #[test]
    fn ttm_upper_half_cube() {
        let p = parse_program(
            "A(i, j, k) := B(i, j, l) * C(k, l)\n\
             C_U(k, l) := (0 <= k) * (k < P) * (0 <= l) * (l < Q)\n\
             B_U(i, j, l) := (i <= j) * (0 <= i) * (i < M) * (0 <= j) * (j < N) * (0 <= l) * (l < Q)",
        )
        .unwrap();
        let s = build_compressed_summands(&p, "A").unwrap();
        assert_eq!(s.len(), 1);
        let expected = parse_constraints("(0 <= l < Q) * (i <= j < N) * (0 <= i < M) * (0 <= k < P)").unwrap();
        assert_eq!(sorted(s[0].constraints.clone()), sorted(expected));
    }

    #[test]
    fn leslie_gives_two_summands() {
        let p = parse_program(
            "A(i) := B(i, j) * C(j)\n\
             B_U(i, j) := (i = 0) * (0 <= j < n_j) + (1 <= i < n_i) * (j = i - 1)\n\
             C_U(j) := (0 <= j < n_j)",
        )
        .unwrap();
        let s = build_compressed_summands(&p, "A").unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].constraints.contains(&Constraint::Eq(AffineExpr::var("i"))));
    }

    #[test]
    fn arity_mismatch() {
        let p = parse_program("A(i) := B(i, j)\nB_U(i) := (0 <= i < n)").unwrap();
        assert!(matches!(
            build_compressed_summands(&p, "A"),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn missing_unique_set() {
        let p = parse_program("A(i) := B(i, j)").unwrap();
        assert_eq!(
            build_compressed_summands(&p, "A"),
            Err(Error::MissingUniqueSet("B".into()))
        );
    }

    #[test]
    fn symbolic_mod_expands_to_two_quotients() {
        let cons = parse_constraints("(0 <= i < N) * (0 <= j < N) * ((j - i) % N = 2)").unwrap();
        let pieces = expand_symbolic_mods(cons).unwrap();
        assert_eq!(pieces.len(), 2);
    }
}
