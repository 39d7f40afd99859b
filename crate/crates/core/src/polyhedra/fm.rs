//! Rational Fourier–Motzkin elimination with integer tightening.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};

use crate::affine::{is_falsum, normalize_all, rat, AffineExpr, Constraint, Normalized, Var};
use crate::error::{Error, Result};

pub struct Elimination {
    pub constraints: Vec<Constraint>,
    /// False when the step may have enlarged the integer shadow.
    pub exact: bool,
}

/// Express `v` from an equality `e = 0` that mentions it.
pub fn solve_for(e: &AffineExpr, v: &str) -> AffineExpr {
    let c = e.coeff(v);
    let mut rest = e.clone();
    rest.add_term(v, -c);
    rest.scale(-c.recip())
}

fn pick_equality<'a>(cons: &'a [Constraint], v: &str) -> Option<&'a AffineExpr> {
    cons.iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) if e.mentions(v) => Some(e),
            _ => None,
        })
        .min_by_key(|e| e.coeff(v).abs())
}

/// Eliminate `v`. Mod atoms on `v` that cannot be removed by an equality
/// substitution block the projection unless `relax` drops them.
fn eliminate_impl(cons: &[Constraint], v: &str, relax: bool) -> Result<Elimination> {
    let cons = normalize_all(cons);
    if is_falsum(&cons) {
        return Ok(Elimination {
            constraints: cons,
            exact: true,
        });
    }
    if let Some(eq) = pick_equality(&cons, v) {
        let unit = eq.coeff(v).abs() == rat(1);
        let value = solve_for(eq, v);
        let eq = eq.clone();
        let mut out = Vec::with_capacity(cons.len());
        for c in &cons {
            if matches!(c, Constraint::Eq(e) if *e == eq) {
                continue;
            }
            if !c.mentions(v) {
                out.push(c.clone());
                continue;
            }
            let s = c.substitute(v, &value);
            if s.is_mod() && !s.expr().is_integral() {
                if relax {
                    continue;
                }
                return Err(Error::ProjectionBlocked(v.to_string()));
            }
            out.push(s);
        }
        return Ok(Elimination {
            constraints: prune(&out),
            exact: unit,
        });
    }
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    let mut out = Vec::new();
    for c in &cons {
        match c {
            Constraint::Ge(e) if e.mentions(v) => {
                if e.coeff(v).is_positive() {
                    lowers.push(e);
                } else {
                    uppers.push(e);
                }
            }
            Constraint::Mod { .. } if c.mentions(v) => {
                if !relax {
                    return Err(Error::ProjectionBlocked(v.to_string()));
                }
            }
            _ => out.push(c.clone()),
        }
    }
    let mut exact = true;
    for lo in &lowers {
        let a = lo.coeff(v);
        for up in &uppers {
            let b = -up.coeff(v);
            if a != rat(1) && b != rat(1) {
                exact = false;
            }
            out.push(Constraint::Ge(lo.scale(b) + up.scale(a)));
        }
    }
    Ok(Elimination {
        constraints: prune(&out),
        exact,
    })
}

pub fn eliminate(cons: &[Constraint], v: &str) -> Result<Elimination> {
    eliminate_impl(cons, v, false)
}

/// Elimination that treats mod atoms on `v` as a relaxation (drops them).
pub fn eliminate_relaxed(cons: &[Constraint], v: &str) -> Vec<Constraint> {
    eliminate_impl(cons, v, true)
        .expect("relaxed elimination cannot fail")
        .constraints
}

/// Normalization plus pairwise cleanup: parallel inequalities keep the tighter
/// one, opposite pairs become equalities or a contradiction.
pub fn prune(cons: &[Constraint]) -> Vec<Constraint> {
    let cons = normalize_all(cons);
    if is_falsum(&cons) {
        return cons;
    }
    let mut ges: Vec<AffineExpr> = Vec::new();
    let mut rest: Vec<Constraint> = Vec::new();
    for c in cons {
        match c {
            Constraint::Ge(e) => {
                if let Some(pos) = ges.iter().position(|g| g.linear_part_eq(&e)) {
                    if e.constant_term() < ges[pos].constant_term() {
                        ges[pos] = e;
                    }
                } else {
                    ges.push(e);
                }
            }
            other => {
                if !rest.contains(&other) {
                    rest.push(other)
                }
            }
        }
    }
    let mut used = vec![false; ges.len()];
    let mut out: Vec<Constraint> = Vec::new();
    for i in 0..ges.len() {
        if used[i] {
            continue;
        }
        let neg = -ges[i].linear_part();
        if let Some(j) = (i + 1..ges.len()).find(|&j| !used[j] && ges[j].linear_part_eq(&neg)) {
            let sum = ges[i].constant_term() + ges[j].constant_term();
            if sum.is_negative() {
                return vec![Constraint::falsum()];
            }
            if sum.is_zero() {
                used[j] = true;
                if let Normalized::Keep(c) = Constraint::Eq(ges[i].clone()).normalize() {
                    rest.push(c);
                }
                continue;
            }
        }
        out.push(Constraint::Ge(ges[i].clone()));
    }
    for c in rest {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    // equalities can subsume inequalities with the same linear part
    let eqs: Vec<AffineExpr> = out
        .iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) => Some(e.clone()),
            _ => None,
        })
        .collect();
    let mut contradiction = false;
    out.retain(|c| match c {
        Constraint::Ge(g) => {
            for e in &eqs {
                for sign in [1, -1] {
                    let e2 = e.scale(rat(sign));
                    if g.linear_part_eq(&e2) {
                        // g = e2 + (g.c - e2.c) and e2 = 0
                        if g.constant_term() - e2.constant_term() >= rat(0) {
                            return false;
                        }
                        contradiction = true;
                    }
                }
            }
            true
        }
        _ => true,
    });
    if contradiction {
        return vec![Constraint::falsum()];
    }
    out
}

fn all_vars(cons: &[Constraint]) -> BTreeSet<Var> {
    cons.iter().flat_map(|c| c.vars()).collect()
}

/// Rational-relaxation infeasibility (with integer tightening at each
/// step). `true` means there is provably no integer point.
pub fn infeasible(cons: &[Constraint]) -> bool {
    let mut sys: Vec<Constraint> = prune(
        &cons
            .iter()
            .filter(|c| !c.is_mod())
            .cloned()
            .collect::<Vec<_>>(),
    );
    loop {
        if is_falsum(&sys) {
            return true;
        }
        let vars = all_vars(&sys);
        if vars.is_empty() {
            return false;
        }
        let pick = vars
            .iter()
            .find(|v| sys.iter().any(|c| matches!(c, Constraint::Eq(e) if e.mentions(v))))
            .cloned()
            .unwrap_or_else(|| {
                vars.iter()
                    .min_by_key(|v| {
                        let (mut lo, mut up) = (0usize, 0usize);
                        for c in &sys {
                            if let Constraint::Ge(e) = c {
                                let k = e.coeff(v);
                                if k.is_positive() {
                                    lo += 1;
                                } else if k.is_negative() {
                                    up += 1;
                                }
                            }
                        }
                        lo * up
                    })
                    .unwrap()
                    .clone()
            });
        sys = eliminate_relaxed(&sys, &pick);
    }
}

/// Whether every integer point of `cons` satisfies `c`.
pub fn implies(cons: &[Constraint], c: &Constraint) -> bool {
    match c {
        Constraint::Ge(_) | Constraint::Eq(_) => {
            let Normalized::Keep(c) = c.normalize() else {
                return matches!(c.normalize(), Normalized::True) || infeasible(cons);
            };
            if cons.contains(&c) {
                return true;
            }
            c.negate().iter().all(|neg| {
                let mut sys = cons.to_vec();
                sys.push(neg.clone());
                infeasible(&sys)
            })
        }
        Constraint::Mod { .. } => cons.contains(c) || infeasible(cons),
    }
}

/// Drop every constraint implied by the others together with `context`,
/// scanning from the last constraint to the first.
pub fn remove_redundant(cons: &[Constraint], context: &[Constraint]) -> Vec<Constraint> {
    let mut kept = prune(cons);
    if is_falsum(&kept) {
        return kept;
    }
    let mut idx = kept.len();
    while idx > 0 {
        idx -= 1;
        if kept[idx].is_mod() {
            continue;
        }
        let mut others: Vec<Constraint> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, c)| c.clone())
            .collect();
        others.extend(context.iter().cloned());
        if implies(&others, &kept[idx]) {
            kept.remove(idx);
        }
    }
    kept
}

/// Turn inequalities that are tight on every point of `cons ∧ context` into
/// equalities.
pub fn implicit_equalities(cons: &[Constraint], context: &[Constraint]) -> Vec<Constraint> {
    let mut out = prune(cons);
    if is_falsum(&out) {
        return out;
    }
    for i in 0..out.len() {
        if let Constraint::Ge(e) = &out[i] {
            let mut sys: Vec<Constraint> = out.clone();
            sys.extend(context.iter().cloned());
            sys.push(Constraint::Ge(e.clone() - AffineExpr::constant(1)));
            if infeasible(&sys) {
                out[i] = Constraint::Eq(e.clone());
            }
        }
    }
    prune(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ge(terms: &[(&str, i128)], c: i128) -> Constraint {
        Constraint::Ge(AffineExpr::from_terms(terms.iter().copied(), c))
    }

    #[test]
    fn contradiction_detected() {
        assert!(infeasible(&[ge(&[("i", 1)], 0), ge(&[("i", -1)], -1)]));
    }

    #[test]
    fn equality_then_strict_is_empty() {
        // i = j, i < j
        let cons = vec![
            Constraint::Eq(AffineExpr::from_terms([("i", 1), ("j", -1)], 0)),
            ge(&[("j", 1), ("i", -1)], -1),
        ];
        assert!(infeasible(&cons));
    }

    #[test]
    fn triangle_projection_gives_box() {
        // 0 <= i <= j <= n-1, eliminate j -> i <= n - 1
        let cons = vec![
            ge(&[("i", 1)], 0),
            ge(&[("j", 1), ("i", -1)], 0),
            ge(&[("n", 1), ("j", -1)], -1),
        ];
        let out = eliminate(&cons, "j").unwrap();
        assert!(out.exact);
        assert!(out.constraints.contains(&ge(&[("n", 1), ("i", -1)], -1)));
    }

    #[test]
    fn implication_with_equality() {
        let cons = vec![
            Constraint::Eq(AffineExpr::from_terms([("i", 1), ("j", -1)], 0)),
            ge(&[("i", 1)], 0),
        ];
        assert!(implies(&cons, &ge(&[("j", 1)], 0)));
        assert!(!implies(&cons, &ge(&[("j", 1)], -1)));
    }

    #[test]
    fn opposite_pair_becomes_equality() {
        let out = prune(&[ge(&[("j", 1)], 0), ge(&[("j", -1)], 0)]);
        assert_eq!(out, vec![Constraint::Eq(AffineExpr::var("j"))]);
    }

    #[test]
    fn mod_blocks_projection() {
        let cons = vec![
            ge(&[("i", 1)], 0),
            ge(&[("n", 1), ("i", -1)], -1),
            Constraint::Mod {
                expr: AffineExpr::var("i"),
                modulus: crate::affine::Modulus::Lit(2),
                residue: AffineExpr::constant(0),
            },
        ];
        assert!(matches!(eliminate(&cons, "i"), Err(Error::ProjectionBlocked(_))));
    }
}
