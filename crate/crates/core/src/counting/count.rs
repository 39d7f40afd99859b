//! Symbolic summation over the integer points of a parametric polyhedron.

use num_integer::Integer;
use num_traits::Signed;

use crate::affine::{is_falsum, normalize_all, rat, AffineExpr, Constraint, Modulus, Var};
use crate::error::{Error, Result};
use crate::poly::QuasiPolynomial;
use crate::polyhedra::{fm, Polyhedron};

use super::faulhaber::{faulhaber_sum, DEFAULT_MAX_DEGREE};
use super::{feasible_in, simplify_in, Piece, PiecewiseQuasiPolynomial};

struct Item {
    cons: Vec<Constraint>,
    poly: QuasiPolynomial,
}

/// `|{ x in p : x projected on count_dims }|` as a piecewise polynomial in the
/// parameters and the uncounted dims.
pub fn count_points(p: &Polyhedron, count_dims: &[Var]) -> Result<PiecewiseQuasiPolynomial> {
    count_points_with(p, count_dims, DEFAULT_MAX_DEGREE)
}

pub fn count_points_with(
    p: &Polyhedron,
    count_dims: &[Var],
    max_degree: u32,
) -> Result<PiecewiseQuasiPolynomial> {
    let mut vars: Vec<Var> = p.params.clone();
    vars.extend(p.dims.iter().filter(|d| !count_dims.contains(d)).cloned());
    let context = p.context.clone();
    if p.empty {
        return Ok(PiecewiseQuasiPolynomial::zero(vars, context));
    }
    let order: Vec<&Var> = p.dims.iter().filter(|d| count_dims.contains(d)).collect();
    let mut items = vec![Item {
        cons: normalize_all(&p.constraints),
        poly: QuasiPolynomial::int(1),
    }];
    for (n, v) in order.iter().rev().enumerate() {
        let mut next = Vec::new();
        for item in items {
            eliminate_dim(item, v, &context, max_degree, n, &mut next)?;
        }
        items = next;
    }
    let items: Vec<Item> = items
        .into_iter()
        .filter(|it| !it.poly.is_zero() && feasible_in(&it.cons, &context))
        .collect();
    // Items partition the counted points, not the remaining variables: two
    // items may both contribute at the same parameter values, and their
    // counts then add up.
    let disjoint = items.iter().enumerate().all(|(a, x)| {
        items[a + 1..].iter().all(|y| {
            let mut both = x.cons.clone();
            both.extend(y.cons.iter().cloned());
            !feasible_in(&both, &context)
        })
    });
    if !disjoint {
        let mut total = PiecewiseQuasiPolynomial::zero(vars.clone(), context.clone());
        for item in items {
            let one = PiecewiseQuasiPolynomial {
                vars: vars.clone(),
                context: context.clone(),
                pieces: vec![Piece {
                    domain: vec![simplify_in(&item.cons, &context)],
                    poly: item.poly,
                }],
            };
            total = total.add(&one);
        }
        return Ok(merge_equal(total));
    }
    let mut pieces: Vec<Piece> = Vec::new();
    for item in items {
        let cons = simplify_in(&item.cons, &context);
        if let Some(existing) = pieces.iter_mut().find(|q| q.poly == item.poly) {
            existing.domain.push(cons);
        } else {
            pieces.push(Piece {
                domain: vec![cons],
                poly: item.poly,
            });
        }
    }
    Ok(PiecewiseQuasiPolynomial {
        vars,
        context,
        pieces,
    })
}

/// Joins disjoint pieces that carry the same polynomial.
fn merge_equal(t: PiecewiseQuasiPolynomial) -> PiecewiseQuasiPolynomial {
    let mut pieces: Vec<Piece> = Vec::new();
    for p in t.pieces {
        if let Some(existing) = pieces.iter_mut().find(|q| q.poly == p.poly) {
            existing.domain.extend(p.domain);
        } else {
            pieces.push(p);
        }
    }
    PiecewiseQuasiPolynomial { pieces, ..t }
}

fn quotient_var(v: &str, n: usize) -> Var {
    format!("{v}_q{n}")
}

fn eliminate_dim(
    item: Item,
    v: &str,
    context: &[Constraint],
    max_degree: u32,
    n: usize,
    out: &mut Vec<Item>,
) -> Result<()> {
    let Item { cons, poly } = item;
    if is_falsum(&cons) {
        return Ok(());
    }
    // equality on v: substitute
    if let Some(e) = cons
        .iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) if e.mentions(v) => Some(e.clone()),
            _ => None,
        })
        .min_by_key(|e| e.coeff(v).abs())
    {
        let a = e.coeff(v);
        let value = fm::solve_for(&e, v);
        let mut next: Vec<Constraint> = cons
            .iter()
            .filter(|c| !matches!(c, Constraint::Eq(x) if *x == e))
            .map(|c| c.substitute(v, &value))
            .collect();
        if a.abs() != rat(1) {
            // v integral requires the rest to be divisible by |a|
            let mut rest = e.clone();
            rest.add_term(v, -a);
            let l = rest.denominator_lcm();
            next.push(Constraint::Mod {
                expr: rest.scale(rat(l)),
                modulus: Modulus::Lit((a.abs() * rat(l)).to_integer() as i64),
                residue: AffineExpr::zero(),
            });
        }
        for c in &next {
            if let Constraint::Mod { expr, residue, .. } = c {
                if !expr.is_integral() || !residue.is_integral() {
                    return Err(Error::UnsupportedPeriodic(format!(
                        "rational substitution of `{v}` into a mod constraint"
                    )));
                }
            }
        }
        out.push(Item {
            cons: normalize_all(&next),
            poly: poly.substitute_affine(v, &value),
        });
        return Ok(());
    }
    // mod on v: reparameterize v = m*t + r0
    if let Some(pos) = cons.iter().position(|c| c.is_mod() && c.mentions(v)) {
        let Constraint::Mod {
            expr,
            modulus,
            residue,
        } = &cons[pos]
        else {
            unreachable!()
        };
        let m = match modulus {
            Modulus::Lit(m) => *m as i128,
            Modulus::Sym(s) => {
                return Err(Error::UnsupportedPeriodic(format!("symbolic modulus `{s}`")))
            }
        };
        let a = expr.coeff(v).to_integer().rem_euclid(m);
        let mut others = expr.clone();
        others.add_term(v, -expr.coeff(v));
        if !others.is_constant() || !residue.is_constant() {
            return Err(Error::UnsupportedPeriodic(format!(
                "mod constraint couples `{v}` with other variables"
            )));
        }
        let g = a.gcd(&m);
        let target = (residue.constant_term() - others.constant_term()).to_integer().rem_euclid(m);
        if target % g != 0 {
            return Ok(());
        }
        let (a, m2, target) = (a / g, m / g, target / g);
        let inv = (1..=m2).find(|x| (a * x).rem_euclid(m2) == 1 % m2).unwrap_or(1);
        let r0 = (target * inv).rem_euclid(m2);
        let t = quotient_var(v, n);
        let value = AffineExpr::term(&t, rat(m2)) + AffineExpr::constant(r0);
        let next: Vec<Constraint> = cons
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != pos)
            .map(|(_, c)| c.substitute(v, &value))
            .collect();
        return eliminate_dim(
            Item {
                cons: normalize_all(&next),
                poly: poly.substitute_affine(v, &value),
            },
            &t,
            context,
            max_degree,
            n,
            out,
        );
    }
    // bounds
    let mut lowers: Vec<AffineExpr> = Vec::new();
    let mut uppers: Vec<AffineExpr> = Vec::new();
    let mut rest: Vec<Constraint> = Vec::new();
    for c in &cons {
        match c {
            Constraint::Ge(e) if e.mentions(v) => {
                let a = e.coeff(v);
                let mut r = e.clone();
                r.add_term(v, -a);
                // a*v + r >= 0
                let bound = r.scale(-a.recip());
                let bound = if a.abs() == rat(1) {
                    bound
                } else if bound.is_constant() {
                    let b = bound.constant_term();
                    AffineExpr::from_rat(if a.is_positive() { b.ceil() } else { b.floor() })
                } else {
                    return Err(Error::UnsupportedPeriodic(format!(
                        "non-unit coefficient of `{v}` in `{c}`"
                    )));
                };
                if a.is_positive() {
                    lowers.push(bound);
                } else {
                    uppers.push(bound);
                }
            }
            other => rest.push(other.clone()),
        }
    }
    if lowers.is_empty() || uppers.is_empty() {
        return Err(Error::UnboundedIterator(v.to_string()));
    }
    let mut premises = rest.clone();
    premises.extend(context.iter().cloned());
    let lowers = prune_dominated(lowers, &premises, true);
    let uppers = prune_dominated(uppers, &premises, false);
    for (a, la) in lowers.iter().enumerate() {
        for (b, ub) in uppers.iter().enumerate() {
            let mut c = rest.clone();
            for (k, lk) in lowers.iter().enumerate() {
                if k < a {
                    c.push(Constraint::lt(lk.clone(), la.clone()));
                } else if k > a {
                    c.push(Constraint::le(lk.clone(), la.clone()));
                }
            }
            for (k, uk) in uppers.iter().enumerate() {
                if k < b {
                    c.push(Constraint::lt(ub.clone(), uk.clone()));
                } else if k > b {
                    c.push(Constraint::le(ub.clone(), uk.clone()));
                }
            }
            c.push(Constraint::le(la.clone(), ub.clone()));
            let c = normalize_all(&c);
            if is_falsum(&c) || !feasible_in(&c, context) {
                continue;
            }
            let sum = faulhaber_sum(&poly, v, la, ub, max_degree)?;
            if sum.is_zero() {
                continue;
            }
            out.push(Item { cons: c, poly: sum });
        }
    }
    Ok(())
}

/// Drop bounds implied to be no tighter than another remaining bound.
fn prune_dominated(mut bounds: Vec<AffineExpr>, premises: &[Constraint], lower: bool) -> Vec<AffineExpr> {
    let mut k = 0;
    while k < bounds.len() {
        let dominated = (0..bounds.len()).any(|o| {
            o != k && {
                let c = if lower {
                    Constraint::le(bounds[k].clone(), bounds[o].clone())
                } else {
                    Constraint::le(bounds[o].clone(), bounds[k].clone())
                };
                fm::implies(premises, &c)
            }
        });
        if dominated {
            bounds.remove(k);
        } else {
            k += 1;
        }
    }
    bounds
}
