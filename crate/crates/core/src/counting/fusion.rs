//! Merging pieces whose polynomials agree on a neighbour's domain.

use std::collections::HashMap;

use crate::affine::{AffineExpr, Constraint, Var};
use crate::poly::QuasiPolynomial;
use crate::polyhedra::{fm, scan_points};

use super::{complement, feasible_in, Piece, PiecewiseQuasiPolynomial};

/// Box used by the enumeration fallback of the restriction test.
const PROBE: i64 = 8;

/// Whether `q` vanishes on every point of the conjunction `comp` within the
/// universe `context`.
fn vanishes_on(q: &QuasiPolynomial, comp: &[Constraint], context: &[Constraint], vars: &[Var]) -> bool {
    if q.is_zero() {
        return true;
    }
    let mut sys = comp.to_vec();
    sys.extend(context.iter().cloned());
    let sys = fm::implicit_equalities(&sys, &[]);
    let eqs: Vec<AffineExpr> = sys
        .iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) => Some(e.clone()),
            _ => None,
        })
        .collect();
    if !eqs.is_empty() {
        let mut q = q.clone();
        let mut eqs = eqs;
        while let Some(e) = eqs.pop() {
            let Some(v) = e
                .vars()
                .find(|v| q.mentions(v))
                .or_else(|| e.vars().next())
                .cloned()
            else {
                continue;
            };
            let value = fm::solve_for(&e, &v);
            q = q.substitute_affine(&v, &value);
            eqs = eqs.iter().map(|x| x.substitute(&v, &value)).collect();
        }
        return q.is_zero();
    }
    // no equalities: look for a counterexample among small points
    let mut boxed = sys.clone();
    for v in vars {
        boxed.push(Constraint::Ge(AffineExpr::var(v) + AffineExpr::constant(PROBE as i128)));
        boxed.push(Constraint::Ge(AffineExpr::constant(PROBE as i128) - AffineExpr::var(v)));
    }
    match scan_points(vars, &boxed, &HashMap::new(), Some(5_000_000)) {
        Ok(points) if !points.is_empty() => points.iter().all(|pt| {
            let vals: HashMap<Var, i64> = vars.iter().cloned().zip(pt.iter().copied()).collect();
            q.eval(&vals).map(|x| x == crate::affine::rat(0)).unwrap_or(false)
        }),
        _ => false,
    }
}

fn fuse_round(mut pieces: Vec<Piece>, context: &[Constraint], vars: &[Var]) -> Vec<Piece> {
    loop {
        let mut merged = None;
        'search: for a in 0..pieces.len() {
            for b in 0..pieces.len() {
                if a == b {
                    continue;
                }
                let diff = &pieces[a].poly - &pieces[b].poly;
                if pieces[b]
                    .domain
                    .iter()
                    .all(|comp| vanishes_on(&diff, comp, context, vars))
                {
                    merged = Some((a, b));
                    break 'search;
                }
            }
        }
        let Some((a, b)) = merged else {
            return pieces;
        };
        let absorbed = pieces[b].domain.clone();
        pieces[a].domain.extend(absorbed);
        pieces.remove(b);
    }
}

/// Fusion restricted to the given pieces (no zero-region completion).
pub fn fuse_pieces_only(t: &PiecewiseQuasiPolynomial) -> PiecewiseQuasiPolynomial {
    let mut pieces = t.pieces.clone();
    pieces.sort_by_key(|p| p.equality_count());
    PiecewiseQuasiPolynomial {
        pieces: fuse_round(pieces, &t.context, &t.vars),
        ..t.clone()
    }
}

/// Piecewise fusion. Pieces are visited in increasing order of equality
/// count; a piece absorbs another when their difference vanishes on the
/// other's domain. The implicit zero region takes part as explicit zero
/// pieces, which are dropped again if nothing absorbs them.
pub fn fuse_piecewise(t: &PiecewiseQuasiPolynomial) -> PiecewiseQuasiPolynomial {
    let mut pieces = t.pieces.clone();
    pieces.sort_by_key(|p| p.equality_count());
    let covered: Vec<Vec<Constraint>> = pieces.iter().flat_map(|p| p.domain.iter().cloned()).collect();
    let zero_region = complement(&covered, &t.context);
    let mut zeros: Vec<Piece> = zero_region
        .into_iter()
        .filter(|c| feasible_in(c, &t.context))
        .map(|c| Piece {
            domain: vec![c],
            poly: QuasiPolynomial::zero(),
        })
        .collect();
    zeros.sort_by_key(|p| p.equality_count());
    pieces.extend(zeros);
    let fused = fuse_round(pieces, &t.context, &t.vars);
    PiecewiseQuasiPolynomial {
        pieces: fused.into_iter().filter(|p| !p.poly.is_zero()).collect(),
        ..t.clone()
    }
}
