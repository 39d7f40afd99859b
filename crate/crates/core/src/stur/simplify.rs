use crate::affine::{is_falsum, normalize_all, Constraint};
use crate::polyhedra::{fm, positivity};

use super::ast::Summand;

/// Logical simplification of a summand's constraints: normalization,
/// duplicate and tautology removal, and dropping constraints implied by the
/// rest (under the assumption that every symbol is at least 1). The integer
/// solution set is unchanged for every positive binding.
pub fn simplify_summand(s: &Summand) -> Summand {
    let mut out = s.clone();
    let cons = normalize_all(&s.constraints);
    if s.empty || is_falsum(&cons) {
        out.constraints = vec![Constraint::falsum()];
        out.empty = true;
        return out;
    }
    let context = positivity(&s.symbols());
    let mut with_ctx = cons.clone();
    with_ctx.extend(context.iter().cloned());
    if fm::infeasible(&with_ctx) {
        out.constraints = vec![Constraint::falsum()];
        out.empty = true;
        return out;
    }
    out.constraints = drop_implied(cons, &context);
    out
}

/// Remove constraints implied by the others plus `context`, last to first,
/// preserving the order of the survivors.
pub fn drop_implied(mut cons: Vec<Constraint>, context: &[Constraint]) -> Vec<Constraint> {
    let mut idx = cons.len();
    while idx > 0 {
        idx -= 1;
        let mut others: Vec<Constraint> = cons
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, c)| c.clone())
            .collect();
        others.extend(context.iter().cloned());
        if fm::implies(&others, &cons[idx]) {
            cons.remove(idx);
        }
    }
    cons
}
