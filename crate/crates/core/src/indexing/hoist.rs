//! Loop-invariant factoring of index polynomials, and their integer
//! evaluation plans.

use std::collections::{BTreeMap, HashMap};

use crate::affine::{rat, Constraint, Rat, Var};
use crate::counting::PiecewiseQuasiPolynomial;
use crate::error::{Error, Result};
use crate::poly::QuasiPolynomial;

/// `rank = base + sum_k sum_e coeffs[k][e] * order[k]^e`, where
/// `coeffs[k][e]` mentions only `order[..k]` and parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoistSchedule {
    pub order: Vec<Var>,
    pub base: QuasiPolynomial,
    pub coeffs: Vec<Vec<QuasiPolynomial>>,
}

impl HoistSchedule {
    /// Loop level (0 = above all loops, k+1 = inside loop k) at which
    /// `coeffs[k][e]` can be computed.
    pub fn hoist_level(&self, k: usize, e: usize) -> usize {
        let c = &self.coeffs[k][e];
        self.order[..k]
            .iter()
            .rposition(|v| c.mentions(v))
            .map_or(0, |p| p + 1)
    }

    pub fn evaluate(&self, values: &HashMap<Var, i64>) -> Option<Rat> {
        let mut acc = self.base.eval(values)?;
        for (k, v) in self.order.iter().enumerate() {
            let x = rat(*values.get(v)? as i128);
            let mut pow = rat(1);
            for c in &self.coeffs[k] {
                acc += c.eval(values)? * pow;
                pow *= x;
            }
        }
        Some(acc)
    }
}

pub fn hoist_schedule(rank: &QuasiPolynomial, order: &[Var]) -> HoistSchedule {
    let mut base = QuasiPolynomial::zero();
    let mut coeffs: Vec<Vec<QuasiPolynomial>> = vec![Vec::new(); order.len()];
    for (m, c) in rank.terms() {
        match order.iter().rposition(|v| m.exponent(v) > 0) {
            None => base.add_term(m.clone(), *c),
            Some(k) => {
                let e = m.exponent(&order[k]) as usize;
                if coeffs[k].len() <= e {
                    coeffs[k].resize(e + 1, QuasiPolynomial::zero());
                }
                coeffs[k][e].add_term(m.without(&order[k]), *c);
            }
        }
    }
    HoistSchedule {
        order: order.to_vec(),
        base,
        coeffs,
    }
}

/// Integer polynomial over variable slots.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IntPoly {
    pub terms: Vec<(i128, Vec<(usize, u32)>)>,
}

impl IntPoly {
    /// `scale * q` with variables resolved through `slots`; `scale` must
    /// clear every denominator.
    pub fn compile(q: &QuasiPolynomial, scale: i128, slots: &HashMap<Var, usize>) -> Result<Self> {
        let mut terms = Vec::new();
        for (m, c) in q.terms() {
            let v = *c * rat(scale);
            if !v.is_integer() {
                return Err(Error::NonInteger(crate::affine::fmt_rat(&v)));
            }
            let mut factors = Vec::new();
            for (var, e) in m.factors() {
                let s = *slots
                    .get(var)
                    .ok_or_else(|| Error::MissingBinding(var.clone()))?;
                factors.push((s, *e));
            }
            terms.push((v.to_integer(), factors));
        }
        Ok(IntPoly { terms })
    }

    #[inline]
    pub fn eval(&self, vals: &[i64]) -> i128 {
        let mut acc = 0i128;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(s, e) in factors {
                let x = vals[s] as i128;
                for _ in 0..e {
                    t *= x;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Affine constraint over slots with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntConstraint {
    pub kind: IntKind,
    pub coeffs: Vec<(usize, i128)>,
    pub constant: i128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntKind {
    Ge,
    Eq,
    /// Residue modulo a literal, or modulo a slot's value.
    Mod { modulus: ModSlot, residue: Vec<(usize, i128)>, residue_constant: i128 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModSlot {
    Lit(i128),
    Slot(usize),
}

fn int_affine(e: &crate::affine::AffineExpr, slots: &HashMap<Var, usize>) -> Result<(Vec<(usize, i128)>, i128)> {
    let l = e.denominator_lcm();
    let e = e.scale(rat(l));
    let mut coeffs = Vec::new();
    for (v, c) in e.terms() {
        let s = *slots.get(v).ok_or_else(|| Error::MissingBinding(v.clone()))?;
        coeffs.push((s, c.to_integer()));
    }
    Ok((coeffs, e.constant_term().to_integer()))
}

impl IntConstraint {
    pub fn compile(c: &Constraint, slots: &HashMap<Var, usize>) -> Result<Self> {
        Ok(match c {
            Constraint::Ge(e) => {
                let (coeffs, constant) = int_affine(e, slots)?;
                IntConstraint { kind: IntKind::Ge, coeffs, constant }
            }
            Constraint::Eq(e) => {
                let (coeffs, constant) = int_affine(e, slots)?;
                IntConstraint { kind: IntKind::Eq, coeffs, constant }
            }
            Constraint::Mod { expr, modulus, residue } => {
                if !expr.is_integral() || !residue.is_integral() {
                    return Err(Error::UnsupportedPeriodic(format!("rational mod constraint `{c}`")));
                }
                let (coeffs, constant) = int_affine(expr, slots)?;
                let (res, res_c) = int_affine(residue, slots)?;
                let modulus = match modulus {
                    crate::affine::Modulus::Lit(m) => ModSlot::Lit(*m as i128),
                    crate::affine::Modulus::Sym(s) => ModSlot::Slot(
                        *slots.get(s).ok_or_else(|| Error::MissingBinding(s.clone()))?,
                    ),
                };
                IntConstraint {
                    kind: IntKind::Mod { modulus, residue: res, residue_constant: res_c },
                    coeffs,
                    constant,
                }
            }
        })
    }

    #[inline]
    pub fn holds(&self, vals: &[i64]) -> bool {
        let mut acc = self.constant;
        for &(s, c) in &self.coeffs {
            acc += c * vals[s] as i128;
        }
        match &self.kind {
            IntKind::Ge => acc >= 0,
            IntKind::Eq => acc == 0,
            IntKind::Mod { modulus, residue, residue_constant } => {
                let m = match modulus {
                    ModSlot::Lit(m) => *m,
                    ModSlot::Slot(s) => vals[*s] as i128,
                };
                if m <= 0 {
                    return false;
                }
                let mut r = *residue_constant;
                for &(s, c) in residue {
                    r += c * vals[s] as i128;
                }
                acc.rem_euclid(m) == r
            }
        }
    }
}

/// Compiled per-level evaluation of one index function along a loop nest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexPlan {
    /// Single polynomial, hoisted: `levels[k][e]` is computed before loop
    /// `k` starts and multiplied by `dim_k^e` inside it.
    Hoisted {
        denom: i128,
        base: IntPoly,
        levels: Vec<Vec<IntPoly>>,
        dim_slots: Vec<usize>,
    },
    /// Piecewise: the matching piece is evaluated at the innermost level.
    Guarded {
        pieces: Vec<(Vec<Vec<IntConstraint>>, IntPoly, i128)>,
    },
}

impl IndexPlan {
    pub fn compile(
        rank: &PiecewiseQuasiPolynomial,
        order: &[Var],
        slots: &HashMap<Var, usize>,
    ) -> Result<Self> {
        if rank.pieces.is_empty() {
            return Self::compile_poly(&QuasiPolynomial::zero(), order, slots);
        }
        if let Some(p) = rank.as_total() {
            return Self::compile_poly(p, order, slots);
        }
        let mut pieces = Vec::new();
        for p in &rank.pieces {
            let denom = p.poly.denominator_lcm();
            let dom = p
                .domain
                .iter()
                .map(|c| c.iter().map(|x| IntConstraint::compile(x, slots)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            pieces.push((dom, IntPoly::compile(&p.poly, denom, slots)?, denom));
        }
        Ok(IndexPlan::Guarded { pieces })
    }

    pub fn compile_poly(p: &QuasiPolynomial, order: &[Var], slots: &HashMap<Var, usize>) -> Result<Self> {
        let sched = hoist_schedule(p, order);
        let denom = p.denominator_lcm();
        let base = IntPoly::compile(&sched.base, denom, slots)?;
        let levels = sched
            .coeffs
            .iter()
            .map(|cs| cs.iter().map(|c| IntPoly::compile(c, denom, slots)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let dim_slots = order
            .iter()
            .map(|v| slots.get(v).copied().ok_or_else(|| Error::MissingBinding(v.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexPlan::Hoisted { denom, base, levels, dim_slots })
    }

    pub fn is_hoisted(&self) -> bool {
        matches!(self, IndexPlan::Hoisted { .. })
    }

    /// Direct evaluation at a full point (no hoisting).
    pub fn eval_direct(&self, vals: &[i64]) -> Result<i128> {
        match self {
            IndexPlan::Hoisted { denom, base, levels, dim_slots } => {
                let mut acc = base.eval(vals);
                for (k, cs) in levels.iter().enumerate() {
                    let x = vals[dim_slots[k]] as i128;
                    let mut pow = 1i128;
                    for c in cs {
                        acc += c.eval(vals) * pow;
                        pow *= x;
                    }
                }
                exact_div(acc, *denom)
            }
            IndexPlan::Guarded { pieces } => {
                for (dom, poly, denom) in pieces {
                    if dom.iter().any(|c| c.iter().all(|x| x.holds(vals))) {
                        return exact_div(poly.eval(vals), *denom);
                    }
                }
                Ok(0)
            }
        }
    }
}

#[inline]
pub fn exact_div(num: i128, denom: i128) -> Result<i128> {
    if num % denom != 0 {
        return Err(Error::NonInteger(format!("{num}/{denom}")));
    }
    Ok(num / denom)
}

/// Slot table: parameters first, then loop dims.
pub fn slot_table(params: &[Var], dims: &[Var]) -> HashMap<Var, usize> {
    params
        .iter()
        .chain(dims.iter())
        .enumerate()
        .map(|(k, v)| (v.clone(), k))
        .collect()
}

/// Terms of a schedule grouped for display: `level -> [(power, coeff)]`.
pub fn schedule_terms(s: &HoistSchedule) -> BTreeMap<usize, Vec<(usize, QuasiPolynomial)>> {
    let mut out = BTreeMap::new();
    for (k, cs) in s.coeffs.iter().enumerate() {
        let v: Vec<(usize, QuasiPolynomial)> = cs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(e, c)| (e, c.clone()))
            .collect();
        if !v.is_empty() {
            out.insert(k, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Rat;

    fn vals(pairs: &[(&str, i64)]) -> HashMap<Var, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn ttm_rank() -> QuasiPolynomial {
        let q = QuasiPolynomial::var("Q");
        let i = QuasiPolynomial::var("i");
        let n_half = &QuasiPolynomial::var("N") - &QuasiPolynomial::constant(Rat::new(1, 2));
        &(&(&(&n_half * &q) * &i) - &(&q * &i.pow(2)).scale(Rat::new(1, 2)))
            + &(&(&q * &QuasiPolynomial::var("j")) + &QuasiPolynomial::var("l"))
    }

    #[test]
    fn ttm_constant_hoisted_above_loops() {
        let order: Vec<Var> = ["i", "j", "k", "l"].iter().map(|s| s.to_string()).collect();
        let s = hoist_schedule(&ttm_rank(), &order);
        // (N - 1/2)*Q multiplies i and depends on parameters only
        let expected = &(&QuasiPolynomial::var("N") - &QuasiPolynomial::constant(Rat::new(1, 2)))
            * &QuasiPolynomial::var("Q");
        assert_eq!(s.coeffs[0][1], expected);
        assert_eq!(s.hoist_level(0, 1), 0);
        assert!(s.base.is_zero());
    }

    #[test]
    fn single_loop_identity() {
        let s = hoist_schedule(&QuasiPolynomial::var("j"), &["j".to_string()]);
        assert_eq!(s.coeffs[0][1], QuasiPolynomial::int(1));
    }

    #[test]
    fn triangle_plan_matches_direct() {
        let i = QuasiPolynomial::var("i");
        let p = &(&i.scale(Rat::new(1, 2)) + &i.pow(2).scale(Rat::new(1, 2))) + &QuasiPolynomial::var("j");
        let order = vec!["i".to_string(), "j".to_string()];
        let s = hoist_schedule(&p, &order);
        assert_eq!(s.coeffs[1][1], QuasiPolynomial::int(1));
        assert_eq!(s.coeffs[0].len(), 3);
        let slots = slot_table(&[], &order);
        let plan = IndexPlan::compile_poly(&p, &order, &slots).unwrap();
        for a in 0..16i64 {
            for b in 0..16i64 {
                let v = vals(&[("i", a), ("j", b)]);
                let direct = p.eval(&v).unwrap();
                assert_eq!(s.evaluate(&v).unwrap(), direct);
                assert_eq!(rat(plan.eval_direct(&[a, b]).unwrap()), direct);
            }
        }
    }
}
