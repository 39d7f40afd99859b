//! Loop nests scanning a polyhedron, from Fourier–Motzkin projections.

use std::collections::HashMap;
use std::fmt;

use num_traits::Signed;

use crate::affine::{is_falsum, normalize_all, rat, AffineExpr, Constraint, Modulus, Var};
use crate::error::{Error, Result};
use crate::indexing::{slot_table, IntConstraint};
use crate::polyhedra::fm;

/// `num / div` over outer variables; rounded up for lower bounds and down
/// for upper bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bound {
    pub num: AffineExpr,
    pub div: i128,
    coeffs: Vec<(usize, i128)>,
    constant: i128,
}

impl Bound {
    fn new(num: AffineExpr, div: i128, slots: &HashMap<Var, usize>) -> Result<Self> {
        let mut coeffs = Vec::new();
        for (v, c) in num.terms() {
            let s = *slots.get(v).ok_or_else(|| Error::MissingBinding(v.clone()))?;
            coeffs.push((s, c.to_integer()));
        }
        Ok(Bound {
            constant: num.constant_term().to_integer(),
            num,
            div,
            coeffs,
        })
    }

    #[inline]
    fn numerator(&self, vals: &[i64]) -> i128 {
        let mut acc = self.constant;
        for &(s, c) in &self.coeffs {
            acc += c * vals[s] as i128;
        }
        acc
    }

    #[inline]
    pub fn ceil(&self, vals: &[i64]) -> i128 {
        -(-self.numerator(vals)).div_euclid(self.div)
    }

    #[inline]
    pub fn floor(&self, vals: &[i64]) -> i128 {
        self.numerator(vals).div_euclid(self.div)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LevelKind {
    /// `max(lower) <= x <= min(upper)`, optionally `x = phase (mod stride)`.
    Range {
        lower: Vec<Bound>,
        upper: Vec<Bound>,
        stride: Option<(i128, Bound)>,
    },
    /// `x = value`, skipped when the division is not exact.
    Fixed { value: Bound },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub dim: Var,
    pub slot: usize,
    pub kind: LevelKind,
    /// Checked once `dim` is set.
    pub guards: Vec<Constraint>,
    compiled_guards: Vec<IntConstraint>,
}

impl Level {
    /// Inclusive range and step at this level, or `None` if empty.
    #[inline]
    pub fn range(&self, vals: &[i64]) -> Option<(i64, i64, i64)> {
        match &self.kind {
            LevelKind::Fixed { value } => {
                let n = value.numerator(vals);
                if n.rem_euclid(value.div) != 0 {
                    return None;
                }
                let x = (n / value.div) as i64;
                Some((x, x, 1))
            }
            LevelKind::Range { lower, upper, stride } => {
                let mut lo = i128::MIN;
                for b in lower {
                    lo = lo.max(b.ceil(vals));
                }
                let mut hi = i128::MAX;
                for b in upper {
                    hi = hi.min(b.floor(vals));
                }
                let mut step = 1;
                if let Some((m, phase)) = stride {
                    let p = phase.numerator(vals);
                    lo += (p - lo).rem_euclid(*m);
                    step = *m as i64;
                }
                (lo <= hi).then_some((lo as i64, hi as i64, step))
            }
        }
    }

    #[inline]
    pub fn guards_hold(&self, vals: &[i64]) -> bool {
        self.compiled_guards.iter().all(|g| g.holds(vals))
    }
}

/// Nest over `dims` (outermost first). Slots: params, then dims.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopNest {
    pub params: Vec<Var>,
    pub dims: Vec<Var>,
    /// Parameter-only conditions.
    pub pre_guards: Vec<Constraint>,
    compiled_pre: Vec<IntConstraint>,
    pub levels: Vec<Level>,
    pub empty: bool,
}

fn integral(e: &AffineExpr) -> AffineExpr {
    e.scale(rat(e.denominator_lcm()))
}

fn make_level(
    dim: &str,
    cons: Vec<Constraint>,
    slots: &HashMap<Var, usize>,
) -> Result<Level> {
    let eq_pos = cons
        .iter()
        .enumerate()
        .filter_map(|(k, c)| match c {
            Constraint::Eq(e) => Some((k, e.coeff(dim).abs())),
            _ => None,
        })
        .min_by_key(|(_, c)| *c)
        .map(|(k, _)| k);
    let mut guards = Vec::new();
    let kind = if let Some(k) = eq_pos {
        let e = integral(cons[k].expr());
        let c = e.coeff(dim).to_integer();
        let mut rest = e.clone();
        rest.add_term(dim, rat(-c));
        let num = rest.scale(rat(-c.signum()));
        for (j, c) in cons.into_iter().enumerate() {
            if j != k {
                guards.push(c);
            }
        }
        LevelKind::Fixed {
            value: Bound::new(num, c.abs(), slots)?,
        }
    } else {
        let (mut lower, mut upper, mut stride) = (Vec::new(), Vec::new(), None);
        for c in cons {
            match &c {
                Constraint::Ge(e) => {
                    let e = integral(e);
                    let a = e.coeff(dim).to_integer();
                    let mut rest = e.clone();
                    rest.add_term(dim, rat(-a));
                    if a > 0 {
                        lower.push(Bound::new(rest.scale(rat(-1)), a, slots)?);
                    } else {
                        upper.push(Bound::new(rest, -a, slots)?);
                    }
                }
                Constraint::Mod {
                    expr,
                    modulus: Modulus::Lit(m),
                    residue,
                } if stride.is_none()
                    && expr.is_integral()
                    && residue.is_integral()
                    && !residue.mentions(dim)
                    && expr.coeff(dim).abs() == rat(1) =>
                {
                    let a = expr.coeff(dim);
                    let mut rest = expr.clone();
                    rest.add_term(dim, -a);
                    let phase = (residue.clone() - rest).scale(a);
                    stride = Some((*m as i128, Bound::new(phase, 1, slots)?));
                }
                _ => guards.push(c),
            }
        }
        if lower.is_empty() || upper.is_empty() {
            return Err(Error::UnboundedIterator(dim.to_string()));
        }
        LevelKind::Range { lower, upper, stride }
    };
    let compiled_guards = guards
        .iter()
        .map(|g| IntConstraint::compile(g, slots))
        .collect::<Result<Vec<_>>>()?;
    Ok(Level {
        dim: dim.to_string(),
        slot: slots[dim],
        kind,
        guards,
        compiled_guards,
    })
}

impl LoopNest {
    pub fn build(dims: &[Var], params: &[Var], constraints: &[Constraint]) -> Result<Self> {
        let slots = slot_table(params, dims);
        let cons = normalize_all(constraints);
        let mut empty = is_falsum(&cons);
        // sys[k]: constraints over params and dims[..=k]
        let mut sys: Vec<Vec<Constraint>> = vec![Vec::new(); dims.len()];
        let mut cur = cons.clone();
        for k in (0..dims.len()).rev() {
            sys[k] = cur.clone();
            cur = fm::eliminate_relaxed(&cur, &dims[k]);
        }
        if is_falsum(&cur) {
            empty = true;
        }
        let pre_guards: Vec<Constraint> = if dims.is_empty() { cons.clone() } else { cur };
        let mut levels = Vec::new();
        if !empty {
            for (k, d) in dims.iter().enumerate() {
                let mine: Vec<Constraint> = sys[k].iter().filter(|c| c.mentions(d)).cloned().collect();
                if mine.iter().any(|c| is_falsum(std::slice::from_ref(c))) {
                    empty = true;
                    break;
                }
                levels.push(make_level(d, mine, &slots)?);
            }
        }
        let compiled_pre = pre_guards
            .iter()
            .map(|g| IntConstraint::compile(g, &slots))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoopNest {
            params: params.to_vec(),
            dims: dims.to_vec(),
            pre_guards,
            compiled_pre,
            levels: if empty { Vec::new() } else { levels },
            empty,
        })
    }

    pub fn slots(&self) -> HashMap<Var, usize> {
        slot_table(&self.params, &self.dims)
    }

    /// Slot array with parameters filled in.
    pub fn bind(&self, binding: &HashMap<Var, i64>) -> Result<Vec<i64>> {
        let mut vals = vec![0i64; self.params.len() + self.dims.len()];
        for (k, p) in self.params.iter().enumerate() {
            vals[k] = *binding.get(p).ok_or_else(|| Error::MissingBinding(p.clone()))?;
        }
        Ok(vals)
    }

    pub fn pre_guards_hold(&self, vals: &[i64]) -> bool {
        !self.empty && self.compiled_pre.iter().all(|g| g.holds(vals))
    }

    /// Calls `f` with the slot array at every point, in lexicographic order.
    pub fn scan<F>(&self, vals: &mut [i64], f: &mut F) -> Result<()>
    where
        F: FnMut(&[i64]) -> Result<()>,
    {
        if !self.pre_guards_hold(vals) {
            return Ok(());
        }
        self.scan_from(0, vals, f)
    }

    fn scan_from<F>(&self, k: usize, vals: &mut [i64], f: &mut F) -> Result<()>
    where
        F: FnMut(&[i64]) -> Result<()>,
    {
        if k == self.levels.len() {
            return f(vals);
        }
        let level = &self.levels[k];
        let Some((lo, hi, step)) = level.range(vals) else {
            return Ok(());
        };
        let mut x = lo;
        while x <= hi {
            vals[level.slot] = x;
            if level.guards_hold(vals) {
                self.scan_from(k + 1, vals, f)?;
            }
            x += step;
        }
        Ok(())
    }

    /// All points as dim tuples.
    pub fn points(&self, binding: &HashMap<Var, i64>) -> Result<Vec<Vec<i64>>> {
        let mut vals = self.bind(binding)?;
        let np = self.params.len();
        let mut out = Vec::new();
        self.scan(&mut vals, &mut |v| {
            out.push(v[np..].to_vec());
            Ok(())
        })?;
        Ok(out)
    }
}

fn bound_text(b: &Bound) -> String {
    if b.div == 1 {
        b.num.to_string()
    } else {
        format!("({}) / {}", b.num, b.div)
    }
}

fn list_text(f: &str, bs: &[Bound]) -> String {
    let parts: Vec<String> = bs.iter().map(bound_text).collect();
    if parts.len() == 1 {
        parts[0].clone()
    } else {
        format!("{f}({})", parts.join(", "))
    }
}

/// Indented pseudocode, one line per level.
impl fmt::Display for LoopNest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            return writeln!(f, "(empty)");
        }
        if !self.pre_guards.is_empty() {
            let g: Vec<String> = self.pre_guards.iter().map(|c| c.to_string()).collect();
            writeln!(f, "if {}:", g.join(" and "))?;
        }
        for (k, l) in self.levels.iter().enumerate() {
            let pad = "  ".repeat(k);
            match &l.kind {
                LevelKind::Range { lower, upper, stride } => {
                    write!(f, "{pad}for {} in [{}, {}]", l.dim, list_text("max", lower), list_text("min", upper))?;
                    if let Some((m, phase)) = stride {
                        write!(f, " step {m} from {} (mod {m})", bound_text(phase))?;
                    }
                }
                LevelKind::Fixed { value } => write!(f, "{pad}let {} = {}", l.dim, bound_text(value))?,
            }
            if !l.guards.is_empty() {
                let g: Vec<String> = l.guards.iter().map(|c| c.to_string()).collect();
                write!(f, " if {}", g.join(" and "))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedra::{enumerate, Polyhedron};
    use crate::stur::parse_constraints;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<Var> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn check(dims: &[&str], params: &[&str], text: &str, values: &[i64]) {
        let cons = parse_constraints(text).unwrap();
        let nest = LoopNest::build(&names(dims), &names(params), &cons).unwrap();
        let poly = Polyhedron::new(names(dims), names(params), cons);
        for &v in values {
            let b: HashMap<Var, i64> = params.iter().map(|p| (p.to_string(), v)).collect();
            assert_eq!(nest.points(&b).unwrap(), enumerate(&poly, &b).unwrap(), "{text} at {v}");
        }
    }

    #[test]
    fn triangle_and_diagonal() {
        check(&["i", "j"], &["n"], "(0 <= i < n) * (0 <= j <= i)", &[1, 2, 5]);
        check(&["i", "j"], &["n"], "(0 <= i < n) * (j = i)", &[1, 4]);
    }

    #[test]
    fn strided_band() {
        check(&["i", "j"], &["n"], "(0 <= i < n) * (0 <= j < n) * ((j - i) % 3 = 1)", &[1, 4, 7]);
    }

    #[test]
    fn non_unit_equality_skips_odd() {
        check(&["i", "j"], &["n"], "(0 <= i < n) * (2 * j = i)", &[1, 6, 9]);
    }

    #[test]
    fn parameter_guard() {
        check(&["i"], &["n"], "(0 <= i < n) * (n >= 3)", &[1, 2, 3, 5]);
    }

    proptest! {
        #[test]
        fn random_band_matches_enumeration(lo in -3i64..3, w in 0i64..4, c in 1i64..3, n in 1i64..7) {
            let text = format!("(0 <= i < n) * ({lo} <= {c} * j - i <= {} )", lo + w);
            check(&["i", "j"], &["n"], &text, &[n]);
        }
    }
}
