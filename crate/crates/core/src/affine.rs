//! Exact affine forms and the constraint atoms built from them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Rat = Ratio<i128>;
pub type Var = String;

pub fn rat(n: i128) -> Rat {
    Rat::from_integer(n)
}

/// `sum(coeff * var) + constant` with rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineExpr {
    coeffs: BTreeMap<Var, Rat>,
    constant: Rat,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i128) -> Self {
        Self::from_rat(rat(c))
    }

    pub fn from_rat(c: Rat) -> Self {
        AffineExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: &str) -> Self {
        Self::term(name, rat(1))
    }

    pub fn term(name: &str, c: Rat) -> Self {
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(name.to_string(), c);
        }
        AffineExpr {
            coeffs,
            constant: Rat::zero(),
        }
    }

    pub fn from_terms<'a>(terms: impl IntoIterator<Item = (&'a str, i128)>, constant: i128) -> Self {
        let mut e = Self::constant(constant);
        for (v, c) in terms {
            e.add_term(v, rat(c));
        }
        e
    }

    pub fn add_term(&mut self, name: &str, c: Rat) {
        let entry = self.coeffs.entry(name.to_string()).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(name);
        }
    }

    pub fn coeff(&self, name: &str) -> Rat {
        self.coeffs.get(name).copied().unwrap_or_else(Rat::zero)
    }

    pub fn constant_term(&self) -> Rat {
        self.constant
    }

    pub fn set_constant(&mut self, c: Rat) {
        self.constant = c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Var, &Rat)> {
        self.coeffs.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.coeffs.keys()
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.coeffs.contains_key(name)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, k: Rat) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        AffineExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    /// Replace `name` by `value` everywhere.
    pub fn substitute(&self, name: &str, value: &AffineExpr) -> Self {
        match self.coeffs.get(name) {
            None => self.clone(),
            Some(c) => {
                let mut rest = self.clone();
                rest.coeffs.remove(name);
                rest + value.scale(*c)
            }
        }
    }

    pub fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        let mut out = Self::from_rat(self.constant);
        for (v, c) in &self.coeffs {
            let name = map.get(v).unwrap_or(v);
            out.add_term(name, *c);
        }
        out
    }

    /// Lowest common denominator of all coefficients and the constant.
    pub fn denominator_lcm(&self) -> i128 {
        self.coeffs
            .values()
            .chain(std::iter::once(&self.constant))
            .fold(1i128, |acc, c| acc.lcm(c.denom()))
    }

    pub fn is_integral(&self) -> bool {
        self.denominator_lcm() == 1
    }

    /// Evaluate with every variable bound; missing variables yield `None`.
    pub fn eval(&self, values: &HashMap<Var, i64>) -> Option<Rat> {
        if self.is_integral() {
            let mut acc = self.constant.to_integer();
            for (v, c) in &self.coeffs {
                acc += c.to_integer() * *values.get(v)? as i128;
            }
            return Some(rat(acc));
        }
        let mut acc = self.constant;
        for (v, c) in &self.coeffs {
            acc += c * rat(*values.get(v)? as i128);
        }
        Some(acc)
    }

    /// Evaluate with a partial binding: bound variables become constants.
    pub fn partial_eval(&self, values: &HashMap<Var, i64>) -> Self {
        let mut out = Self::from_rat(self.constant);
        for (v, c) in &self.coeffs {
            match values.get(v) {
                Some(x) => out.constant += c * rat(*x as i128),
                None => out.add_term(v, *c),
            }
        }
        out
    }

    /// Same variable part (ignoring the constant).
    pub fn linear_part_eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs
    }

    pub fn linear_part(&self) -> Self {
        AffineExpr {
            coeffs: self.coeffs.clone(),
            constant: Rat::zero(),
        }
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        for (v, c) in rhs.coeffs {
            self.add_term(&v, c);
        }
        self.constant += rhs.constant;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + (-rhs)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-rat(1))
    }
}

impl Mul<Rat> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, k: Rat) -> AffineExpr {
        self.scale(k)
    }
}

pub(crate) fn fmt_rat(c: &Rat) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if mag.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{}*{v}", fmt_rat(&mag))?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", fmt_rat(&self.constant))?;
        } else if !self.constant.is_zero() {
            let sign = if self.constant.is_negative() { "-" } else { "+" };
            write!(f, " {sign} {}", fmt_rat(&self.constant.abs()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulus {
    Lit(i64),
    Sym(Var),
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulus::Lit(m) => write!(f, "{m}"),
            Modulus::Sym(s) => write!(f, "{s}"),
        }
    }
}

/// Constraint atoms: `expr >= 0`, `expr = 0`, or `expr mod m = r`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Ge(AffineExpr),
    Eq(AffineExpr),
    Mod {
        expr: AffineExpr,
        modulus: Modulus,
        residue: AffineExpr,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Normalized {
    True,
    False,
    Keep(Constraint),
}

fn integer_scaled(e: &AffineExpr) -> AffineExpr {
    let l = e.denominator_lcm();
    if l == 1 {
        e.clone()
    } else {
        e.scale(rat(l))
    }
}

fn coeff_gcd(e: &AffineExpr) -> i128 {
    e.coeffs
        .values()
        .fold(0i128, |g, c| g.gcd(c.numer()))
}

impl Constraint {
    /// `a <= b`
    pub fn le(a: AffineExpr, b: AffineExpr) -> Self {
        Constraint::Ge(b - a)
    }

    /// `a < b` over the integers.
    pub fn lt(a: AffineExpr, b: AffineExpr) -> Self {
        Constraint::Ge(b - a - AffineExpr::constant(1))
    }

    pub fn eq(a: AffineExpr, b: AffineExpr) -> Self {
        Constraint::Eq(a - b)
    }

    /// The `false` constraint, `-1 >= 0`.
    pub fn falsum() -> Self {
        Constraint::Ge(AffineExpr::constant(-1))
    }

    pub fn expr(&self) -> &AffineExpr {
        match self {
            Constraint::Ge(e) | Constraint::Eq(e) => e,
            Constraint::Mod { expr, .. } => expr,
        }
    }

    pub fn is_mod(&self) -> bool {
        matches!(self, Constraint::Mod { .. })
    }

    pub fn mentions(&self, v: &str) -> bool {
        match self {
            Constraint::Ge(e) | Constraint::Eq(e) => e.mentions(v),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => expr.mentions(v) || residue.mentions(v) || matches!(modulus, Modulus::Sym(s) if s == v),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out: BTreeSet<Var> = self.expr().vars().cloned().collect();
        if let Constraint::Mod {
            modulus, residue, ..
        } = self
        {
            out.extend(residue.vars().cloned());
            if let Modulus::Sym(s) = modulus {
                out.insert(s.clone());
            }
        }
        out
    }

    /// Canonical integer form. Inequalities are tightened to the integer hull
    /// of their half-space (gcd division with floor on the constant).
    pub fn normalize(&self) -> Normalized {
        match self {
            Constraint::Ge(e) => {
                let e = integer_scaled(e);
                if e.is_constant() {
                    return if e.constant >= Rat::zero() {
                        Normalized::True
                    } else {
                        Normalized::False
                    };
                }
                let g = coeff_gcd(&e);
                let mut out = AffineExpr::zero();
                for (v, c) in &e.coeffs {
                    out.add_term(v, rat(c.numer() / g));
                }
                out.constant = rat(e.constant.numer().div_floor(&g));
                Normalized::Keep(Constraint::Ge(out))
            }
            Constraint::Eq(e) => {
                let e = integer_scaled(e);
                if e.is_constant() {
                    return if e.constant.is_zero() {
                        Normalized::True
                    } else {
                        Normalized::False
                    };
                }
                let g = coeff_gcd(&e);
                if e.constant.numer() % g != 0 {
                    return Normalized::False;
                }
                let sign = if e.coeffs.values().next().unwrap().is_negative() {
                    -1
                } else {
                    1
                };
                Normalized::Keep(Constraint::Eq(e.scale(Rat::new(sign, g))))
            }
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => {
                if !expr.is_integral() || !residue.is_integral() {
                    return Normalized::Keep(self.clone());
                }
                match modulus {
                    Modulus::Lit(m) => {
                        let m = *m as i128;
                        if m == 1 {
                            return Normalized::True;
                        }
                        if !residue.is_constant() {
                            return Normalized::Keep(self.clone());
                        }
                        let mut e = AffineExpr::zero();
                        for (v, c) in &expr.coeffs {
                            let r = c.numer().rem_euclid(m);
                            if r != 0 {
                                e.add_term(v, rat(*c.numer()));
                            }
                        }
                        let r0 = residue.constant.numer();
                        if !(0..m).contains(r0) {
                            return Normalized::False;
                        }
                        let r = (r0 - expr.constant.numer()).rem_euclid(m);
                        if e.is_constant() {
                            return if r == 0 {
                                Normalized::True
                            } else {
                                Normalized::False
                            };
                        }
                        Normalized::Keep(Constraint::Mod {
                            expr: e,
                            modulus: Modulus::Lit(m as i64),
                            residue: AffineExpr::constant(r),
                        })
                    }
                    Modulus::Sym(_) => Normalized::Keep(self.clone()),
                }
            }
        }
    }

    pub fn substitute(&self, v: &str, value: &AffineExpr) -> Constraint {
        match self {
            Constraint::Ge(e) => Constraint::Ge(e.substitute(v, value)),
            Constraint::Eq(e) => Constraint::Eq(e.substitute(v, value)),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => Constraint::Mod {
                expr: expr.substitute(v, value),
                modulus: modulus.clone(),
                residue: residue.substitute(v, value),
            },
        }
    }

    pub fn rename(&self, map: &HashMap<Var, Var>) -> Constraint {
        match self {
            Constraint::Ge(e) => Constraint::Ge(e.rename(map)),
            Constraint::Eq(e) => Constraint::Eq(e.rename(map)),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => Constraint::Mod {
                expr: expr.rename(map),
                modulus: match modulus {
                    Modulus::Sym(s) => Modulus::Sym(map.get(s).cloned().unwrap_or_else(|| s.clone())),
                    m => m.clone(),
                },
                residue: residue.rename(map),
            },
        }
    }

    /// Substitute bound values; the result mentions only unbound variables.
    pub fn partial_eval(&self, values: &HashMap<Var, i64>) -> Constraint {
        match self {
            Constraint::Ge(e) => Constraint::Ge(e.partial_eval(values)),
            Constraint::Eq(e) => Constraint::Eq(e.partial_eval(values)),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => Constraint::Mod {
                expr: expr.partial_eval(values),
                modulus: match modulus {
                    Modulus::Sym(s) => match values.get(s) {
                        Some(m) => Modulus::Lit(*m),
                        None => modulus.clone(),
                    },
                    m => m.clone(),
                },
                residue: residue.partial_eval(values),
            },
        }
    }

    /// Truth value at a fully bound point.
    pub fn holds(&self, values: &HashMap<Var, i64>) -> Option<bool> {
        Some(match self {
            Constraint::Ge(e) => e.eval(values)? >= Rat::zero(),
            Constraint::Eq(e) => e.eval(values)?.is_zero(),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => {
                let m = match modulus {
                    Modulus::Lit(m) => *m as i128,
                    Modulus::Sym(s) => *values.get(s)? as i128,
                };
                let x = expr.eval(values)?;
                let r = residue.eval(values)?;
                if m <= 0 || !x.is_integer() || !r.is_integer() {
                    false
                } else {
                    x.numer().rem_euclid(m) == *r.numer()
                }
            }
        })
    }

    /// Negation as a disjunction of constraints.
    pub fn negate(&self) -> Vec<Constraint> {
        match self {
            Constraint::Ge(e) => vec![Constraint::Ge(-e.clone() - AffineExpr::constant(1))],
            Constraint::Eq(e) => vec![
                Constraint::Ge(e.clone() - AffineExpr::constant(1)),
                Constraint::Ge(-e.clone() - AffineExpr::constant(1)),
            ],
            Constraint::Mod {
                expr,
                modulus: Modulus::Lit(m),
                residue,
            } if residue.is_constant() => (0..*m as i128)
                .filter(|r| rat(*r) != residue.constant)
                .map(|r| Constraint::Mod {
                    expr: expr.clone(),
                    modulus: Modulus::Lit(*m),
                    residue: AffineExpr::constant(r),
                })
                .collect(),
            Constraint::Mod { .. } => vec![],
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Ge(e) => write!(f, "{e} >= 0"),
            Constraint::Eq(e) => write!(f, "{e} = 0"),
            Constraint::Mod {
                expr,
                modulus,
                residue,
            } => write!(f, "({expr}) % {modulus} = {residue}"),
        }
    }
}

/// Normalize a conjunction: drops tautologies, dedupes, and collapses to a
/// single `falsum` when any atom is contradictory.
pub fn normalize_all(cons: &[Constraint]) -> Vec<Constraint> {
    let mut out: Vec<Constraint> = Vec::with_capacity(cons.len());
    for c in cons {
        match c.normalize() {
            Normalized::True => {}
            Normalized::False => return vec![Constraint::falsum()],
            Normalized::Keep(c) => {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

pub fn is_falsum(cons: &[Constraint]) -> bool {
    cons.len() == 1 && cons[0] == Constraint::falsum()
}

pub fn all_hold(cons: &[Constraint], values: &HashMap<Var, i64>) -> Option<bool> {
    for c in cons {
        if !c.holds(values)? {
            return Some(false);
        }
    }
    Some(true)
}
