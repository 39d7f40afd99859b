//! Multivariate polynomials with exact rational coefficients.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::affine::{fmt_rat, rat, AffineExpr, Rat, Var};

/// Sorted `(variable, exponent)` pairs with positive exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: &str) -> Self {
        Monomial(vec![(v.to_string(), 1)])
    }

    pub fn factors(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn exponent(&self, v: &str) -> u32 {
        self.0.iter().find(|(x, _)| x == v).map(|(_, e)| *e).unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<Var, u32> = self.0.iter().cloned().collect();
        for (v, e) in &other.0 {
            *map.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(map.into_iter().collect())
    }

    pub fn without(&self, v: &str) -> Monomial {
        Monomial(self.0.iter().filter(|(x, _)| x != v).cloned().collect())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, e)| if *e == 1 { v.clone() } else { format!("{v}^{e}") })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Polynomial in iterators and symbols. Counting results here carry no
/// periodic coefficients, so this is a plain rational polynomial.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct QuasiPolynomial {
    terms: BTreeMap<Monomial, Rat>,
}

impl QuasiPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rat) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn int(c: i128) -> Self {
        Self::constant(rat(c))
    }

    pub fn var(v: &str) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::var(v), rat(1));
        p
    }

    pub fn from_affine(e: &AffineExpr) -> Self {
        let mut p = Self::constant(e.constant_term());
        for (v, c) in e.terms() {
            p.add_term(Monomial::var(v), *c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 => self.terms.get(&Monomial::one()).copied(),
            _ => None,
        }
    }

    pub fn scale(&self, k: Rat) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::int(1);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(v, _)| v.clone()))
            .collect()
    }

    pub fn mentions(&self, v: &str) -> bool {
        self.terms.keys().any(|m| m.exponent(v) > 0)
    }

    pub fn degree_in(&self, v: &str) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Coefficients `c_e` with `self = sum_e c_e * v^e`.
    pub fn coefficients_in(&self, v: &str) -> Vec<QuasiPolynomial> {
        let mut out = vec![Self::zero(); self.degree_in(v) as usize + 1];
        for (m, c) in &self.terms {
            out[m.exponent(v) as usize].add_term(m.without(v), *c);
        }
        out
    }

    pub fn substitute(&self, v: &str, value: &QuasiPolynomial) -> Self {
        if !self.mentions(v) {
            return self.clone();
        }
        let coeffs = self.coefficients_in(v);
        let mut acc = Self::zero();
        for c in coeffs.iter().rev() {
            acc = &(&acc * value) + c;
        }
        acc
    }

    pub fn substitute_affine(&self, v: &str, value: &AffineExpr) -> Self {
        self.substitute(v, &Self::from_affine(value))
    }

    pub fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let mut mono = Monomial::one();
            for (v, e) in &m.0 {
                let name = map.get(v).unwrap_or(v);
                mono = mono.mul(&Monomial(vec![(name.clone(), *e)]));
            }
            out.add_term(mono, *c);
        }
        out
    }

    pub fn eval(&self, values: &HashMap<Var, i64>) -> Option<Rat> {
        // integer numerators over the common denominator
        let l = self.denominator_lcm();
        let mut acc = 0i128;
        for (m, c) in &self.terms {
            let mut t = c.numer() * (l / c.denom());
            for (v, e) in &m.0 {
                t *= (*values.get(v)? as i128).pow(*e);
            }
            acc += t;
        }
        Some(Rat::new(acc, l))
    }

    pub fn partial_eval(&self, values: &HashMap<Var, i64>) -> Self {
        let mut out = self.clone();
        for (v, x) in values {
            if out.mentions(v) {
                out = out.substitute(v, &Self::int(*x as i128));
            }
        }
        out
    }

    pub fn denominator_lcm(&self) -> i128 {
        self.terms.values().fold(1i128, |acc, c| acc.lcm(c.denom()))
    }

    /// Group terms by the innermost variable of `order` they mention, and
    /// within each group by its power: `(c0 + c1)*i + (c2)*i^2 + (c3)*j + l`.
    pub fn display_nested(&self, order: &[Var]) -> String {
        let level = |m: &Monomial| -> Option<usize> {
            order.iter().rposition(|v| m.exponent(v) > 0)
        };
        let mut groups: BTreeMap<(Option<usize>, u32), QuasiPolynomial> = BTreeMap::new();
        for (m, c) in &self.terms {
            let key = match level(m) {
                None => (None, 0),
                Some(k) => (Some(k), m.exponent(&order[k])),
            };
            let rest = match key.0 {
                None => m.clone(),
                Some(k) => m.without(&order[k]),
            };
            groups.entry(key).or_default().add_term(rest, *c);
        }
        let mut parts: Vec<(bool, String)> = Vec::new();
        for ((lvl, pow), coeff) in &groups {
            let Some(k) = lvl else {
                let s = coeff.to_string();
                let neg = s.starts_with('-');
                parts.push((neg, s.trim_start_matches('-').to_string()));
                continue;
            };
            let var = if *pow == 1 {
                order[*k].clone()
            } else {
                format!("{}^{}", order[*k], pow)
            };
            let (neg, body) = match coeff.as_constant() {
                Some(c) if c.abs().is_one() => (c.is_negative(), var),
                Some(c) => (c.is_negative(), format!("{}*{var}", fmt_rat(&c.abs()))),
                None if coeff.terms.len() == 1 => {
                    let (m, c) = coeff.terms.iter().next().unwrap();
                    let lead = if c.abs().is_one() {
                        format!("{m}")
                    } else {
                        format!("{}*{m}", fmt_rat(&c.abs()))
                    };
                    (c.is_negative(), format!("{lead}*{var}"))
                }
                None => (false, format!("({coeff})*{var}")),
            };
            parts.push((neg, body));
        }
        if parts.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (idx, (neg, body)) in parts.iter().enumerate() {
            match (idx, neg) {
                (0, true) => out.push_str(&format!("-{body}")),
                (0, false) => out.push_str(body),
                (_, true) => out.push_str(&format!(" - {body}")),
                (_, false) => out.push_str(&format!(" + {body}")),
            }
        }
        out
    }
}

impl<'a> Add<&'a QuasiPolynomial> for &'a QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn add(self, rhs: &QuasiPolynomial) -> QuasiPolynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }
}

impl<'a> Sub<&'a QuasiPolynomial> for &'a QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn sub(self, rhs: &QuasiPolynomial) -> QuasiPolynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl<'a> Mul<&'a QuasiPolynomial> for &'a QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn mul(self, rhs: &QuasiPolynomial) -> QuasiPolynomial {
        let mut out = QuasiPolynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

impl Neg for &QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn neg(self) -> QuasiPolynomial {
        self.scale(-rat(1))
    }
}

impl fmt::Display for QuasiPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            match (idx, c.is_negative()) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if m.0.is_empty() {
                write!(f, "{}", fmt_rat(&mag))?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rat(&mag))?;
            }
        }
        Ok(())
    }
}
