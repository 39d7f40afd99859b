//! Closed-form power sums.

use crate::affine::{rat, AffineExpr, Rat};
use crate::error::{Error, Result};
use crate::poly::QuasiPolynomial;

pub const DEFAULT_MAX_DEGREE: u32 = 6;

fn binomial(n: u32, k: u32) -> Rat {
    let mut acc = rat(1);
    for t in 0..k {
        acc = acc * rat((n - t) as i128) / rat((t + 1) as i128);
    }
    acc
}

/// Bernoulli numbers `B_0..=B_n` with `B_1 = -1/2`.
fn bernoulli(n: u32) -> Vec<Rat> {
    let mut b: Vec<Rat> = Vec::with_capacity(n as usize + 1);
    for m in 0..=n {
        if m == 0 {
            b.push(rat(1));
            continue;
        }
        let mut s = rat(0);
        for j in 0..m {
            s += binomial(m + 1, j) * b[j as usize];
        }
        b.push(-s / rat((m + 1) as i128));
    }
    b
}

/// Coefficients of `S_e(n) = sum_{v=0}^{n} v^e` as a polynomial in `n`
/// (index = power of `n`).
pub fn power_sum_coefficients(e: u32) -> Vec<Rat> {
    let b = bernoulli(e);
    let mut out = vec![rat(0); e as usize + 2];
    for k in 0..=e {
        // B_1^+ = +1/2 gives sum_{v=1}^{n}
        let bk = if k == 1 { -b[1] } else { b[k as usize] };
        out[(e + 1 - k) as usize] += binomial(e + 1, k) * bk / rat((e + 1) as i128);
    }
    if e == 0 {
        // the v = 0 term of v^0
        out[0] += rat(1);
    }
    out
}

fn power_sum_at(e: u32, x: &QuasiPolynomial) -> QuasiPolynomial {
    let coeffs = power_sum_coefficients(e);
    let mut acc = QuasiPolynomial::zero();
    for c in coeffs.iter().rev() {
        acc = &(&acc * x) + &QuasiPolynomial::constant(*c);
    }
    acc
}

/// `sum_{v=lb}^{ub} p` as a polynomial in the remaining variables, valid
/// whenever `ub >= lb - 1` (empty ranges give 0 at `ub = lb - 1` only; the
/// caller guards the range by piece constraints).
pub fn faulhaber_sum(
    p: &QuasiPolynomial,
    v: &str,
    lb: &AffineExpr,
    ub: &AffineExpr,
    max_degree: u32,
) -> Result<QuasiPolynomial> {
    let degree = p.degree_in(v);
    if degree > max_degree {
        return Err(Error::DegreeOverflow {
            degree,
            max: max_degree,
        });
    }
    let upper = QuasiPolynomial::from_affine(ub);
    let below = QuasiPolynomial::from_affine(&(lb.clone() - AffineExpr::constant(1)));
    let mut acc = QuasiPolynomial::zero();
    for (e, c) in p.coefficients_in(v).iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let s = &power_sum_at(e as u32, &upper) - &power_sum_at(e as u32, &below);
        acc = &acc + &(c * &s);
    }
    Ok(acc)
}
