//! Builtin kernels, generated from their unique-set constraint strings.

use std::collections::HashMap;

use crate::affine::Var;
use crate::error::{Error, Result};
use crate::stur::{parse_program, Program};

/// The twelve benchmark kernels.
pub const TABLE: [&str; 12] = [
    "TTM_DP", "TTM_J", "TTM_UT", "THP_DP", "THP_I", "THP_J", "MTT_D", "MTT_JUT", "MTT_J", "SpMV_L", "SpMV_UT",
    "SpMV_D",
];

/// Mod-constrained and density-varying structures.
pub const EXTRA: [&str; 5] = ["SpMV_SD1", "SpMV_SD2", "SpMV_SD3", "SpMV_ST", "TTM_UHC"];

/// Symbols that fix a coordinate rather than size a dimension.
const INDEX_SYMBOLS: [&str; 3] = ["I", "J", "k"];

const TTM: &str = "
shape A(n_i, n_j, n_k)
shape B(n_i, n_j, n_l)
shape C(n_k, n_l)
A(i, j, k) := B(i, j, l) * C(k, l)
";

const THP: &str = "
shape A(n_i, n_j, n_l)
shape B(n_i, n_j, n_l)
shape C(n_i, n_j, n_l)
A(i, j, k) := B(i, j, k) * C(i, j, k)
";

const MTT: &str = "
shape A(n_i, n_j)
shape B(n_i, n_k, n_l)
shape C(n_k, n_j)
shape D(n_l, n_j)
A(i, j) := B(i, k, l) * C(k, j) * D(l, j)
";

const SPMV: &str = "
shape A(n_i)
shape B(n_i, n_j)
shape C(n_j)
A(i) := B(i, j) * C(j)
";

const SPMV_SQUARE: &str = "
shape A(N)
shape B(N, N)
shape C(N)
A(i) := B(i, j) * C(j)
";

fn structure(name: &str) -> Option<(&'static str, String)> {
    let b3 = |u: &str| format!("B_U(i, j, l) := {u}\n");
    let b2 = |u: &str| format!("B_U(i, j) := {u}\n");
    let mtt = |b: &str, d: &str| format!("B_U(i, k, l) := {b}\nD_U(l, j) := {d}\n");
    Some(match name {
        "TTM_DP" => (TTM, b3("(0 <= i < n_i) * (i = j) * (0 <= l < n_l)")),
        "TTM_J" => (TTM, b3("(0 <= i < n_i) * (j = J) * (0 <= l < n_l)")),
        "TTM_UT" => (TTM, b3("(0 <= i < n_i) * (i <= j < n_j) * (0 <= l < n_l)")),
        "THP_DP" => (THP, b3("(0 <= i < n_i) * (i = j) * (0 <= l < n_l)")),
        "THP_I" => (THP, b3("(i = I) * (0 <= j < n_j) * (0 <= l < n_l)")),
        "THP_J" => (THP, b3("(0 <= i < n_i) * (j = J) * (0 <= l < n_l)")),
        "MTT_D" => (MTT, mtt("(i = k = l) * (0 <= i < n_i)", "(l = j) * (0 <= l < n_l)")),
        "MTT_JUT" => (
            MTT,
            mtt("(0 <= i < k) * (0 <= k < n_k) * (0 <= l < n_l)", "(0 <= l < n_l) * (j = J)"),
        ),
        "MTT_J" => (
            MTT,
            mtt("(0 <= i < n_i) * (0 <= k < n_k) * (0 <= l < n_l)", "(0 <= l < n_l) * (j = J)"),
        ),
        "SpMV_L" => (SPMV, b2("(i = 0) * (0 <= j < n_j) + (1 <= i < n_i) * (j = i - 1)")),
        "SpMV_UT" => (SPMV, b2("(0 <= i < n_i) * (i <= j < n_j)")),
        "SpMV_D" => (SPMV, b2("(0 <= i < n_i) * (i = j)")),
        "SpMV_SD1" | "SpMV_SD2" | "SpMV_SD3" => {
            let s = &name[7..];
            (SPMV_SQUARE, b2(&format!("(0 <= i < N) * (0 <= j < N) * ((j - i) % N = {s})")))
        }
        "SpMV_ST" => (SPMV_SQUARE, b2("(0 <= i < N) * (0 <= j < N) * (j - i >= N - k)")),
        "TTM_UHC" => (
            "
shape A(M, N, P)
A(i, j, k) := B(i, j, l) * C(k, l)
",
            "B_U(i, j, l) := (0 <= i < M) * (i <= j < N) * (0 <= l < Q)\nC_U(k, l) := (0 <= k < P) * (0 <= l < Q)\n"
                .to_string(),
        ),
        _ => return None,
    })
}

/// STUR text of a builtin kernel.
pub fn source(name: &str) -> Result<String> {
    let (rule, u) = structure(name).ok_or_else(|| Error::UnknownKernel(name.to_string()))?;
    Ok(format!("{}{u}", rule.trim_start()))
}

pub fn program(name: &str) -> Result<Program> {
    parse_program(&source(name)?)
}

/// Every builtin name.
pub fn all() -> impl Iterator<Item = &'static str> {
    TABLE.iter().chain(EXTRA.iter()).copied()
}

/// Binds every symbol of `p` to `n`, except coordinate-fixing symbols
/// (`I`, `J`, `k`), which get `max(n / 2, 1)`: symbols are positive.
pub fn uniform_binding(p: &Program, n: i64) -> HashMap<Var, i64> {
    let mut syms = p.symbols();
    for e in p.shapes.values().flatten() {
        syms.extend(e.vars().cloned());
    }
    syms.into_iter()
        .map(|s| {
            let v = if INDEX_SYMBOLS.contains(&s.as_str()) { (n / 2).max(1) } else { n };
            (s, v)
        })
        .collect()
}
