//! C99 text mirroring a kernel plan: one translation unit per summand.

use std::fmt::Write as _;

use crate::affine::{rat, AffineExpr, Constraint, Modulus, Var};
use crate::indexing::{hoist_schedule, IndexPlan, IntConstraint, IntKind, IntPoly, ModSlot};

use super::loopnest::{Bound, LevelKind};
use super::plan::{AccessPlan, KernelPlan, SummandPlan};

const HELPERS: &str = "\
static inline long max_l(long a, long b) { return a > b ? a : b; }
static inline long min_l(long a, long b) { return a < b ? a : b; }
static inline long floord(long n, long d) { return n >= 0 ? n / d : -((-n + d - 1) / d); }
static inline long ceild(long n, long d) { return -floord(-n, d); }
static inline long pmod(long n, long m) { long r = n % m; return r < 0 ? r + m : r; }
";

fn affine_c(e: &AffineExpr) -> String {
    let e = e.scale(rat(e.denominator_lcm()));
    let mut out = String::new();
    for (v, c) in e.terms() {
        let c = c.to_integer();
        let (sign, mag) = if c < 0 { ("-", -c) } else { ("+", c) };
        if out.is_empty() {
            if sign == "-" {
                out.push('-');
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag == 1 {
            out.push_str(v);
        } else {
            let _ = write!(out, "{mag}*{v}");
        }
    }
    let k = e.constant_term().to_integer();
    if out.is_empty() {
        return k.to_string();
    }
    if k > 0 {
        let _ = write!(out, " + {k}");
    } else if k < 0 {
        let _ = write!(out, " - {}", -k);
    }
    out
}

fn constraint_c(c: &Constraint) -> String {
    match c {
        Constraint::Ge(e) => format!("{} >= 0", affine_c(e)),
        Constraint::Eq(e) => format!("{} == 0", affine_c(e)),
        Constraint::Mod {
            expr,
            modulus,
            residue,
        } => {
            let m = match modulus {
                Modulus::Lit(m) => m.to_string(),
                Modulus::Sym(s) => s.clone(),
            };
            format!("pmod({}, {m}) == {}", affine_c(expr), affine_c(residue))
        }
    }
}

fn conj_c(cs: &[Constraint]) -> String {
    if cs.is_empty() {
        return "1".into();
    }
    cs.iter()
        .map(|c| format!("({})", constraint_c(c)))
        .collect::<Vec<_>>()
        .join(" && ")
}

fn int_poly_c(p: &IntPoly, names: &[Var]) -> String {
    let mut out = String::new();
    for (c, factors) in &p.terms {
        let (neg, mag) = (*c < 0, c.abs());
        let mut parts: Vec<String> = Vec::new();
        if mag != 1 || factors.is_empty() {
            parts.push(mag.to_string());
        }
        for &(s, e) in factors {
            for _ in 0..e {
                parts.push(names[s].clone());
            }
        }
        let t = parts.join("*");
        match (out.is_empty(), neg) {
            (true, true) => {
                let _ = write!(out, "-{t}");
            }
            (true, false) => out.push_str(&t),
            (false, true) => {
                let _ = write!(out, " - {t}");
            }
            (false, false) => {
                let _ = write!(out, " + {t}");
            }
        }
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

fn int_affine_c(coeffs: &[(usize, i128)], constant: i128, names: &[Var]) -> String {
    let mut e = AffineExpr::constant(constant);
    for &(s, c) in coeffs {
        e.add_term(&names[s], rat(c));
    }
    affine_c(&e)
}

fn int_constraint_c(c: &IntConstraint, names: &[Var]) -> String {
    let lhs = int_affine_c(&c.coeffs, c.constant, names);
    match &c.kind {
        IntKind::Ge => format!("{lhs} >= 0"),
        IntKind::Eq => format!("{lhs} == 0"),
        IntKind::Mod {
            modulus,
            residue,
            residue_constant,
        } => {
            let m = match modulus {
                ModSlot::Lit(m) => m.to_string(),
                ModSlot::Slot(s) => names[*s].clone(),
            };
            format!("pmod({lhs}, {m}) == {}", int_affine_c(residue, *residue_constant, names))
        }
    }
}

fn bound_c(b: &Bound, round: &str) -> String {
    if b.div == 1 {
        affine_c(&b.num)
    } else {
        format!("{round}({}, {})", affine_c(&b.num), b.div)
    }
}

fn fold_c(bounds: &[Bound], round: &str, f: &str) -> String {
    let mut it = bounds.iter().map(|b| bound_c(b, round));
    let first = it.next().unwrap_or_else(|| "0".into());
    it.fold(first, |acc, b| format!("{f}({acc}, {b})"))
}

struct Emitter<'a> {
    s: &'a SummandPlan,
    names: Vec<Var>,
    labels: Vec<String>,
    out: String,
}

impl<'a> Emitter<'a> {
    fn access(&self, a: usize) -> &'a AccessPlan {
        if a == 0 {
            &self.s.output
        } else {
            &self.s.inputs[a - 1]
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    /// Level at which a coefficient is computable: one past its innermost dim.
    fn hoist_level(&self, p: &IntPoly) -> usize {
        let np = self.s.nest.params.len();
        p.terms
            .iter()
            .flat_map(|(_, f)| f.iter().map(|(s, _)| *s))
            .filter(|&s| s >= np)
            .map(|s| s - np + 1)
            .max()
            .unwrap_or(0)
    }

    fn hoisted_at(&mut self, level: usize, depth: usize) {
        let dims = self.s.nest.dims.clone();
        for a in 0..self.labels.len() {
            let acc = self.access(a);
            let IndexPlan::Hoisted { base, levels, .. } = &acc.index else {
                continue;
            };
            let sched = acc.function.rank.as_total().map(|p| hoist_schedule(p, &dims));
            if level == 0 {
                let text = format!("const long r_{}_0 = {};", self.labels[a], int_poly_c(base, &self.names));
                self.line(depth, &text);
            }
            for (k, cs) in levels.iter().enumerate() {
                for (e, c) in cs.iter().enumerate() {
                    if c.is_zero() || self.hoist_level(c) != level {
                        continue;
                    }
                    let note = sched
                        .as_ref()
                        .and_then(|s| s.coeffs.get(k).and_then(|v| v.get(e)))
                        .map(|q| format!(" /* {q} */"))
                        .unwrap_or_default();
                    let text = format!(
                        "const long h_{}_{k}_{e} = {};{note}",
                        self.labels[a],
                        int_poly_c(c, &self.names)
                    );
                    self.line(depth, &text);
                }
            }
        }
    }

    fn partial_sums(&mut self, k: usize, depth: usize) {
        let x = self.s.nest.dims[k].clone();
        for a in 0..self.labels.len() {
            let IndexPlan::Hoisted { levels, .. } = &self.access(a).index else {
                continue;
            };
            let l = &self.labels[a];
            let mut text = format!("const long r_{l}_{} = r_{l}_{k}", k + 1);
            for (e, c) in levels[k].iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut term = format!("h_{l}_{k}_{e}");
                for _ in 0..e {
                    let _ = write!(term, "*{x}");
                }
                let _ = write!(text, " + {term}");
            }
            text.push(';');
            self.line(depth, &text);
        }
    }

    fn index_expr(&mut self, a: usize, depth: usize) -> String {
        let n = self.s.nest.levels.len();
        let l = self.labels[a].clone();
        match &self.access(a).index {
            IndexPlan::Hoisted { denom, .. } => {
                if *denom == 1 {
                    format!("r_{l}_{n}")
                } else {
                    format!("r_{l}_{n} / {denom}")
                }
            }
            IndexPlan::Guarded { pieces } => {
                let mut expr = "0".to_string();
                for (dom, poly, denom) in pieces.iter().rev() {
                    let cond = dom
                        .iter()
                        .map(|c| {
                            let parts: Vec<String> =
                                c.iter().map(|x| format!("({})", int_constraint_c(x, &self.names))).collect();
                            if parts.is_empty() {
                                "1".to_string()
                            } else {
                                parts.join(" && ")
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" || ");
                    let val = if *denom == 1 {
                        format!("({})", int_poly_c(poly, &self.names))
                    } else {
                        format!("({}) / {denom}", int_poly_c(poly, &self.names))
                    };
                    expr = format!("({cond}) ? {val} : {expr}");
                }
                let text = format!("const long x_{l} = {expr};");
                self.line(depth, &text);
                format!("x_{l}")
            }
        }
    }

    fn level(&mut self, k: usize, depth: usize) {
        self.hoisted_at(k, depth);
        let n = self.s.nest.levels.len();
        if k == n {
            let idx: Vec<String> = (0..self.labels.len()).map(|a| self.index_expr(a, depth)).collect();
            let reads: Vec<String> = (1..self.labels.len())
                .map(|a| format!("{}[{}]", self.access(a).tensor, idx[a]))
                .collect();
            let rhs = if reads.is_empty() { "1".to_string() } else { reads.join(" * ") };
            let text = format!("{}[{}] += {rhs};", self.s.output.tensor, idx[0]);
            self.line(depth, &text);
            return;
        }
        let level = &self.s.nest.levels[k];
        let x = level.dim.clone();
        let mut close = 0;
        let mut d = depth;
        match &level.kind {
            LevelKind::Range { lower, upper, stride } => {
                let lo = fold_c(lower, "ceild", "max_l");
                let hi = fold_c(upper, "floord", "min_l");
                match stride {
                    None => self.line(d, &format!("for (int {x} = {lo}; {x} <= {hi}; {x}++) {{")),
                    Some((m, phase)) => {
                        self.line(d, &format!("const long {x}_lo = {lo};"));
                        let start = format!("{x}_lo + pmod({} - {x}_lo, {m})", bound_c(phase, "floord"));
                        self.line(d, &format!("for (int {x} = {start}; {x} <= {hi}; {x} += {m}) {{"));
                    }
                }
                close += 1;
                d += 1;
            }
            LevelKind::Fixed { value } => {
                if value.div == 1 {
                    self.line(d, &format!("int {x} = {};", affine_c(&value.num)));
                } else {
                    let num = affine_c(&value.num);
                    self.line(d, &format!("if (pmod({num}, {}) == 0) {{", value.div));
                    close += 1;
                    d += 1;
                    self.line(d, &format!("int {x} = ({num}) / {};", value.div));
                }
            }
        }
        if !level.guards.is_empty() {
            let cond = conj_c(&level.guards);
            self.line(d, &format!("if ({cond}) {{"));
            close += 1;
            d += 1;
        }
        self.partial_sums(k, d);
        self.level(k + 1, d);
        for _ in 0..close {
            d -= 1;
            self.line(d, "}");
        }
    }
}

fn signature(plan: &KernelPlan, name: &str, elem: &str) -> String {
    let mut args: Vec<String> = plan.params.iter().map(|p| format!("long {p}")).collect();
    let out = plan.compiled.output().to_string();
    args.push(format!("{elem} *{out}"));
    for t in plan.compiled.inputs() {
        args.push(format!("const {elem} *{t}"));
    }
    format!("void {name}({})", args.join(", "))
}

/// `(file name, text)` per compressed summand, in summand order.
pub fn emit_c(plan: &KernelPlan) -> Vec<(String, String)> {
    let rule = &plan.compiled.rule;
    let mut files = Vec::new();
    for (si, cs) in plan.compiled.summands.iter().enumerate() {
        let name = format!("{rule}_{si}");
        let mut text = String::new();
        let s = &cs.summand;
        let reads: Vec<String> = s
            .inputs
            .iter()
            .map(|a| format!("{}({})", a.tensor, a.indices.join(", ")))
            .collect();
        let _ = writeln!(
            text,
            "/* {}({}) += {} */",
            s.output.tensor,
            s.output.indices.join(", "),
            reads.join(" * ")
        );
        let _ = writeln!(text, "/* domain: {} */", conj_c(&s.constraints));
        text.push('\n');
        text.push_str(HELPERS);
        text.push('\n');
        let _ = writeln!(text, "{} {{", signature(plan, &name, "double"));
        if let Some(sp) = plan.summands.iter().find(|p| p.index == si) {
            let mut labels: Vec<String> = Vec::new();
            for a in std::iter::once(&sp.output).chain(&sp.inputs) {
                let mut l = a.tensor.clone();
                if labels.contains(&l) {
                    l = format!("{l}{}", labels.len());
                }
                labels.push(l);
            }
            let mut names = sp.nest.params.clone();
            names.extend(sp.nest.dims.iter().cloned());
            let mut em = Emitter {
                s: sp,
                names,
                labels,
                out: String::new(),
            };
            if !sp.nest.pre_guards.is_empty() {
                let cond = conj_c(&sp.nest.pre_guards);
                em.line(1, &format!("if (!({cond})) return;"));
            }
            em.level(0, 1);
            text.push_str(&em.out);
        }
        text.push_str("}\n");
        files.push((format!("{name}.c"), text));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexing::{compile_rule, Compression};
    use crate::kernels;
    use crate::stur::parse_program;

    fn emit(src: &str, rule: &str, c: Compression) -> Vec<(String, String)> {
        let p = parse_program(src).unwrap();
        emit_c(&KernelPlan::build(compile_rule(&p, rule, c).unwrap()).unwrap())
    }

    #[test]
    fn diagonal_hadamard_fixes_inner_iterator() {
        let files = emit(
            "
shape T(n, n)
shape V(n, n)
M_U(x, y) := (0 <= x < n) * (x = y)
T(x, y) := M(x, y) * V(x, y)
",
            "T",
            Compression::Input,
        );
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].0, "T_0.c");
        assert!(files[0].1.contains("int y = x;"), "{}", files[0].1);
    }

    #[test]
    fn ttm_constant_hoisted_above_loops() {
        let src = kernels::source("TTM_UHC").unwrap();
        let files = emit(&src, "A", Compression::Input);
        let text = &files[0].1;
        let hoisted = text.find("const long h_B_0_1 = ").expect(text);
        let first_loop = text.find("for (int i").unwrap();
        assert!(hoisted < first_loop, "{text}");
        assert!(text.contains("2*N*Q - Q") || text.contains("-Q + 2*N*Q"), "{text}");
    }

    #[test]
    fn empty_summand_has_empty_body() {
        let files = emit(
            "
shape A(n)
shape B(n)
A(i) := B(i) * (0 <= i < n) * (i < 0)
",
            "A",
            Compression::None,
        );
        assert!(files[0].1.ends_with("{\n}\n"), "{}", files[0].1);
    }

    #[test]
    fn deterministic() {
        let src = kernels::source("SpMV_L").unwrap();
        assert_eq!(emit(&src, "A", Compression::InputOutput), emit(&src, "A", Compression::InputOutput));
    }
}
