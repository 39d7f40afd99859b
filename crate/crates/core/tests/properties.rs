use std::collections::HashMap;

use proptest::prelude::*;

use tensorpack::affine::Var;
use tensorpack::codegen::{ExecOptions, KernelPlan};
use tensorpack::counting::{count_points, fuse_piecewise, PiecewiseQuasiPolynomial};
use tensorpack::indexing::{compile_rule, Compression, Layout};
use tensorpack::kernels;
use tensorpack::polyhedra::{enumerate, preceding_slices, Polyhedron};
use tensorpack::runtime::{pack, random_inputs, run_plan, unpack, DenseTensor};
use tensorpack::stur::{parse_constraints, parse_program, print_program};
use tensorpack::Error;

fn builtin() -> impl Strategy<Value = &'static str> {
    proptest::sample::select(kernels::all().collect::<Vec<_>>())
}

fn table_kernel() -> impl Strategy<Value = &'static str> {
    proptest::sample::select(kernels::TABLE.to_vec())
}

fn term(c: i64, v: &str) -> String {
    match c {
        0 => String::new(),
        1 => format!(" + {v}"),
        -1 => format!(" - {v}"),
        c if c < 0 => format!(" - {}*{v}", -c),
        c => format!(" + {c}*{v}"),
    }
}

/// `a*i + b*j + c*n + d >= 0` inside the square `[0, n)^2`.
fn cut_square(a: i64, b: i64, c: i64, d: i64) -> String {
    format!(
        "(0 <= i < n) * (0 <= j < n) * ({d}{}{}{} >= 0)",
        term(a, "i"),
        term(b, "j"),
        term(c, "n")
    )
}

fn square(text: &str) -> Polyhedron {
    Polyhedron::new(
        vec!["i".into(), "j".into()],
        vec!["n".into()],
        parse_constraints(text).unwrap(),
    )
}

fn bind(pairs: &[(&str, i64)]) -> HashMap<Var, i64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Counts with unit coefficients only; periodic counts are rejected by
/// design and skipped here.
fn counted(p: &Polyhedron) -> Result<PiecewiseQuasiPolynomial, TestCaseError> {
    match count_points(p, &p.dims) {
        Ok(t) => Ok(t),
        Err(Error::UnsupportedPeriodic(_)) => Err(TestCaseError::reject("periodic count")),
        Err(e) => Err(TestCaseError::fail(e.to_string())),
    }
}

/// Points of `p` by direct scan of `[0, n)^2`.
fn scan(p: &Polyhedron, n: i64) -> Vec<Vec<i64>> {
    let b = bind(&[("n", n)]);
    (0..n)
        .flat_map(|i| (0..n).map(move |j| vec![i, j]))
        .filter(|x| p.contains(x, &b))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn printed_program_reparses(name in builtin()) {
        let p = kernels::program(name).unwrap();
        let text = print_program(&p);
        let q = parse_program(&text).unwrap();
        prop_assert_eq!(print_program(&q), text);
        prop_assert_eq!(q, p);
    }

    #[test]
    fn printed_constraints_reparse(a in -2i64..=2, b in -2i64..=2, c in -1i64..=1, d in -3i64..=3) {
        let cons = parse_constraints(&cut_square(a, b, c, d)).unwrap();
        let text: Vec<String> = cons.iter().map(|c| format!("({c})")).collect();
        prop_assert_eq!(parse_constraints(&text.join(" * ")).unwrap(), cons);
    }

    #[test]
    fn count_matches_scan(a in -1i64..=1, b in -1i64..=1, c in -1i64..=1, d in -3i64..=3) {
        let p = square(&cut_square(a, b, c, d));
        let t = counted(&p)?;
        for n in 1..=7 {
            prop_assert_eq!(t.evaluate(&bind(&[("n", n)])).unwrap(), scan(&p, n).len() as i128, "n={}", n);
        }
    }

    #[test]
    fn fusion_keeps_every_rank(a in -1i64..=1, b in -1i64..=1, c in -1i64..=1, d in -3i64..=3) {
        let p = square(&cut_square(a, b, c, d));
        let mut raw: Option<PiecewiseQuasiPolynomial> = None;
        for s in preceding_slices(&p) {
            let t = counted(&s)?;
            raw = Some(match raw {
                None => t,
                Some(r) => r.add(&t),
            });
        }
        let raw = raw.unwrap();
        let fused = fuse_piecewise(&raw);
        prop_assert!(fused.pieces.len() <= raw.pieces.len());
        for n in 1..=6 {
            for (r, x) in scan(&p, n).iter().enumerate() {
                let v = bind(&[("n", n), ("i", x[0]), ("j", x[1])]);
                prop_assert_eq!(raw.evaluate(&v).unwrap(), r as i128);
                prop_assert_eq!(fused.evaluate(&v).unwrap(), r as i128);
            }
        }
    }

    #[test]
    fn pack_then_unpack_keeps_the_unique_set(name in builtin(), n in 1i64..=6, seed in any::<u64>()) {
        let p = kernels::program(name).unwrap();
        let b = kernels::uniform_binding(&p, n);
        let c = compile_rule(&p, "A", Compression::Input).unwrap();
        let inputs = random_inputs::<i64>(&p, "A", &b, seed).unwrap();
        for buf in c.registry.buffers.iter().filter(|x| !x.output && x.function.layout == Layout::Compressed) {
            let x = &inputs[&buf.tensor];
            let packed = pack(&buf.function, x, &b).unwrap();
            prop_assert_eq!(packed.len() as i128, buf.function.size_at(&b).unwrap());
            let mut back = DenseTensor::<i64>::zeros(x.shape.clone());
            unpack(&buf.function, &packed, &mut back, &b).unwrap();
            let kept = back.data.iter().zip(&x.data).filter(|(u, v)| *u != &0 && u == v).count();
            prop_assert!(back.data.iter().zip(&x.data).all(|(u, v)| *u == 0 || u == v));
            prop_assert!(kept <= packed.len());
            prop_assert_eq!(pack(&buf.function, &back, &b).unwrap(), packed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integer_results_ignore_worker_count(name in table_kernel(), n in 1i64..=12, seed in any::<u64>()) {
        let p = kernels::program(name).unwrap();
        let b = kernels::uniform_binding(&p, n);
        let plan = KernelPlan::build(compile_rule(&p, "A", Compression::InputOutput).unwrap()).unwrap();
        let inputs = random_inputs::<i64>(&p, "A", &b, seed).unwrap();
        let run = |workers| {
            let opts = ExecOptions { workers, ..Default::default() };
            run_plan(&p, &plan, &inputs, &b, opts).unwrap().0
        };
        let one = run(1);
        prop_assert_eq!(&run(2), &one);
        prop_assert_eq!(&run(8), &one);
    }
}

#[test]
fn enumeration_is_lexicographic() {
    let p = square(&cut_square(1, -1, 0, 0));
    let pts = enumerate(&p, &bind(&[("n", 5)])).unwrap();
    assert!(pts.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(pts, scan(&p, 5));
}
