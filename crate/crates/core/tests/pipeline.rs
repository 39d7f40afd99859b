use tensorpack::codegen::ExecOptions;
use tensorpack::indexing::Compression;
use tensorpack::kernels;
use tensorpack::runtime::run_verified;

const LEVELS: [Compression; 3] = [Compression::None, Compression::Input, Compression::InputOutput];

#[test]
fn every_builtin_matches_reference_on_integers() {
    for name in kernels::all() {
        let p = kernels::program(name).unwrap();
        for n in [1, 2, 5] {
            let b = kernels::uniform_binding(&p, n);
            for c in LEVELS {
                let opts = ExecOptions { workers: 1, hoist_check: true, ..Default::default() };
                let v = run_verified::<i64>(&p, "A", c, &b, 11, opts)
                    .unwrap_or_else(|e| panic!("{name} n={n} {c}: {e}"));
                assert!(v.pass, "{name} n={n} {c}: {:?}", v.output.first_difference(&v.reference));
            }
        }
    }
}
