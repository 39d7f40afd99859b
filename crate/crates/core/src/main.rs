use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tensorpack::affine::Var;
use tensorpack::codegen::{emit_c, execute, ExecOptions, KernelPlan};
use tensorpack::indexing::{compile_rule, Compression, Layout};
use tensorpack::kernels;
use tensorpack::runtime::{
    footprint_report, max_relative_error, pack_all, random_inputs, rate_text, reference_execute, unpack_output,
    DenseTensor, Scalar,
};
use tensorpack::stur::{parse_program, Program};
use tensorpack::Error;

#[derive(Parser)]
#[command(name = "tensorpack", version, about = "Compressed-layout compiler for structured tensor kernels")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print index polynomials, buffer sizes and loop nests.
    Compile {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "input+output")]
        compression: String,
        /// Write one C file per summand into this directory.
        #[arg(long)]
        emit_c: Option<PathBuf>,
    },
    /// Execute over packed buffers and verify against the dense reference.
    Run {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long, default_value = "input+output")]
        compression: String,
        /// Read an input tensor from a file: `NAME=PATH` (others are random).
        #[arg(long = "input", value_name = "NAME=PATH")]
        inputs: Vec<String>,
        /// Write the dense output here.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_index: bool,
    },
    /// Time kernels over bindings, compression levels and worker counts.
    Bench {
        /// Builtin kernel (repeatable).
        #[arg(long = "kernel", required = true)]
        kernels: Vec<String>,
        /// Uniform size (repeatable).
        #[arg(long = "size", required = true)]
        sizes: Vec<i64>,
        #[arg(long = "compression", default_values_t = ["none".to_string(), "input".to_string(), "input+output".to_string()])]
        compressions: Vec<String>,
        #[arg(long = "workers", default_values_t = [1usize])]
        workers: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Dtype::F64)]
        dtype: Dtype,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Skip the dense check above this many iteration points.
        #[arg(long, default_value_t = 50_000_000)]
        verify_limit: u128,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Dense, unique-set and compressed element counts.
    Footprint {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "input+output")]
        compression: String,
    },
}

#[derive(Args)]
struct Source {
    /// Builtin kernel name.
    #[arg(long, conflicts_with = "stur")]
    kernel: Option<String>,
    /// STUR program file.
    #[arg(long)]
    stur: Option<PathBuf>,
    /// Rule to compile (default: the first).
    #[arg(long)]
    rule: Option<String>,
    /// Symbol binding `NAME=VALUE` (repeatable).
    #[arg(long = "bind", value_name = "NAME=VALUE")]
    binds: Vec<String>,
    /// Bind every unbound symbol uniformly.
    #[arg(long)]
    size: Option<i64>,
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long, value_enum, default_value_t = Dtype::F64)]
    dtype: Dtype,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    F64,
    I64,
}

enum Failure {
    Verify,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CliResult = Result<(), Failure>;

struct Loaded {
    name: String,
    program: Program,
    rule: String,
}

fn load(src: &Source) -> Result<Loaded, Error> {
    let (name, program) = match (&src.kernel, &src.stur) {
        (Some(k), _) => (k.clone(), kernels::program(k)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            (path.display().to_string(), parse_program(&text)?)
        }
        (None, None) => return Err(Error::Invalid("pass --kernel or --stur".into())),
    };
    let rule = match &src.rule {
        Some(r) => r.clone(),
        None => program
            .rules
            .first()
            .map(|r| r.name.clone())
            .ok_or_else(|| Error::Invalid("program has no rules".into()))?,
    };
    Ok(Loaded { name, program, rule })
}

fn binding(src: &Source, p: &Program) -> Result<HashMap<Var, i64>, Error> {
    let mut b = match src.size {
        Some(n) => kernels::uniform_binding(p, n),
        None => HashMap::new(),
    };
    for kv in &src.binds {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("binding `{kv}` is not NAME=VALUE")))?;
        let v: i64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("binding `{kv}` has a non-integer value")))?;
        b.insert(k.trim().to_string(), v);
    }
    Ok(b)
}

fn binding_text(b: &HashMap<Var, i64>) -> String {
    let sorted: BTreeMap<&Var, &i64> = b.iter().collect();
    sorted
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_compile(src: &Source, compression: &str, emit_dir: Option<&PathBuf>) -> CliResult {
    let l = load(src)?;
    let c = compile_rule(&l.program, &l.rule, compression.parse()?)?;
    let plan = KernelPlan::build(c)?;
    let c = &plan.compiled;
    let mut out = io::stdout().lock();
    writeln!(out, "rule {} ({} summands, compression={})", c.rule, c.summands.len(), c.compression)?;
    for b in &c.registry.buffers {
        let f = &b.function;
        let dims = &f.accessed.dims;
        let layout = match f.layout {
            Layout::Compressed => "compressed",
            Layout::Dense => "dense",
        };
        writeln!(out, "buffer {} #{} ({layout})", b.tensor, b.id)?;
        writeln!(out, "  rank({}) = {}", dims.join(", "), f.rank.display_nested(dims))?;
        writeln!(out, "  size = {}", f.size.display_nested(&[]))?;
    }
    for (t, why) in &c.registry.demoted {
        writeln!(out, "demoted {t}: {why}")?;
    }
    for (si, cs) in c.summands.iter().enumerate() {
        let s = &cs.summand;
        writeln!(out, "summand {si}: {}({})", s.output.tensor, s.output.indices.join(", "))?;
        match plan.summands.iter().find(|p| p.index == si) {
            Some(sp) => {
                for line in sp.nest.to_string().lines() {
                    writeln!(out, "  {line}")?;
                }
            }
            None => writeln!(out, "  (empty)")?,
        }
    }
    if let Some(dir) = emit_dir {
        fs::create_dir_all(dir)?;
        for (name, text) in emit_c(&plan) {
            fs::write(dir.join(&name), text)?;
            writeln!(out, "wrote {}", dir.join(&name).display())?;
        }
    }
    Ok(())
}

fn run_typed<T: Scalar>(
    l: &Loaded,
    b: &HashMap<Var, i64>,
    compression: Compression,
    exec: &ExecArgs,
    files: &[String],
    output: Option<&PathBuf>,
    corrupt: bool,
) -> CliResult {
    let plan = KernelPlan::build(compile_rule(&l.program, &l.rule, compression)?)?;
    let mut inputs = random_inputs::<T>(&l.program, &l.rule, b, exec.seed)?;
    for item in files {
        let (name, path) = item
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("input `{item}` is not NAME=PATH")))?;
        let t = DenseTensor::<T>::read_from(BufReader::new(fs::File::open(path)?))?;
        inputs.insert(name.to_string(), t);
    }
    let opts = ExecOptions {
        workers: exec.workers,
        corrupt_index: corrupt,
        hoist_check: false,
    };
    let mut bufs = pack_all(&plan.compiled, &inputs, b)?;
    let start = Instant::now();
    let stats = execute(&plan, b, &mut bufs, opts)?;
    let elapsed = start.elapsed();
    let result = unpack_output(&l.program, &plan.compiled, &bufs, b)?;
    let reference = reference_execute(&l.program, &l.rule, b, &inputs)?;
    let pass = result.first_difference(&reference).is_none();
    let maxrel = max_relative_error(&result, &reference);
    println!(
        "kernel={} {} compression={} dtype={} workers={} points={} runtime_ns={}",
        l.name,
        binding_text(b),
        compression,
        T::NAME,
        exec.workers,
        stats.points,
        elapsed.as_nanos()
    );
    if let Some(path) = output {
        result.write_to(io::BufWriter::new(fs::File::create(path)?))?;
    }
    println!("VERIFY: {} maxrel={maxrel:.3e}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

struct Row {
    kernel: String,
    binding: String,
    compression: Compression,
    workers: usize,
    runtime_ns: u128,
    dense: i128,
    compressed: i128,
    rate: String,
    verify: &'static str,
}

fn bench_one<T: Scalar>(
    name: &str,
    n: i64,
    compression: Compression,
    workers: usize,
    seed: u64,
    verify_limit: u128,
) -> Result<Row, Failure> {
    let p = kernels::program(name)?;
    let b = kernels::uniform_binding(&p, n);
    let plan = KernelPlan::build(compile_rule(&p, "A", compression)?)?;
    let fp = footprint_report(&p, &plan.compiled, &b)?;
    let inputs = random_inputs::<T>(&p, "A", &b, seed)?;
    let packed = pack_all(&plan.compiled, &inputs, &b)?;
    let opts = ExecOptions {
        workers,
        ..Default::default()
    };
    let mut times = Vec::new();
    let mut last = packed.clone();
    for rep in 0..4 {
        let mut bufs = packed.clone();
        let start = Instant::now();
        execute(&plan, &b, &mut bufs, opts)?;
        let t = start.elapsed().as_nanos();
        if rep > 0 {
            times.push(t);
        }
        last = bufs;
    }
    times.sort_unstable();
    // dense reference cost: product of iterator extents per summand
    let dense_points: u128 = p.rules[0]
        .summands
        .iter()
        .map(|s| s.iterators.len() as u32)
        .map(|k| (n.max(1) as u128).saturating_pow(k))
        .sum();
    let verify = if dense_points <= verify_limit {
        let out = unpack_output(&p, &plan.compiled, &last, &b)?;
        let reference = reference_execute(&p, "A", &b, &inputs)?;
        if out.first_difference(&reference).is_none() {
            "PASS"
        } else {
            "FAIL"
        }
    } else {
        "SKIP"
    };
    Ok(Row {
        kernel: name.to_string(),
        binding: binding_text(&b),
        compression,
        workers,
        runtime_ns: times[times.len() / 2],
        dense: fp.dense_total(),
        compressed: fp.compressed_total(),
        rate: rate_text(&fp.rate()),
        verify,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    names: &[String],
    sizes: &[i64],
    compressions: &[String],
    workers: &[usize],
    dtype: Dtype,
    seed: u64,
    verify_limit: u128,
    csv_path: Option<&PathBuf>,
) -> CliResult {
    let levels = compressions
        .iter()
        .map(|c| c.parse::<Compression>())
        .collect::<Result<Vec<_>, _>>()?;
    let sink: Box<dyn Write> = match csv_path {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let io_err = |e: csv::Error| Failure::Error(Error::Io(e.to_string()));
    w.write_record([
        "kernel",
        "binding",
        "compression",
        "workers",
        "runtime_ns",
        "elements_dense",
        "elements_compressed",
        "rate",
        "verify",
    ])
    .map_err(io_err)?;
    for name in names {
        for &n in sizes {
            for &c in &levels {
                for &k in workers {
                    let row = match dtype {
                        Dtype::F64 => bench_one::<f64>(name, n, c, k, seed, verify_limit)?,
                        Dtype::I64 => bench_one::<i64>(name, n, c, k, seed, verify_limit)?,
                    };
                    w.write_record([
                        row.kernel.clone(),
                        row.binding.clone(),
                        row.compression.to_string(),
                        row.workers.to_string(),
                        row.runtime_ns.to_string(),
                        row.dense.to_string(),
                        row.compressed.to_string(),
                        row.rate.clone(),
                        row.verify.to_string(),
                    ])
                    .map_err(io_err)?;
                    w.flush()?;
                    if row.verify == "FAIL" {
                        eprintln!("verification failed for {} {}", row.kernel, row.binding);
                        return Err(Failure::Verify);
                    }
                }
            }
        }
    }
    Ok(())
}

fn cmd_footprint(src: &Source, compression: &str) -> CliResult {
    let l = load(src)?;
    let b = binding(src, &l.program)?;
    let c = compile_rule(&l.program, &l.rule, compression.parse()?)?;
    let f = footprint_report(&l.program, &c, &b)?;
    println!("kernel={} {} compression={}", l.name, binding_text(&b), c.compression);
    print!("{}", f.render());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Compile {
            src,
            compression,
            emit_c,
        } => cmd_compile(&src, &compression, emit_c.as_ref()),
        Cmd::Run {
            src,
            exec,
            compression,
            inputs,
            output,
            corrupt_index,
        } => {
            let l = load(&src)?;
            let b = binding(&src, &l.program)?;
            let c: Compression = compression.parse()?;
            match exec.dtype {
                Dtype::F64 => run_typed::<f64>(&l, &b, c, &exec, &inputs, output.as_ref(), corrupt_index),
                Dtype::I64 => run_typed::<i64>(&l, &b, c, &exec, &inputs, output.as_ref(), corrupt_index),
            }
        }
        Cmd::Bench {
            kernels,
            sizes,
            compressions,
            workers,
            dtype,
            seed,
            verify_limit,
            csv,
        } => cmd_bench(&kernels, &sizes, &compressions, &workers, dtype, seed, verify_limit, csv.as_ref()),
        Cmd::Footprint { src, compression } => cmd_footprint(&src, &compression),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
