//! Interpreter for kernel plans over packed buffers.

use std::collections::HashMap;

use crate::affine::Var;
use crate::error::{Error, Result};
use crate::indexing::{exact_div, IndexPlan};
use crate::runtime::Scalar;

use super::plan::{KernelPlan, SummandPlan};

#[derive(Clone, Copy, Debug, Default)]
pub struct ExecOptions {
    pub workers: usize,
    /// Shift every output index by one (testing hook).
    pub corrupt_index: bool,
    /// Compare each hoisted index with direct evaluation.
    pub hoist_check: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub points: u64,
    pub hoist_checks: u64,
}

impl std::ops::AddAssign for ExecStats {
    fn add_assign(&mut self, o: Self) {
        self.points += o.points;
        self.hoist_checks += o.hoist_checks;
    }
}

struct Runner<'p, 'b, T> {
    s: &'p SummandPlan,
    /// Index plans, output first.
    plans: Vec<&'p IndexPlan>,
    inputs: Vec<&'b [T]>,
    out: &'b mut [T],
    /// `acc[a][k]`: partial index of access `a` before loop `k` adds its part.
    acc: Vec<Vec<i128>>,
    /// `coef[a][k][e]`: hoisted coefficient of `dim_k^e`.
    coef: Vec<Vec<Vec<i128>>>,
    opts: ExecOptions,
    stats: ExecStats,
}

impl<'p, 'b, T: Scalar> Runner<'p, 'b, T> {
    fn new(s: &'p SummandPlan, inputs: Vec<&'b [T]>, out: &'b mut [T], opts: ExecOptions) -> Self {
        let plans: Vec<&IndexPlan> = std::iter::once(&s.output.index)
            .chain(s.inputs.iter().map(|a| &a.index))
            .collect();
        let n = s.nest.levels.len();
        let acc = vec![vec![0i128; n + 1]; plans.len()];
        let coef = plans
            .iter()
            .map(|p| match p {
                IndexPlan::Hoisted { levels, .. } => levels.iter().map(|l| vec![0i128; l.len()]).collect(),
                IndexPlan::Guarded { .. } => Vec::new(),
            })
            .collect();
        Runner {
            s,
            plans,
            inputs,
            out,
            acc,
            coef,
            opts,
            stats: ExecStats::default(),
        }
    }

    fn run(&mut self, vals: &mut [i64], outer: Option<(i64, i64)>) -> Result<()> {
        if !self.s.nest.pre_guards_hold(vals) {
            return Ok(());
        }
        for (a, p) in self.plans.iter().enumerate() {
            if let IndexPlan::Hoisted { base, .. } = p {
                self.acc[a][0] = base.eval(vals);
            }
        }
        self.level(0, vals, outer)
    }

    fn level(&mut self, k: usize, vals: &mut [i64], clamp: Option<(i64, i64)>) -> Result<()> {
        let nest = &self.s.nest;
        if k == nest.levels.len() {
            return self.body(vals);
        }
        let level = &nest.levels[k];
        let Some((mut lo, mut hi, step)) = level.range(vals) else {
            return Ok(());
        };
        if let Some((a, b)) = clamp {
            if a > lo {
                lo += (a - lo + step - 1) / step * step;
            }
            hi = hi.min(b);
        }
        for (a, p) in self.plans.iter().enumerate() {
            if let IndexPlan::Hoisted { levels, .. } = p {
                for (e, c) in levels[k].iter().enumerate() {
                    self.coef[a][k][e] = c.eval(vals);
                }
            }
        }
        let mut x = lo;
        while x <= hi {
            vals[level.slot] = x;
            if level.guards_hold(vals) {
                for a in 0..self.plans.len() {
                    if self.plans[a].is_hoisted() {
                        let mut part = self.acc[a][k];
                        let mut pow = 1i128;
                        for c in &self.coef[a][k] {
                            part += c * pow;
                            pow *= x as i128;
                        }
                        self.acc[a][k + 1] = part;
                    }
                }
                self.level(k + 1, vals, None)?;
            }
            x += step;
        }
        Ok(())
    }

    #[inline]
    fn index(&mut self, a: usize, vals: &[i64], len: usize) -> Result<usize> {
        let n = self.s.nest.levels.len();
        let r = match self.plans[a] {
            IndexPlan::Hoisted { denom, .. } => {
                let r = exact_div(self.acc[a][n], *denom)?;
                if self.opts.hoist_check {
                    let direct = self.plans[a].eval_direct(vals)?;
                    if direct != r {
                        return Err(Error::Invalid(format!(
                            "hoisted index {r} differs from direct evaluation {direct}"
                        )));
                    }
                    self.stats.hoist_checks += 1;
                }
                r
            }
            p @ IndexPlan::Guarded { .. } => p.eval_direct(vals)?,
        };
        if r < 0 || r >= len as i128 {
            return Err(Error::IndexOutOfRange { index: r, len });
        }
        Ok(r as usize)
    }

    fn body(&mut self, vals: &[i64]) -> Result<()> {
        self.stats.points += 1;
        let mut prod = T::one();
        for a in 1..self.plans.len() {
            let buf = self.inputs[a - 1];
            let i = self.index(a, vals, buf.len())?;
            prod = prod.mul(buf[i]);
        }
        let len = self.out.len();
        let mut o = self.index(0, vals, len)?;
        if self.opts.corrupt_index {
            o = (o + 1) % len;
        }
        self.out[o] = self.out[o].add(prod);
        Ok(())
    }
}

fn run_summand<T: Scalar>(
    s: &SummandPlan,
    buffers: &[Vec<T>],
    out: &mut [T],
    base: &[i64],
    opts: ExecOptions,
) -> Result<ExecStats> {
    let inputs = || -> Vec<&[T]> { s.inputs.iter().map(|a| buffers[a.buffer].as_slice()).collect() };
    let outer = s.nest.levels.first().and_then(|l| l.range(base));
    let workers = opts.workers.max(1);
    let split = match outer {
        Some((lo, hi, _)) if s.parallelizable && workers > 1 && hi - lo + 1 >= workers as i64 => Some((lo, hi)),
        _ => None,
    };
    let Some((lo, hi)) = split else {
        let mut r = Runner::new(s, inputs(), out, opts);
        r.run(&mut base.to_vec(), None)?;
        return Ok(r.stats);
    };
    // Each worker accumulates into its own zeroed copy of the output. The
    // outer iterator indexes the output, so the copies touch disjoint
    // positions and merging them adds zeros everywhere else: the result is
    // bitwise the sequential one.
    let chunk = (hi - lo + 1 + workers as i64 - 1) / workers as i64;
    let len = out.len();
    let results: Vec<Result<(Vec<T>, ExecStats)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as i64)
            .map(|w| {
                let (a, b) = (lo + w * chunk, (lo + (w + 1) * chunk - 1).min(hi));
                let ins = inputs();
                scope.spawn(move || -> Result<(Vec<T>, ExecStats)> {
                    let mut local = vec![T::default(); len];
                    if a > b {
                        return Ok((local, ExecStats::default()));
                    }
                    let mut r = Runner::new(s, ins, &mut local, opts);
                    r.run(&mut base.to_vec(), Some((a, b)))?;
                    let stats = r.stats;
                    Ok((local, stats))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut stats = ExecStats::default();
    for r in results {
        let (local, st) = r?;
        for (o, v) in out.iter_mut().zip(local) {
            *o = o.add(v);
        }
        stats += st;
    }
    Ok(stats)
}

/// Runs every summand, accumulating into the (pre-zeroed) output buffers.
pub fn execute<T: Scalar>(
    plan: &KernelPlan,
    binding: &HashMap<Var, i64>,
    buffers: &mut [Vec<T>],
    opts: ExecOptions,
) -> Result<ExecStats> {
    let mut stats = ExecStats::default();
    for s in &plan.summands {
        let base = s.nest.bind(binding)?;
        let mut out = std::mem::take(&mut buffers[s.output.buffer]);
        let r = run_summand(s, buffers, &mut out, &base, opts);
        buffers[s.output.buffer] = out;
        stats += r?;
    }
    Ok(stats)
}
