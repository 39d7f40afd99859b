//! Assignment of accesses to packed buffers under the equal-or-disjoint rule.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::affine::{AffineExpr, Constraint, Var};
use crate::error::{Error, Result};
use crate::polyhedra::{enumerate, fm, positivity, Polyhedron};

use super::symbolic::{dense_index, IndexFunction, Layout};
use super::{CompiledSummand, Compression};

const PROBES: [i64; 3] = [2, 3, 5];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Buffer {
    pub id: usize,
    pub tensor: String,
    pub function: IndexFunction,
    pub output: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BufferRegistry {
    pub buffers: Vec<Buffer>,
    /// (summand, access slot) -> buffer id; slot 0 is the output.
    pub assignment: BTreeMap<(usize, usize), usize>,
    /// Tensors stored densely although compression was requested, with the
    /// reason.
    pub demoted: BTreeMap<String, String>,
}

impl BufferRegistry {
    pub fn buffer(&self, summand: usize, slot: usize) -> Option<&Buffer> {
        self.assignment.get(&(summand, slot)).map(|&id| &self.buffers[id])
    }

    pub fn buffers_of<'a>(&'a self, tensor: &'a str) -> impl Iterator<Item = &'a Buffer> + 'a {
        self.buffers.iter().filter(move |b| b.tensor == tensor)
    }

    /// One line per buffer: `tensor=B id=0 size=... rank=... domain=...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.buffers {
            let f = &b.function;
            let dom: Vec<String> = f.accessed.constraints.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                out,
                "tensor={} id={} layout={} size={} rank={} domain={{{}}}",
                b.tensor,
                b.id,
                match f.layout {
                    Layout::Compressed => "compressed",
                    Layout::Dense => "dense",
                },
                f.size,
                f.rank.display_nested(&f.accessed.dims),
                dom.join(", ")
            );
        }
        for (t, why) in &self.demoted {
            let _ = writeln!(out, "demoted tensor={t} reason={why}");
        }
        out
    }
}

/// `f.accessed` in tensor-coordinate names `_c0, _c1, ...`.
fn region(f: &IndexFunction) -> Polyhedron {
    let names: Vec<Var> = f.coords.iter().map(|c| format!("_c{c}")).collect();
    f.accessed.rename_dims(&names)
}

fn joint_params(a: &Polyhedron, b: &Polyhedron) -> Vec<Var> {
    let mut p = a.params.clone();
    p.extend(b.params.iter().cloned());
    p.sort();
    p.dedup();
    p
}

type Points = Vec<Vec<i64>>;

fn probe_sets(a: &Polyhedron, b: &Polyhedron, params: &[Var], v: i64) -> Option<(Points, Points)> {
    let binding: HashMap<Var, i64> = params.iter().map(|p| (p.clone(), v)).collect();
    // compare in a common dim order
    let b2 = Polyhedron {
        dims: a.dims.clone(),
        ..b.clone()
    };
    Some((enumerate(a, &binding).ok()?, enumerate(&b2, &binding).ok()?))
}

/// Layered equality: canonical syntax, mutual implication, probe bindings.
pub fn regions_equal(a: &Polyhedron, b: &Polyhedron) -> bool {
    let mut sa = a.constraints.clone();
    let mut sb = b.constraints.clone();
    sa.sort();
    sb.sort();
    let mut da = a.dims.clone();
    let mut db = b.dims.clone();
    da.sort();
    db.sort();
    if da != db {
        return false;
    }
    if sa == sb {
        return true;
    }
    let params = joint_params(a, b);
    let ctx = positivity(&params);
    let implies_all = |from: &[Constraint], to: &[Constraint]| {
        let mut prem = from.to_vec();
        prem.extend(ctx.iter().cloned());
        to.iter().all(|c| fm::implies(&prem, c))
    };
    if implies_all(&sa, &sb) && implies_all(&sb, &sa) {
        return true;
    }
    PROBES.iter().all(|&v| match probe_sets(a, b, &params, v) {
        Some((x, y)) => x == y,
        None => false,
    })
}

pub fn regions_disjoint(a: &Polyhedron, b: &Polyhedron) -> bool {
    let params = joint_params(a, b);
    let mut sys = a.constraints.clone();
    sys.extend(b.constraints.iter().cloned());
    sys.extend(positivity(&params));
    if fm::infeasible(&sys) {
        return true;
    }
    PROBES.iter().all(|&v| match probe_sets(a, b, &params, v) {
        Some((x, y)) => x.iter().all(|p| !y.contains(p)),
        None => false,
    })
}

struct Site<'a> {
    summand: usize,
    slot: usize,
    indices: &'a [Var],
    function: Option<&'a std::result::Result<IndexFunction, Error>>,
}

pub fn build_registry(
    summands: &[CompiledSummand],
    compression: Compression,
    extents: &BTreeMap<String, Vec<AffineExpr>>,
) -> Result<BufferRegistry> {
    let mut order: Vec<String> = Vec::new();
    let mut sites: BTreeMap<String, Vec<Site>> = BTreeMap::new();
    for (si, cs) in summands.iter().enumerate() {
        if cs.summand.empty {
            continue;
        }
        for (slot, a) in cs.summand.accesses().enumerate() {
            if !order.contains(&a.tensor) {
                order.push(a.tensor.clone());
            }
            sites.entry(a.tensor.clone()).or_default().push(Site {
                summand: si,
                slot,
                indices: &a.indices,
                function: cs.functions.get(slot),
            });
        }
    }
    let mut reg = BufferRegistry::default();
    for tensor in order {
        let sites = &sites[&tensor];
        let is_output = sites[0].slot == 0;
        let compress = match compression {
            Compression::None => false,
            Compression::Input => !is_output,
            Compression::InputOutput => true,
        };
        let mut dense_reason: Option<String> = None;
        let mut local: Vec<(usize, Polyhedron, Vec<usize>)> = Vec::new();
        let mut assigned: Vec<((usize, usize), usize)> = Vec::new();
        if compress {
            'sites: for s in sites {
                let f = match s.function {
                    Some(Ok(f)) => f,
                    Some(Err(e)) => {
                        dense_reason = Some(format!("indexing failed: {e}"));
                        break;
                    }
                    None => {
                        dense_reason = Some("no index function".into());
                        break;
                    }
                };
                let r = region(f);
                for (id, other, perm) in &local {
                    if regions_equal(&r, other) {
                        if *perm != f.coords {
                            dense_reason = Some("layout-permutation".into());
                            break 'sites;
                        }
                        assigned.push(((s.summand, s.slot), *id));
                        continue 'sites;
                    }
                    if !regions_disjoint(&r, other) {
                        dense_reason = Some("partial-overlap".into());
                        break 'sites;
                    }
                }
                let id = reg.buffers.len() + local.len();
                local.push((id, r, f.coords.clone()));
                assigned.push(((s.summand, s.slot), id));
            }
        }
        if compress && dense_reason.is_none() {
            for (id, _, _) in &local {
                let (site_key, _) = assigned.iter().find(|(_, b)| b == id).unwrap();
                let s = sites
                    .iter()
                    .find(|s| (s.summand, s.slot) == *site_key)
                    .unwrap();
                let Some(Ok(f)) = s.function else { unreachable!() };
                reg.buffers.push(Buffer {
                    id: *id,
                    tensor: tensor.clone(),
                    function: f.clone(),
                    output: is_output,
                });
            }
            reg.assignment.extend(assigned);
            continue;
        }
        if let Some(why) = dense_reason {
            reg.demoted.insert(tensor.clone(), why);
        }
        let ext = extents.get(&tensor).ok_or_else(|| Error::UnknownExtent {
            tensor: tensor.clone(),
            dim: 0,
        })?;
        let id = reg.buffers.len();
        let dims: Vec<Var> = sites[0].indices.to_vec();
        reg.buffers.push(Buffer {
            id,
            tensor: tensor.clone(),
            function: dense_index(&tensor, &dims, ext)?,
            output: is_output,
        });
        for s in sites {
            reg.assignment.insert((s.summand, s.slot), id);
        }
    }
    Ok(reg)
}
