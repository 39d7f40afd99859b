//! Dense brute-force evaluation of a rule, used as the verification oracle,
//! and structured random inputs.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affine::{Constraint, Var};
use crate::error::{Error, Result};
use crate::indexing::{slot_table, tensor_extents, IntConstraint};
use crate::stur::{Program, Summand};

use super::pack::{apply_redundancy, eval_extents};
use super::tensor::{DenseTensor, Scalar};

/// Membership test over tensor coordinates with parameters already bound.
struct Mask {
    pieces: Vec<Vec<IntConstraint>>,
}

impl Mask {
    fn new(iters: &[Var], pieces: &[Vec<Constraint>], binding: &HashMap<Var, i64>) -> Result<Self> {
        let slots = slot_table(&[], iters);
        let pieces = pieces
            .iter()
            .map(|p| {
                p.iter()
                    .map(|c| IntConstraint::compile(&c.partial_eval(binding), &slots))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mask { pieces })
    }

    fn contains(&self, point: &[i64]) -> bool {
        self.pieces.iter().any(|p| p.iter().all(|c| c.holds(point)))
    }
}

fn unique_mask(p: &Program, tensor: &str, binding: &HashMap<Var, i64>) -> Result<Option<Mask>> {
    let Some(u) = p.unique_sets.get(tensor) else {
        return Ok(None);
    };
    Ok(Some(Mask::new(&u.iters, &u.pieces, binding)?))
}

/// Positions the output holds: unique set plus redundant region.
fn output_mask(p: &Program, tensor: &str, binding: &HashMap<Var, i64>) -> Result<Option<Mask>> {
    let Some(u) = p.unique_sets.get(tensor) else {
        return Ok(None);
    };
    let mut pieces = u.pieces.clone();
    if let Some(r) = p.redundancy_maps.get(tensor) {
        let rename: HashMap<Var, Var> = r.iters.iter().cloned().zip(u.iters.iter().cloned()).collect();
        pieces.push(r.domain.iter().map(|c| c.rename(&rename)).collect());
    }
    Ok(Some(Mask::new(&u.iters, &pieces, binding)?))
}

pub fn dense_shape(p: &Program, rule: &str, tensor: &str, binding: &HashMap<Var, i64>) -> Result<Vec<usize>> {
    eval_extents(&tensor_extents(p, rule, tensor)?, binding)
}

/// Box extent of each iterator: smallest extent among the tensor dims it
/// indexes.
fn iterator_box(
    s: &Summand,
    shapes: &BTreeMap<String, Vec<usize>>,
) -> Result<Vec<usize>> {
    s.iterators
        .iter()
        .map(|x| {
            s.accesses()
                .flat_map(|a| {
                    a.indices
                        .iter()
                        .enumerate()
                        .filter(|(_, y)| *y == x)
                        .map(|(k, _)| shapes[&a.tensor][k])
                })
                .min()
                .ok_or_else(|| Error::UnboundedIterator(x.clone()))
        })
        .collect()
}

/// Dense evaluation of `rule`: every summand over the full box of its
/// iterators. Inputs count only on their unique sets; the output only on
/// the positions it stores.
pub fn reference_execute<T: Scalar>(
    p: &Program,
    rule: &str,
    binding: &HashMap<Var, i64>,
    inputs: &BTreeMap<String, DenseTensor<T>>,
) -> Result<DenseTensor<T>> {
    let r = p.rule(rule).ok_or_else(|| Error::UnknownKernel(rule.to_string()))?;
    let out_name = &r.summands[0].output.tensor;
    let mut shapes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut masks: BTreeMap<String, Option<Mask>> = BTreeMap::new();
    for s in &r.summands {
        for a in s.accesses() {
            if shapes.contains_key(&a.tensor) {
                continue;
            }
            shapes.insert(a.tensor.clone(), dense_shape(p, rule, &a.tensor, binding)?);
            let m = if a.tensor == *out_name {
                output_mask(p, &a.tensor, binding)?
            } else {
                unique_mask(p, &a.tensor, binding)?
            };
            masks.insert(a.tensor.clone(), m);
        }
    }
    let mut out: DenseTensor<T> = DenseTensor::zeros(shapes[out_name].clone());
    for s in &r.summands {
        let ext = iterator_box(s, &shapes)?;
        if ext.contains(&0) {
            continue;
        }
        let slots = slot_table(&[], &s.iterators);
        let cons = s
            .constraints
            .iter()
            .map(|c| IntConstraint::compile(&c.partial_eval(binding), &slots))
            .collect::<Result<Vec<_>>>()?;
        let pos = |a: &crate::stur::Access| -> Vec<usize> {
            a.indices.iter().map(|x| slots[x]).collect()
        };
        let out_pos = pos(&s.output);
        let in_pos: Vec<Vec<usize>> = s.inputs.iter().map(pos).collect();
        let mut point = vec![0i64; ext.len()];
        let mut coord = Vec::new();
        'odometer: loop {
            if cons.iter().all(|c| c.holds(&point)) {
                let mut prod = T::one();
                let mut live = true;
                for (a, ps) in s.inputs.iter().zip(&in_pos) {
                    coord.clear();
                    coord.extend(ps.iter().map(|&k| point[k]));
                    if let Some(m) = &masks[&a.tensor] {
                        if !m.contains(&coord) {
                            live = false;
                            break;
                        }
                    }
                    let t = inputs
                        .get(&a.tensor)
                        .ok_or_else(|| Error::Invalid(format!("no data for input `{}`", a.tensor)))?;
                    prod = prod.mul(t.get(&coord).unwrap_or_default());
                }
                coord.clear();
                coord.extend(out_pos.iter().map(|&k| point[k]));
                let keep = masks[out_name].as_ref().is_none_or(|m| m.contains(&coord));
                if live && keep {
                    if let Some(o) = out.offset(&coord) {
                        out.data[o] = out.data[o].add(prod);
                    }
                }
            }
            for k in (0..ext.len()).rev() {
                point[k] += 1;
                if (point[k] as usize) < ext[k] {
                    continue 'odometer;
                }
                point[k] = 0;
            }
            break;
        }
    }
    Ok(out)
}

/// Random values on the unique set (everywhere when there is none), zero
/// elsewhere, redundant positions copied from their images.
pub fn structured_input<T: Scalar>(
    p: &Program,
    rule: &str,
    tensor: &str,
    binding: &HashMap<Var, i64>,
    seed: u64,
) -> Result<DenseTensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DenseTensor::zeros(dense_shape(p, rule, tensor, binding)?);
    let mask = unique_mask(p, tensor, binding)?;
    let pts: Vec<Vec<i64>> = t.points().collect();
    for (o, pt) in pts.iter().enumerate() {
        if mask.as_ref().is_none_or(|m| m.contains(pt)) {
            t.data[o] = T::random(&mut rng);
        }
    }
    if let (Some(r), Some(u)) = (p.redundancy_maps.get(tensor), p.unique_sets.get(tensor)) {
        apply_redundancy(r, u, &mut t, binding)?;
    }
    Ok(t)
}

/// Structured inputs for every tensor the rule reads; seeds derive from
/// `seed` and the tensor's position.
pub fn random_inputs<T: Scalar>(
    p: &Program,
    rule: &str,
    binding: &HashMap<Var, i64>,
    seed: u64,
) -> Result<BTreeMap<String, DenseTensor<T>>> {
    let r = p.rule(rule).ok_or_else(|| Error::UnknownKernel(rule.to_string()))?;
    let mut out = BTreeMap::new();
    for s in &r.summands {
        for a in &s.inputs {
            if !out.contains_key(&a.tensor) {
                let k = out.len() as u64;
                let t = structured_input(p, rule, &a.tensor, binding, seed.wrapping_add(k.wrapping_mul(0x9e37_79b9)))?;
                out.insert(a.tensor.clone(), t);
            }
        }
    }
    Ok(out)
}
