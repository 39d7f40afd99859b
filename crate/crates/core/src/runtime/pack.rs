//! Moving values between dense tensors and packed buffers.

use std::collections::{BTreeMap, HashMap};

use crate::affine::{all_hold, AffineExpr, Var};
use crate::codegen::LoopNest;
use crate::error::{Error, Result};
use crate::indexing::{CompiledRule, IndexFunction, IndexPlan};
use crate::stur::{Program, RedundancyMap, UniqueSet};

use super::tensor::{DenseTensor, Scalar};

pub fn eval_extents(extents: &[AffineExpr], binding: &HashMap<Var, i64>) -> Result<Vec<usize>> {
    extents
        .iter()
        .map(|e| {
            for v in e.vars() {
                if !binding.contains_key(v) {
                    return Err(Error::MissingBinding(v.clone()));
                }
            }
            let x = e.eval(binding).expect("all bound");
            if !x.is_integer() {
                return Err(Error::NonInteger(x.to_string()));
            }
            Ok(x.to_integer().max(0) as usize)
        })
        .collect()
}

/// Visits `(tensor point, rank)` for every point of `f`'s domain.
fn for_each_slot<F>(f: &IndexFunction, binding: &HashMap<Var, i64>, mut visit: F) -> Result<usize>
where
    F: FnMut(&[i64], usize) -> Result<()>,
{
    let size = f.size_at(binding)?.max(0) as usize;
    let acc = &f.accessed;
    let nest = LoopNest::build(&acc.dims, &acc.params, &acc.constraints)?;
    let slots = nest.slots();
    let plan = IndexPlan::compile(&f.rank, &acc.dims, &slots)?;
    let mut vals = nest.bind(binding)?;
    let np = acc.params.len();
    let mut point = vec![0i64; f.coords.len()];
    nest.scan(&mut vals, &mut |v| {
        for (m, &c) in f.coords.iter().enumerate() {
            point[c] = v[np + m];
        }
        let r = plan.eval_direct(v)?;
        if r < 0 || r >= size as i128 {
            return Err(Error::IndexOutOfRange { index: r, len: size });
        }
        visit(&point, r as usize)
    })?;
    Ok(size)
}

/// Packs the domain of `f` out of `dense`. Every slot must be written
/// exactly once.
pub fn pack<T: Scalar>(f: &IndexFunction, dense: &DenseTensor<T>, binding: &HashMap<Var, i64>) -> Result<Vec<T>> {
    let mut buf: Vec<T> = Vec::new();
    let mut writes: Vec<u32> = Vec::new();
    let mut pending: Vec<(usize, T)> = Vec::new();
    let size = for_each_slot(f, binding, |p, r| {
        let v = dense.get(p).ok_or(Error::IndexOutOfRange {
            index: -1,
            len: dense.len(),
        })?;
        pending.push((r, v));
        Ok(())
    })?;
    buf.resize(size, T::default());
    writes.resize(size, 0);
    for (r, v) in pending {
        if writes[r] > 0 {
            return Err(Error::DoubleWrite(r));
        }
        writes[r] += 1;
        buf[r] = v;
    }
    if let Some(r) = writes.iter().position(|&w| w == 0) {
        return Err(Error::Invalid(format!("slot {r} of `{}` never written", f.tensor)));
    }
    Ok(buf)
}

/// Scatters `buf` back into `dense` over the domain of `f`.
pub fn unpack<T: Scalar>(
    f: &IndexFunction,
    buf: &[T],
    dense: &mut DenseTensor<T>,
    binding: &HashMap<Var, i64>,
) -> Result<()> {
    let size = for_each_slot(f, binding, |p, r| {
        let v = *buf.get(r).ok_or(Error::IndexOutOfRange {
            index: r as i128,
            len: buf.len(),
        })?;
        dense.set(p, v)
    })?;
    if size != buf.len() {
        return Err(Error::Invalid(format!(
            "buffer of `{}` has {} slots, expected {size}",
            f.tensor,
            buf.len()
        )));
    }
    Ok(())
}

fn in_unique_set(u: &UniqueSet, point: &[i64], binding: &HashMap<Var, i64>) -> bool {
    let mut vals = binding.clone();
    for (x, v) in u.iters.iter().zip(point) {
        vals.insert(x.clone(), *v);
    }
    u.pieces.iter().any(|p| all_hold(p, &vals).unwrap_or(false))
}

/// Copies every redundant position from its image in the unique set.
pub fn apply_redundancy<T: Scalar>(
    r: &RedundancyMap,
    unique: &UniqueSet,
    dense: &mut DenseTensor<T>,
    binding: &HashMap<Var, i64>,
) -> Result<()> {
    let mut params: Vec<Var> = r
        .domain
        .iter()
        .flat_map(|c| c.vars())
        .filter(|v| !r.iters.contains(v))
        .collect();
    params.sort();
    params.dedup();
    let nest = LoopNest::build(&r.iters, &params, &r.domain)?;
    let mut env = binding.clone();
    for point in nest.points(binding)? {
        for (x, v) in r.iters.iter().zip(&point) {
            env.insert(x.clone(), *v);
        }
        let image: Vec<i64> = r
            .image
            .iter()
            .map(|e| e.eval(&env).map(|q| q.to_integer() as i64).ok_or_else(|| Error::MissingBinding(e.to_string())))
            .collect::<Result<_>>()?;
        if !in_unique_set(unique, &image, binding) {
            return Err(Error::RedundancyImage(image));
        }
        let v = dense.get(&image).ok_or_else(|| Error::RedundancyImage(image.clone()))?;
        dense.set(&point, v)?;
    }
    Ok(())
}

/// Buffers for every registry entry: inputs packed, outputs zeroed.
pub fn pack_all<T: Scalar>(
    c: &CompiledRule,
    inputs: &BTreeMap<String, DenseTensor<T>>,
    binding: &HashMap<Var, i64>,
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(c.registry.buffers.len());
    for b in &c.registry.buffers {
        if b.output {
            let n = b.function.size_at(binding)?.max(0) as usize;
            out.push(vec![T::default(); n]);
        } else {
            let t = inputs
                .get(&b.tensor)
                .ok_or_else(|| Error::Invalid(format!("no data for input `{}`", b.tensor)))?;
            out.push(pack(&b.function, t, binding)?);
        }
    }
    Ok(out)
}

/// Dense output assembled from the output buffers, with redundant
/// positions filled in when the program declares a redundancy map.
pub fn unpack_output<T: Scalar>(
    p: &Program,
    c: &CompiledRule,
    buffers: &[Vec<T>],
    binding: &HashMap<Var, i64>,
) -> Result<DenseTensor<T>> {
    let name = c.output();
    let ext = c.extents.get(name).ok_or_else(|| Error::UnknownExtent {
        tensor: name.to_string(),
        dim: 0,
    })?;
    let mut dense = DenseTensor::zeros(eval_extents(ext, binding)?);
    for b in c.registry.buffers_of(name) {
        unpack(&b.function, &buffers[b.id], &mut dense, binding)?;
    }
    if let (Some(r), Some(u)) = (p.redundancy_maps.get(name), p.unique_sets.get(name)) {
        apply_redundancy(r, u, &mut dense, binding)?;
    }
    Ok(dense)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexing::{dense_index, index_access};
    use crate::polyhedra::Polyhedron;
    use crate::stur::{parse_constraints, parse_program, Access};

    fn bind(n: i64) -> HashMap<Var, i64> {
        [("n".to_string(), n)].into_iter().collect()
    }

    fn triangle() -> IndexFunction {
        let space = Polyhedron::new(
            vec!["i".into(), "j".into()],
            vec!["n".into()],
            parse_constraints("(0 <= i < n) * (0 <= j <= i)").unwrap(),
        );
        index_access(&space, &Access::new("L", &["i", "j"])).unwrap()
    }

    #[test]
    fn triangle_round_trip() {
        let f = triangle();
        let mut d = DenseTensor::<i64>::zeros(vec![5, 5]);
        for (k, v) in d.data.iter_mut().enumerate() {
            *v = k as i64;
        }
        let buf = pack(&f, &d, &bind(5)).unwrap();
        assert_eq!(buf.len(), 15);
        assert_eq!(&buf[..4], &[0, 5, 6, 10]);
        let mut back = DenseTensor::zeros(vec![5, 5]);
        unpack(&f, &buf, &mut back, &bind(5)).unwrap();
        for p in d.points() {
            let want = if p[1] <= p[0] { d.get(&p) } else { Some(0) };
            assert_eq!(back.get(&p), want);
        }
    }

    #[test]
    fn broken_rank_is_caught() {
        let mut f = dense_index("X", &["i".into()], &[AffineExpr::var("n")]).unwrap();
        // every point maps to slot 0
        f.rank.pieces.clear();
        let d = DenseTensor::<i64>::zeros(vec![3]);
        assert_eq!(pack(&f, &d, &bind(3)), Err(Error::DoubleWrite(0)));
    }

    #[test]
    fn symmetric_fill() {
        let p = parse_program(
            "
S_U(i, j) := (0 <= i < n) * (0 <= j <= i)
S_R(i, j, i', j') := (0 <= i < n) * (i < j < n) * (i' = j) * (j' = i)
",
        )
        .unwrap();
        let mut d = DenseTensor::<i64>::zeros(vec![3, 3]);
        d.set(&[2, 0], 4).unwrap();
        apply_redundancy(&p.redundancy_maps["S"], &p.unique_sets["S"], &mut d, &bind(3)).unwrap();
        assert_eq!(d.get(&[0, 2]), Some(4));
    }

    #[test]
    fn image_outside_unique_set() {
        let p = parse_program(
            "
S_U(i, j) := (0 <= i < n) * (0 <= j <= i)
S_R(i, j, i', j') := (0 <= i < n) * (i < j < n) * (i' = i) * (j' = j)
",
        )
        .unwrap();
        let mut d = DenseTensor::<i64>::zeros(vec![3, 3]);
        let e = apply_redundancy(&p.redundancy_maps["S"], &p.unique_sets["S"], &mut d, &bind(3));
        assert!(matches!(e, Err(Error::RedundancyImage(_))));
    }
}
