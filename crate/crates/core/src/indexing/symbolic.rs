use std::collections::HashMap;

use crate::affine::{AffineExpr, Constraint, Var};
use crate::counting::{count_points, fuse_piecewise, Piece, PiecewiseQuasiPolynomial};
use crate::error::{Error, Result};
use crate::poly::QuasiPolynomial;
use crate::polyhedra::{image, positivity, preceding_slices, AccessMap, Polyhedron};
use crate::stur::Access;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Compressed,
    Dense,
}

/// Maps each point of `accessed` to its slot in a packed buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexFunction {
    pub tensor: String,
    pub accessed: Polyhedron,
    /// Tensor coordinate held by each dim of `accessed`.
    pub coords: Vec<usize>,
    pub rank: PiecewiseQuasiPolynomial,
    pub size: PiecewiseQuasiPolynomial,
    pub layout: Layout,
}

impl IndexFunction {
    pub fn rank_at(&self, point: &[i64], binding: &HashMap<Var, i64>) -> Result<i128> {
        let mut vals = binding.clone();
        for (d, x) in self.accessed.dims.iter().zip(point) {
            vals.insert(d.clone(), *x);
        }
        self.rank.evaluate(&vals)
    }

    pub fn size_at(&self, binding: &HashMap<Var, i64>) -> Result<i128> {
        self.size.evaluate(binding)
    }

    /// Same function with dims renamed positionally.
    pub fn rename_dims(&self, names: &[Var]) -> IndexFunction {
        let map: HashMap<Var, Var> = self
            .accessed
            .dims
            .iter()
            .cloned()
            .zip(names.iter().cloned())
            .collect();
        let rename_pqp = |q: &PiecewiseQuasiPolynomial| PiecewiseQuasiPolynomial {
            vars: q
                .vars
                .iter()
                .map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone()))
                .collect(),
            context: q.context.iter().map(|c| c.rename(&map)).collect(),
            pieces: q
                .pieces
                .iter()
                .map(|p| Piece {
                    domain: p
                        .domain
                        .iter()
                        .map(|c| c.iter().map(|x| x.rename(&map)).collect())
                        .collect(),
                    poly: p.poly.rename(&map),
                })
                .collect(),
        };
        IndexFunction {
            tensor: self.tensor.clone(),
            accessed: self.accessed.rename_dims(names),
            coords: self.coords.clone(),
            rank: rename_pqp(&self.rank),
            size: self.size.clone(),
            layout: self.layout,
        }
    }

    /// The function as seen through `access`: dim `m` becomes the iterator
    /// at tensor coordinate `coords[m]`.
    pub fn for_access(&self, access: &Access) -> IndexFunction {
        let names: Vec<Var> = self
            .coords
            .iter()
            .map(|&c| access.indices[c].clone())
            .collect();
        self.rename_dims(&names)
    }
}

/// Compressed index function of the image of `space` under `map`: the rank
/// of a point is the number of accessed points lexicographically before it.
pub fn symbolic_indexing(space: &Polyhedron, map: &AccessMap, tensor: &str) -> Result<IndexFunction> {
    let accessed = image(space, map)?;
    let mut rank: Option<PiecewiseQuasiPolynomial> = None;
    for slice in preceding_slices(&accessed) {
        let c = count_points(&slice, &slice.dims)?;
        rank = Some(match rank {
            None => c,
            Some(r) => r.add(&c),
        });
    }
    let rank = match rank {
        Some(r) => fuse_piecewise(&r),
        None => {
            let mut context = accessed.context.clone();
            context.extend(accessed.constraints.iter().cloned());
            PiecewiseQuasiPolynomial::zero(accessed.params.clone(), context)
        }
    };
    let size = fuse_piecewise(&count_points(&accessed, &accessed.dims)?);
    Ok(IndexFunction {
        tensor: tensor.to_string(),
        coords: (0..accessed.dims.len()).collect(),
        accessed,
        rank,
        size,
        layout: Layout::Compressed,
    })
}

/// Index function of one access of a summand's iteration space.
pub fn index_access(space: &Polyhedron, access: &Access) -> Result<IndexFunction> {
    let map = AccessMap::from_indices(&space.dims, &access.indices)?;
    let mut f = symbolic_indexing(space, &map, &access.tensor)?;
    f.coords = map
        .selected
        .iter()
        .map(|d| access.indices.iter().position(|x| x == d).unwrap())
        .collect();
    Ok(f)
}

/// Row-major layout of the full box `0 <= x_k < extents[k]`.
pub fn dense_index(tensor: &str, dims: &[Var], extents: &[AffineExpr]) -> Result<IndexFunction> {
    if dims.len() != extents.len() {
        return Err(Error::ArityMismatch {
            tensor: tensor.to_string(),
            access: dims.len(),
            structure: extents.len(),
        });
    }
    let mut params: Vec<Var> = extents.iter().flat_map(|e| e.vars().cloned()).collect();
    params.sort();
    params.dedup();
    let mut cons = Vec::new();
    for (x, e) in dims.iter().zip(extents) {
        cons.push(Constraint::le(AffineExpr::zero(), AffineExpr::var(x)));
        cons.push(Constraint::lt(AffineExpr::var(x), e.clone()));
    }
    let accessed = Polyhedron::new(dims.to_vec(), params.clone(), cons.clone());
    let mut rank = QuasiPolynomial::zero();
    let mut size = QuasiPolynomial::int(1);
    for (x, e) in dims.iter().zip(extents).rev() {
        rank = &rank + &(&QuasiPolynomial::var(x) * &size);
        size = &size * &QuasiPolynomial::from_affine(e);
    }
    let mut rank_ctx = positivity(&params);
    rank_ctx.extend(cons);
    let mut rank_vars = params.clone();
    rank_vars.extend(dims.iter().cloned());
    let total = |vars: Vec<Var>, ctx: Vec<Constraint>, poly: QuasiPolynomial| PiecewiseQuasiPolynomial {
        vars,
        context: ctx,
        pieces: if poly.is_zero() {
            vec![]
        } else {
            vec![Piece {
                domain: vec![vec![]],
                poly,
            }]
        },
    };
    Ok(IndexFunction {
        tensor: tensor.to_string(),
        coords: (0..dims.len()).collect(),
        rank: total(rank_vars, rank_ctx, rank),
        size: total(params.clone(), positivity(&params), size),
        accessed,
        layout: Layout::Dense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Rat;
    use crate::polyhedra::enumerate;
    use crate::stur::parse_constraints;

    fn space(dims: &[&str], params: &[&str], text: &str) -> Polyhedron {
        Polyhedron::new(
            dims.iter().map(|s| s.to_string()).collect(),
            params.iter().map(|s| s.to_string()).collect(),
            parse_constraints(text).unwrap(),
        )
    }

    fn bind(pairs: &[(&str, i64)]) -> HashMap<Var, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ttm_upper_half_cube_rank() {
        let d = space(
            &["i", "j", "k", "l"],
            &["M", "N", "P", "Q"],
            "(0 <= i < M) * (i <= j < N) * (0 <= k < P) * (0 <= l < Q)",
        );
        let f = index_access(&d, &Access::new("B", &["i", "j", "l"])).unwrap();
        let p = f.rank.as_total().expect("fused to one piece");
        let q = QuasiPolynomial::var("Q");
        let i = QuasiPolynomial::var("i");
        let n_half = &QuasiPolynomial::var("N") - &QuasiPolynomial::constant(Rat::new(1, 2));
        let expected = &(&(&(&n_half * &q) * &i) - &(&q * &i.pow(2)).scale(Rat::new(1, 2)))
            + &(&(&q * &QuasiPolynomial::var("j")) + &QuasiPolynomial::var("l"));
        assert_eq!(p, &expected);
    }

    #[test]
    fn dense_vector_is_identity() {
        let d = space(&["j"], &["n"], "(0 <= j < n)");
        let f = index_access(&d, &Access::new("C", &["j"])).unwrap();
        assert_eq!(f.rank.as_total(), Some(&QuasiPolynomial::var("j")));
        assert_eq!(f.size.as_total(), Some(&QuasiPolynomial::var("n")));
    }

    #[test]
    fn diagonal_rank_matches_enumeration() {
        let d = space(&["i", "j"], &["n_i"], "(0 <= i < n_i) * (i = j)");
        let f = index_access(&d, &Access::new("B", &["i", "j"])).unwrap();
        for n in 1..=8 {
            let b = bind(&[("n_i", n)]);
            let pts = enumerate(&f.accessed, &b).unwrap();
            assert_eq!(f.size_at(&b).unwrap(), pts.len() as i128);
            for (r, p) in pts.iter().enumerate() {
                assert_eq!(f.rank_at(p, &b).unwrap(), r as i128);
            }
        }
    }

    #[test]
    fn transposed_access_coords() {
        let d = space(&["i", "j", "k"], &["n"], "(0 <= i < n) * (0 <= j < n) * (0 <= k < n)");
        let f = index_access(&d, &Access::new("C", &["k", "j"])).unwrap();
        assert_eq!(f.accessed.dims, vec!["j", "k"]);
        assert_eq!(f.coords, vec![1, 0]);
    }

    #[test]
    fn dense_row_major() {
        let f = dense_index(
            "A",
            &["x".into(), "y".into()],
            &[AffineExpr::var("n"), AffineExpr::var("m")],
        )
        .unwrap();
        let b = bind(&[("n", 3), ("m", 4)]);
        assert_eq!(f.rank_at(&[2, 1], &b).unwrap(), 9);
        assert_eq!(f.size_at(&b).unwrap(), 12);
    }
}
