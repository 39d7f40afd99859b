//! Parametric integer polyhedra: iteration spaces, accessed domains,
//! preceding-access slices, and the brute-force enumeration oracle.

pub mod fm;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::Signed;

use crate::affine::{is_falsum, normalize_all, AffineExpr, Constraint, Var};
use crate::error::{Error, Result};
use crate::stur::Summand;

/// Positivity assumptions `p >= 1` for runtime-bound symbols.
pub fn positivity(params: &[Var]) -> Vec<Constraint> {
    params
        .iter()
        .map(|p| Constraint::Ge(AffineExpr::var(p) - AffineExpr::constant(1)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polyhedron {
    /// Ordered dimensions; the order is the lexicographic order and the
    /// loop nesting order.
    pub dims: Vec<Var>,
    pub params: Vec<Var>,
    pub constraints: Vec<Constraint>,
    /// Facts assumed about the parameters (symbol positivity, and for
    /// preceding slices the membership of the current point).
    pub context: Vec<Constraint>,
    pub empty: bool,
    /// False if a projection may have over-approximated the integer image.
    pub exact: bool,
}

impl Polyhedron {
    pub fn new(dims: Vec<Var>, params: Vec<Var>, constraints: Vec<Constraint>) -> Self {
        let context = positivity(&params);
        Self::with_context(dims, params, constraints, context)
    }

    pub fn with_context(
        dims: Vec<Var>,
        params: Vec<Var>,
        constraints: Vec<Constraint>,
        context: Vec<Constraint>,
    ) -> Self {
        let constraints = normalize_all(&constraints);
        let empty = is_falsum(&constraints);
        Polyhedron {
            dims,
            params,
            constraints,
            context,
            empty,
            exact: true,
        }
    }

    pub fn empty(dims: Vec<Var>, params: Vec<Var>) -> Self {
        let mut p = Self::new(dims, params, vec![Constraint::falsum()]);
        p.empty = true;
        p
    }

    /// Rename dims positionally.
    pub fn rename_dims(&self, names: &[Var]) -> Polyhedron {
        let map: HashMap<Var, Var> = self
            .dims
            .iter()
            .cloned()
            .zip(names.iter().cloned())
            .collect();
        Polyhedron {
            dims: names.to_vec(),
            params: self.params.clone(),
            constraints: self.constraints.iter().map(|c| c.rename(&map)).collect(),
            context: self.context.iter().map(|c| c.rename(&map)).collect(),
            empty: self.empty,
            exact: self.exact,
        }
    }

    pub fn contains(&self, point: &[i64], binding: &HashMap<Var, i64>) -> bool {
        if self.empty {
            return false;
        }
        let mut vals = binding.clone();
        for (d, x) in self.dims.iter().zip(point) {
            vals.insert(d.clone(), *x);
        }
        self.constraints
            .iter()
            .all(|c| c.holds(&vals).unwrap_or(false))
    }
}

impl fmt::Display for Polyhedron {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            return write!(f, "{{ }}");
        }
        let cons: Vec<String> = self.constraints.iter().map(|c| c.to_string()).collect();
        write!(f, "{{ ({}) : {} }}", self.dims.join(", "), cons.join(", "))
    }
}

/// Coordinate selection from a source polyhedron, kept in source dim order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessMap {
    pub selected: Vec<Var>,
}

impl AccessMap {
    /// Build a selection of `indices` (in any order) over `space_dims`; the
    /// result lists them in `space_dims` order.
    pub fn from_indices(space_dims: &[Var], indices: &[Var]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for i in indices {
            if !space_dims.contains(i) {
                return Err(Error::UnknownIdentifier(i.clone()));
            }
            if !seen.insert(i.clone()) {
                return Err(Error::Invalid(format!("repeated index `{i}` in access")));
            }
        }
        Ok(AccessMap {
            selected: space_dims
                .iter()
                .filter(|d| seen.contains(*d))
                .cloned()
                .collect(),
        })
    }

    pub fn identity(space: &Polyhedron) -> Self {
        AccessMap {
            selected: space.dims.clone(),
        }
    }
}

fn symbols_of(cons: &[Constraint], dims: &[Var]) -> Vec<Var> {
    let set: BTreeSet<Var> = cons
        .iter()
        .flat_map(|c| c.vars())
        .filter(|v| !dims.contains(v))
        .collect();
    set.into_iter().collect()
}

/// Iteration space of a simplified summand: dims in rule order, constraints
/// verbatim.
pub fn iteration_space(s: &Summand) -> Result<Polyhedron> {
    let dims = s.iterators.clone();
    let params = symbols_of(&s.constraints, &dims);
    if s.empty {
        return Ok(Polyhedron::empty(dims, params));
    }
    let p = Polyhedron::new(dims.clone(), params, s.constraints.clone());
    if p.empty {
        return Ok(p);
    }
    check_bounded(&p)?;
    Ok(p)
}

/// Every dim must have a lower and an upper bound in terms of params.
pub fn check_bounded(p: &Polyhedron) -> Result<()> {
    for d in &p.dims {
        let mut sys = p.constraints.clone();
        for other in p.dims.iter().filter(|o| *o != d) {
            sys = fm::eliminate_relaxed(&sys, other);
        }
        if is_falsum(&sys) {
            continue;
        }
        let (mut lo, mut up) = (false, false);
        for c in &sys {
            match c {
                Constraint::Eq(e) if e.mentions(d) => {
                    lo = true;
                    up = true;
                }
                Constraint::Ge(e) if e.mentions(d) => {
                    if e.coeff(d).is_positive() {
                        lo = true;
                    } else {
                        up = true;
                    }
                }
                _ => {}
            }
        }
        if !(lo && up) {
            return Err(Error::UnboundedIterator(d.clone()));
        }
    }
    Ok(())
}

/// Accessed domain: the image of `space` under a coordinate selection.
pub fn image(space: &Polyhedron, map: &AccessMap) -> Result<Polyhedron> {
    for s in &map.selected {
        if !space.dims.contains(s) {
            return Err(Error::UnknownIdentifier(s.clone()));
        }
    }
    if space.empty {
        let mut p = Polyhedron::empty(map.selected.clone(), space.params.clone());
        p.context = space.context.clone();
        return Ok(p);
    }
    let mut sys = space.constraints.clone();
    let mut exact = space.exact;
    let mut todo: Vec<Var> = space
        .dims
        .iter()
        .filter(|d| !map.selected.contains(d))
        .cloned()
        .collect();
    while !todo.is_empty() {
        let pos = todo
            .iter()
            .position(|v| sys.iter().any(|c| matches!(c, Constraint::Eq(e) if e.mentions(v))))
            .unwrap_or(todo.len() - 1);
        let v = todo.remove(pos);
        let step = fm::eliminate(&sys, &v)?;
        exact &= step.exact;
        sys = step.constraints;
    }
    let sys = fm::remove_redundant(&sys, &space.context);
    let mut p = Polyhedron::with_context(
        map.selected.clone(),
        space.params.clone(),
        sys,
        space.context.clone(),
    );
    p.exact = exact;
    Ok(p)
}

pub fn primed(v: &str) -> Var {
    format!("{v}'")
}

/// Slices whose disjoint union is the set of accessed points strictly
/// lexicographically before the current point `(d_1, ..., d_m)`.
pub fn preceding_slices(accessed: &Polyhedron) -> Vec<Polyhedron> {
    let primes: Vec<Var> = accessed.dims.iter().map(|d| primed(d)).collect();
    let renamed = accessed.rename_dims(&primes);
    let mut params = accessed.params.clone();
    params.extend(accessed.dims.iter().cloned());
    let mut context = accessed.context.clone();
    context.extend(accessed.constraints.iter().cloned());
    (0..accessed.dims.len())
        .map(|k| {
            let mut cons = renamed.constraints.clone();
            for (p, d) in primes.iter().zip(&accessed.dims).take(k) {
                cons.push(Constraint::eq(AffineExpr::var(p), AffineExpr::var(d)));
            }
            cons.push(Constraint::lt(
                AffineExpr::var(&primes[k]),
                AffineExpr::var(&accessed.dims[k]),
            ));
            Polyhedron::with_context(primes.clone(), params.clone(), cons, context.clone())
        })
        .collect()
}

/// Brute-force scan of all integer points of `cons` over `vars` (all other
/// variables must be bound), in lexicographic order of `vars`. The scan box
/// comes from a numeric projection; membership is checked on every atom.
pub fn scan_points(
    vars: &[Var],
    cons: &[Constraint],
    binding: &HashMap<Var, i64>,
    limit: Option<u128>,
) -> Result<Vec<Vec<i64>>> {
    let numeric: Vec<Constraint> = cons.iter().map(|c| c.partial_eval(binding)).collect();
    for c in &numeric {
        for v in c.vars() {
            if !vars.contains(&v) {
                return Err(Error::MissingBinding(v));
            }
        }
    }
    let numeric = normalize_all(&numeric);
    if is_falsum(&numeric) {
        return Ok(vec![]);
    }
    let mut boxes = Vec::with_capacity(vars.len());
    for d in vars {
        let mut sys = numeric.clone();
        for other in vars.iter().filter(|o| *o != d) {
            sys = fm::eliminate_relaxed(&sys, other);
        }
        if is_falsum(&sys) {
            return Ok(vec![]);
        }
        let (mut lo, mut up): (Option<i64>, Option<i64>) = (None, None);
        for c in &sys {
            match c {
                Constraint::Eq(e) if e.mentions(d) => {
                    let val = -e.constant_term() / e.coeff(d);
                    if !val.is_integer() {
                        return Ok(vec![]);
                    }
                    let x = *val.numer() as i64;
                    lo = Some(lo.map_or(x, |l| l.max(x)));
                    up = Some(up.map_or(x, |u| u.min(x)));
                }
                Constraint::Ge(e) if e.mentions(d) => {
                    let a = e.coeff(d);
                    let b = -e.constant_term() / a;
                    if a.is_positive() {
                        let x = *b.ceil().numer() as i64;
                        lo = Some(lo.map_or(x, |l| l.max(x)));
                    } else {
                        let x = *b.floor().numer() as i64;
                        up = Some(up.map_or(x, |u| u.min(x)));
                    }
                }
                _ => {}
            }
        }
        match (lo, up) {
            (Some(l), Some(u)) => {
                if l > u {
                    return Ok(vec![]);
                }
                boxes.push((l, u));
            }
            _ => return Err(Error::UnboundedIterator(d.clone())),
        }
    }
    if let Some(limit) = limit {
        let volume: u128 = boxes.iter().map(|(l, u)| (u - l + 1) as u128).product();
        if volume > limit {
            return Err(Error::Invalid(format!("scan box of {volume} points exceeds limit")));
        }
    }
    // check each atom at the depth of its innermost variable
    let depth_of = |c: &Constraint| -> usize {
        c.vars()
            .iter()
            .filter_map(|v| vars.iter().position(|x| x == v))
            .max()
            .unwrap_or(0)
    };
    let mut by_depth: Vec<Vec<&Constraint>> = vec![Vec::new(); vars.len().max(1)];
    for c in &numeric {
        by_depth[depth_of(c)].push(c);
    }
    let mut out = Vec::new();
    if vars.is_empty() {
        out.push(vec![]);
        return Ok(out);
    }
    let mut vals: HashMap<Var, i64> = HashMap::new();
    let mut point = vec![0i64; vars.len()];
    fn rec(
        k: usize,
        vars: &[Var],
        boxes: &[(i64, i64)],
        by_depth: &[Vec<&Constraint>],
        vals: &mut HashMap<Var, i64>,
        point: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        let (lo, hi) = boxes[k];
        for x in lo..=hi {
            point[k] = x;
            vals.insert(vars[k].clone(), x);
            if !by_depth[k].iter().all(|c| c.holds(vals).unwrap_or(false)) {
                continue;
            }
            if k + 1 == vars.len() {
                out.push(point.clone());
            } else {
                rec(k + 1, vars, boxes, by_depth, vals, point, out);
            }
        }
    }
    rec(0, vars, &boxes, &by_depth, &mut vals, &mut point, &mut out);
    Ok(out)
}

/// All integer points of `p` under `binding`, lexicographically ordered.
pub fn enumerate(p: &Polyhedron, binding: &HashMap<Var, i64>) -> Result<Vec<Vec<i64>>> {
    for param in &p.params {
        if !binding.contains_key(param) {
            return Err(Error::MissingBinding(param.clone()));
        }
    }
    if p.empty {
        return Ok(vec![]);
    }
    scan_points(&p.dims, &p.constraints, binding, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emptiness {
    Empty,
    NonEmpty,
    Unknown,
}

const WITNESS_RANGE: i64 = 6;

/// Conservative emptiness: `Empty` only when the rational relaxation (with
/// integer tightening) or an equality system is infeasible.
pub fn is_empty(p: &Polyhedron) -> Emptiness {
    if p.empty {
        return Emptiness::Empty;
    }
    let mut sys = p.constraints.clone();
    sys.extend(p.context.iter().cloned());
    emptiness_of(&sys, &p.params)
}

/// Emptiness of a constraint set over all of its variables; `params` get a
/// small sampling range during the witness search.
pub fn emptiness_of(cons: &[Constraint], params: &[Var]) -> Emptiness {
    if is_falsum(&normalize_all(cons)) || fm::infeasible(cons) {
        return Emptiness::Empty;
    }
    let mut sys = cons.to_vec();
    for v in params {
        sys.push(Constraint::Ge(AffineExpr::var(v)));
        sys.push(Constraint::Ge(AffineExpr::constant(WITNESS_RANGE as i128) - AffineExpr::var(v)));
    }
    let vars: Vec<Var> = sys
        .iter()
        .flat_map(|c| c.vars())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    match scan_points(&vars, &sys, &HashMap::new(), Some(2_000_000)) {
        Ok(points) if !points.is_empty() => Emptiness::NonEmpty,
        _ => Emptiness::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stur::parse_constraints;

    fn poly(dims: &[&str], params: &[&str], text: &str) -> Polyhedron {
        let dims: Vec<Var> = dims.iter().map(|s| s.to_string()).collect();
        Polyhedron::new(
            dims,
            params.iter().map(|s| s.to_string()).collect(),
            parse_constraints(text).unwrap(),
        )
    }

    fn bind(pairs: &[(&str, i64)]) -> HashMap<Var, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn enumerate_diagonal() {
        let p = poly(&["i", "j"], &["n"], "(0 <= i < n) * (i = j)");
        let pts = enumerate(&p, &bind(&[("n", 3)])).unwrap();
        assert_eq!(pts, vec![vec![0, 0], vec![1, 1], vec![2, 2]]);
    }

    #[test]
    fn enumerate_upper_triangle() {
        let p = poly(&["i", "j"], &["n"], "(0 <= i < n) * (i <= j < n)");
        let pts = enumerate(&p, &bind(&[("n", 2)])).unwrap();
        assert_eq!(pts, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn enumerate_strided_diagonal() {
        let p = poly(
            &["i", "j"],
            &["N"],
            "(0 <= i < N) * (0 <= j < N) * ((j - i) % N = 2)",
        );
        // direct scan of the 4x4 grid
        let mut expected = Vec::new();
        for i in 0..4i64 {
            for j in 0..4i64 {
                if (j - i).rem_euclid(4) == 2 {
                    expected.push(vec![i, j]);
                }
            }
        }
        assert_eq!(expected.len(), 4);
        assert_eq!(enumerate(&p, &bind(&[("N", 4)])).unwrap(), expected);
    }

    #[test]
    fn enumerate_requires_bindings() {
        let p = poly(&["i"], &["n"], "(0 <= i < n)");
        assert!(matches!(
            enumerate(&p, &HashMap::new()),
            Err(Error::MissingBinding(_))
        ));
    }

    #[test]
    fn enumerate_unbounded_errors() {
        let p = poly(&["i"], &[], "(0 <= i)");
        assert!(matches!(
            enumerate(&p, &HashMap::new()),
            Err(Error::UnboundedIterator(_))
        ));
    }

    #[test]
    fn emptiness_cases() {
        assert_eq!(is_empty(&poly(&["i"], &[], "(i >= 0) * (-i - 1 >= 0)")), Emptiness::Empty);
        assert_eq!(is_empty(&poly(&["i"], &["n"], "(0 <= i < n)")), Emptiness::NonEmpty);
        assert_eq!(is_empty(&poly(&["i", "j"], &[], "(i = j) * (i < j)")), Emptiness::Empty);
    }

    #[test]
    fn image_of_ttm_space() {
        let space = poly(
            &["i", "j", "k", "l"],
            &["M", "N", "P", "Q"],
            "(0 <= i < M) * (i <= j < N) * (0 <= k < P) * (0 <= l < Q)",
        );
        let map = AccessMap::from_indices(&space.dims, &["i".into(), "j".into(), "l".into()]).unwrap();
        let img = image(&space, &map).unwrap();
        let expected = poly(
            &["i", "j", "l"],
            &["M", "N", "P", "Q"],
            "(0 <= i < M) * (i <= j < N) * (0 <= l < Q)",
        );
        let mut a = img.constraints.clone();
        let mut b = expected.constraints.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(img.exact);
    }

    #[test]
    fn image_identity_is_same() {
        let space = poly(&["i", "j"], &["n"], "(0 <= i < n) * (i <= j < n)");
        let img = image(&space, &AccessMap::identity(&space)).unwrap();
        let b = bind(&[("n", 5)]);
        assert_eq!(enumerate(&img, &b).unwrap(), enumerate(&space, &b).unwrap());
    }

    #[test]
    fn image_of_diagonal_matches_projection() {
        let space = poly(&["i", "j"], &["n"], "(0 <= i < n) * (i = j)");
        let map = AccessMap::from_indices(&space.dims, &["j".into()]).unwrap();
        let img = image(&space, &map).unwrap();
        for n in 1..=8 {
            let b = bind(&[("n", n)]);
            let mut proj: Vec<Vec<i64>> = enumerate(&space, &b)
                .unwrap()
                .into_iter()
                .map(|p| vec![p[1]])
                .collect();
            proj.sort();
            proj.dedup();
            assert_eq!(enumerate(&img, &b).unwrap(), proj);
        }
    }

    #[test]
    fn slices_partition_preceding_set() {
        let acc = poly(&["i", "j"], &["n"], "(0 <= i < n) * (0 <= j <= i)");
        let slices = preceding_slices(&acc);
        assert_eq!(slices.len(), 2);
        for n in 1..=6 {
            let b = bind(&[("n", n)]);
            let pts = enumerate(&acc, &b).unwrap();
            for (rank, p) in pts.iter().enumerate() {
                let mut bb = b.clone();
                bb.insert("i".into(), p[0]);
                bb.insert("j".into(), p[1]);
                let mut union: Vec<Vec<i64>> = Vec::new();
                for s in &slices {
                    union.extend(enumerate(s, &bb).unwrap());
                }
                let total = union.len();
                union.sort();
                union.dedup();
                assert_eq!(union.len(), total, "slices overlap");
                assert_eq!(total, rank);
                let (i, j) = (p[0] as usize, p[1] as usize);
                assert_eq!(total, i * (i + 1) / 2 + j);
            }
        }
    }

    #[test]
    fn one_dim_slice() {
        let acc = poly(&["j"], &["n"], "(0 <= j < n)");
        let slices = preceding_slices(&acc);
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].dims, vec!["j'".to_string()]);
    }
}
