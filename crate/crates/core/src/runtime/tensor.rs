use std::fmt::{self, Debug, Display};
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Element type of tensors and packed buffers.
pub trait Scalar: Copy + Default + PartialEq + Debug + Display + FromStr + Send + Sync + 'static {
    const NAME: &'static str;
    fn one() -> Self;
    fn add(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn random<R: Rng>(rng: &mut R) -> Self;
    /// Equality up to rounding for floats.
    fn close(self, o: Self) -> bool;
    fn to_f64(self) -> f64;
    fn is_zero(self) -> bool {
        self == Self::default()
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        self + o
    }
    #[inline]
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn random<R: Rng>(rng: &mut R) -> Self {
        rng.gen_range(-1.0..1.0)
    }
    fn close(self, o: Self) -> bool {
        (self - o).abs() <= 1e-12 * self.abs().max(o.abs()).max(1.0)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Wrapping integer arithmetic.
impl Scalar for i64 {
    const NAME: &'static str = "i64";
    fn one() -> Self {
        1
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        self.wrapping_add(o)
    }
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.wrapping_mul(o)
    }
    fn random<R: Rng>(rng: &mut R) -> Self {
        rng.gen_range(-9..=9)
    }
    fn close(self, o: Self) -> bool {
        self == o
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Row-major dense tensor.
#[derive(Clone, PartialEq)]
pub struct DenseTensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DenseTensor {
            shape,
            data: vec![T::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major offset, or `None` when out of bounds.
    #[inline]
    pub fn offset(&self, point: &[i64]) -> Option<usize> {
        if point.len() != self.shape.len() {
            return None;
        }
        let mut off = 0usize;
        for (x, n) in point.iter().zip(&self.shape) {
            if *x < 0 || *x as usize >= *n {
                return None;
            }
            off = off * n + *x as usize;
        }
        Some(off)
    }

    pub fn get(&self, point: &[i64]) -> Option<T> {
        self.offset(point).map(|o| self.data[o])
    }

    pub fn set(&mut self, point: &[i64], v: T) -> Result<()> {
        let len = self.data.len();
        let o = self.offset(point).ok_or(Error::IndexOutOfRange { index: -1, len })?;
        self.data[o] = v;
        Ok(())
    }

    /// Every coordinate tuple in row-major order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let n = self.data.len();
        (0..n).map(move |mut o| {
            let mut p = vec![0i64; self.shape.len()];
            for k in (0..self.shape.len()).rev() {
                p[k] = (o % self.shape[k]) as i64;
                o /= self.shape[k];
            }
            p
        })
    }

    /// Position and value of the first mismatch.
    pub fn first_difference(&self, other: &Self) -> Option<(Vec<i64>, T, T)> {
        if self.shape != other.shape {
            return Some((vec![], T::default(), T::default()));
        }
        self.points()
            .zip(self.data.iter().zip(&other.data))
            .find(|(_, (a, b))| !a.close(**b))
            .map(|(p, (a, b))| (p, *a, *b))
    }

    /// `shape: d1 d2 ...` followed by one value per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        writeln!(w, "shape: {}", dims.join(" "))?;
        for v in &self.data {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Invalid("empty tensor file".into()))??;
        let dims = header
            .strip_prefix("shape:")
            .ok_or_else(|| Error::Invalid(format!("bad tensor header `{header}`")))?;
        let shape = dims
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|_| Error::Invalid(format!("bad extent `{d}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::new();
        for line in lines {
            let line = line?;
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<T>()
                        .map_err(|_| Error::Invalid(format!("bad {} value `{tok}`", T::NAME)))?,
                );
            }
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Invalid(format!(
                "tensor file has {} values for shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(DenseTensor { shape, data })
    }
}

impl<T: Debug> Debug for DenseTensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseTensor{:?}", self.shape)
    }
}
