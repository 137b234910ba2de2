//! Dense f32 primitives: vectors, row-major matrices, selective reduction,
//! affine maps and the small MLP used by GIN-style combinations.
//!
//! Min/max selection uses the IEEE total order (`f32::total_cmp`), so the
//! reduction is a true lattice operation: it is bitwise permutation-invariant
//! even in the presence of signed zeros. Dot products accumulate in ascending
//! column order with a plain multiply-add, never fused.

use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

/// A NaN-free vector of f32 values.
#[derive(Clone, PartialEq, Default)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if data.iter().any(|x| x.is_nan()) {
            return Err(Error::NaN("vector".into()));
        }
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f32) -> Self {
        Self(vec![value; len])
    }

    /// Wraps values produced by arithmetic on already-validated inputs.
    pub(crate) fn from_trusted(data: Vec<f32>) -> Self {
        debug_assert!(data.iter().all(|x| !x.is_nan()));
        Self(data)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &[f32]) -> bool {
        bit_eq(&self.0, other)
    }
}

impl Deref for Vector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl AsRef<[f32]> for Vector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f32>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Self::new(v)
    }
}

pub fn bit_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| x.is_nan()) {
            return Err(Error::NaN("matrix".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_row(&mut self, i: usize, values: &[f32]) {
        self.row_mut(i).copy_from_slice(values);
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

/// Selective aggregation function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregator {
    Min,
    Max,
}

impl Aggregator {
    /// The selected value among `a` and `b`; `a` wins ties.
    #[inline]
    pub fn select(self, a: f32, b: f32) -> f32 {
        let b_wins = match self {
            Aggregator::Min => b.total_cmp(&a).is_lt(),
            Aggregator::Max => b.total_cmp(&a).is_gt(),
        };
        if b_wins {
            b
        } else {
            a
        }
    }

    /// Neutral element: `+inf` for min, `-inf` for max.
    pub fn identity(self) -> f32 {
        match self {
            Aggregator::Min => f32::INFINITY,
            Aggregator::Max => f32::NEG_INFINITY,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Aggregator::Min => "min",
            Aggregator::Max => "max",
        }
    }
}

/// Folds `x` into `acc` elementwise. Lengths must already agree.
#[inline]
pub fn reduce_into(agg: Aggregator, acc: &mut [f32], x: &[f32]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a = agg.select(*a, v);
    }
}

/// Elementwise min/max over a non-empty list of equal-length vectors.
pub fn ewise_reduce<V: AsRef<[f32]>>(agg: Aggregator, vs: &[V]) -> Result<Vector> {
    let (first, rest) = vs.split_first().ok_or(Error::EmptyInput("ewise_reduce"))?;
    let mut acc = first.as_ref().to_vec();
    for v in rest {
        let v = v.as_ref();
        if v.len() != acc.len() {
            return Err(Error::DimensionMismatch {
                context: "ewise_reduce",
                expected: acc.len(),
                found: v.len(),
            });
        }
        reduce_into(agg, &mut acc, v);
    }
    Vector::new(acc)
}

/// `w · x (+ b)`, summing each row in ascending column order.
pub fn matvec_affine(w: &Matrix, x: &[f32], b: Option<&[f32]>) -> Result<Vector> {
    if w.cols() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "matvec input",
            expected: w.cols(),
            found: x.len(),
        });
    }
    if let Some(b) = b {
        if b.len() != w.rows() {
            return Err(Error::DimensionMismatch {
                context: "matvec bias",
                expected: w.rows(),
                found: b.len(),
            });
        }
    }
    let out = (0..w.rows())
        .map(|r| {
            let mut acc = 0.0f32;
            for (&wi, &xi) in w.row(r).iter().zip(x) {
                acc += wi * xi;
            }
            match b {
                Some(b) => acc + b[r],
                None => acc,
            }
        })
        .collect();
    Ok(Vector::from_trusted(out))
}

/// `max(x, 0)`; non-positive inputs (including `-0.0`) map to `+0.0`.
pub fn relu(x: &[f32]) -> Vector {
    Vector::from_trusted(x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect())
}

/// Affine + ReLU on every hidden layer, affine only on the last one.
pub fn mlp_forward(layers: &[(Matrix, Vector)], x: &[f32]) -> Result<Vector> {
    if layers.is_empty() {
        return Err(Error::EmptyInput("mlp_forward"));
    }
    let mut h = Vector::from_trusted(x.to_vec());
    for (i, (w, b)) in layers.iter().enumerate() {
        h = matvec_affine(w, &h, Some(b))?;
        if i + 1 < layers.len() {
            h = relu(&h);
        }
    }
    Ok(h)
}
