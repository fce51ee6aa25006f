//! Dense rank-r covariant tensors, as point values and as expression fields.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::exprs::{Bindings, Expr, ExprError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Symmetry {
    None,
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("rank must be >= 1")]
    RankZero,
    #[error("component count {got} does not match dim^rank = {want}")]
    Shape { got: usize, want: usize },
    #[error("declared symmetry violated (residual {0:e})")]
    SymmetryViolated(f64),
    #[error("dimension mismatch")]
    Dimension,
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
}

/// Rank-r covariant tensor at a point, components in the chart basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub rank: usize,
    pub dim: usize,
    pub comps: Vec<f64>,
    pub symmetry: Symmetry,
}

impl TensorValue {
    pub fn new(
        rank: usize,
        dim: usize,
        comps: Vec<f64>,
        symmetry: Symmetry,
    ) -> Result<Self, TensorError> {
        if rank == 0 {
            return Err(TensorError::RankZero);
        }
        let want = dim.pow(rank as u32);
        if comps.len() != want {
            return Err(TensorError::Shape {
                got: comps.len(),
                want,
            });
        }
        let t = TensorValue {
            rank,
            dim,
            comps,
            symmetry,
        };
        t.validate_symmetry()?;
        Ok(t)
    }

    pub fn zeros(rank: usize, dim: usize, symmetry: Symmetry) -> Self {
        TensorValue {
            rank,
            dim,
            comps: vec![0.0; dim.pow(rank as u32)],
            symmetry,
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>, symmetry: Symmetry) -> Self {
        let dim = m.nrows();
        let mut comps = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                comps[i * dim + j] = m[(i, j)];
            }
        }
        TensorValue {
            rank: 2,
            dim,
            comps,
            symmetry,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank, 2);
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| self.comps[i * n + j])
    }

    /// Outer product of rank-1 values: (a (x) b)_{ij...} = a_i b_j ...
    pub fn outer(factors: &[&DVector<f64>]) -> Self {
        let rank = factors.len();
        let dim = factors[0].len();
        let mut comps = vec![1.0; dim.pow(rank as u32)];
        let mut idx = vec![0usize; rank];
        for (flat, c) in comps.iter_mut().enumerate() {
            unflatten(flat, dim, &mut idx);
            let mut v = 1.0;
            for (s, &i) in idx.iter().enumerate() {
                v *= factors[s][i];
            }
            *c = v;
        }
        TensorValue {
            rank,
            dim,
            comps,
            symmetry: if rank == 1 { Symmetry::None } else { Symmetry::None },
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[flatten(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = flatten(idx, self.dim);
        self.comps[f] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, &c| m.max(c.abs()))
    }

    pub fn scale(&self, c: f64) -> TensorValue {
        let mut out = self.clone();
        for v in out.comps.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &TensorValue) -> TensorValue {
        assert_eq!(self.comps.len(), other.comps.len());
        let mut out = self.clone();
        if self.symmetry != other.symmetry {
            out.symmetry = Symmetry::None;
        }
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            *a += b;
        }
        out
    }

    /// Full evaluation T(v_1, ..., v_r) against chart-basis vectors.
    pub fn apply(&self, args: &[&DVector<f64>]) -> f64 {
        assert_eq!(args.len(), self.rank);
        let mut cur = self.comps.clone();
        let n = self.dim;
        for v in args.iter().rev() {
            let blocks = cur.len() / n;
            let mut next = vec![0.0; blocks];
            for (b, slot) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += cur[b * n + i] * v[i];
                }
                *slot = acc;
            }
            cur = next;
        }
        cur[0]
    }

    /// Change every slot to the given basis: out[i...] = T(b_{i_1},...,b_{i_r})
    /// where `basis[i]` are chart components of the new basis vectors.
    pub fn in_basis(&self, basis: &[DVector<f64>]) -> TensorValue {
        let n = self.dim;
        let mut cur = self.comps.clone();
        // contract the last slot repeatedly, rotating slots so order is kept
        for _ in 0..self.rank {
            let blocks = cur.len() / n;
            let mut next = vec![0.0; cur.len()];
            // next[j, b] = sum_i cur[b, i] * basis[j][i], with j the new
            // leading index so after r passes the order is restored
            for (j, bv) in basis.iter().enumerate() {
                for b in 0..blocks {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += cur[b * n + i] * bv[i];
                    }
                    next[j * blocks + b] = acc;
                }
            }
            cur = next;
        }
        TensorValue {
            rank: self.rank,
            dim: n,
            comps: cur,
            symmetry: self.symmetry,
        }
    }

    fn validate_symmetry(&self) -> Result<(), TensorError> {
        if self.rank < 2 || self.symmetry == Symmetry::None {
            return Ok(());
        }
        let n = self.dim;
        let scale = self.max_abs().max(1e-300);
        let mut idx = vec![0usize; self.rank];
        let mut swapped = vec![0usize; self.rank];
        for flat in 0..self.comps.len() {
            unflatten(flat, n, &mut idx);
            // adjacent transpositions generate the symmetric group
            for s in 0..self.rank - 1 {
                swapped.copy_from_slice(&idx);
                swapped.swap(s, s + 1);
                let other = self.comps[flatten(&swapped, n)];
                let want = match self.symmetry {
                    Symmetry::Symmetric => other,
                    Symmetry::Antisymmetric => -other,
                    Symmetry::None => unreachable!(),
                };
                let resid = (self.comps[flat] - want).abs();
                if resid > 1e-12 * scale.max(1.0) {
                    return Err(TensorError::SymmetryViolated(resid));
                }
            }
        }
        Ok(())
    }
}

pub fn flatten(idx: &[usize], dim: usize) -> usize {
    let mut f = 0;
    for &i in idx {
        f = f * dim + i;
    }
    f
}

pub fn unflatten(mut flat: usize, dim: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

/// Rank-r covariant tensor field given by component expressions.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub rank: usize,
    pub dim: usize,
    pub comps: Vec<Expr>,
    pub symmetry: Symmetry,
}

impl TensorField {
    pub fn new(rank: usize, dim: usize, comps: Vec<Expr>, symmetry: Symmetry) -> Result<Self, TensorError> {
        if rank == 0 {
            return Err(TensorError::RankZero);
        }
        let want = dim.pow(rank as u32);
        if comps.len() != want {
            return Err(TensorError::Shape {
                got: comps.len(),
                want,
            });
        }
        Ok(TensorField {
            rank,
            dim,
            comps,
            symmetry,
        })
    }

    pub fn zeros(rank: usize, dim: usize, symmetry: Symmetry) -> Self {
        TensorField {
            rank,
            dim,
            comps: vec![Expr::constant(0.0); dim.pow(rank as u32)],
            symmetry,
        }
    }

    pub fn get(&self, idx: &[usize]) -> &Expr {
        &self.comps[flatten(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], e: Expr) {
        let f = flatten(idx, self.dim);
        self.comps[f] = e;
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<TensorValue, TensorError> {
        let mut comps = Vec::with_capacity(self.comps.len());
        for e in &self.comps {
            comps.push(e.eval(bindings)?);
        }
        Ok(TensorValue {
            rank: self.rank,
            dim: self.dim,
            comps,
            symmetry: self.symmetry,
        })
    }
}
