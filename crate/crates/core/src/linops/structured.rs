use std::sync::Arc;

use super::LinOp;
use crate::error::{Error, Result};

/// Identity on `R^n`.
#[derive(Clone, Debug)]
pub struct Identity {
    n: usize,
}

impl Identity {
    pub fn new(n: usize) -> Self {
        Identity { n }
    }
}

impl LinOp for Identity {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(if self.n == 0 { 0.0 } else { 1.0 })
    }
}

/// Diagonal operator `x ↦ d ⊙ x`.
#[derive(Clone, Debug)]
pub struct Diagonal {
    d: Vec<f64>,
}

impl Diagonal {
    pub fn new(d: Vec<f64>) -> Self {
        Diagonal { d }
    }

    pub fn entries(&self) -> &[f64] {
        &self.d
    }
}

impl LinOp for Diagonal {
    fn in_dim(&self) -> usize {
        self.d.len()
    }
    fn out_dim(&self) -> usize {
        self.d.len()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.d).zip(x) {
            *o = d * v;
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out)
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(self.d.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

/// Entry mask on `p1 × p2` matrices stored row-major: keeps observed entries,
/// zeroes the rest.
#[derive(Clone, Debug)]
pub struct Masking {
    p1: usize,
    p2: usize,
    mask: Vec<bool>,
    count: usize,
}

impl Masking {
    pub fn new(p1: usize, p2: usize, observed: &[(usize, usize)]) -> Result<Self> {
        let mut mask = vec![false; p1 * p2];
        for &(i, j) in observed {
            if i >= p1 || j >= p2 {
                return Err(Error::dim(format!(
                    "observed index ({i},{j}) outside {p1}x{p2}"
                )));
            }
            mask[i * p2 + j] = true;
        }
        Ok(Self::from_mask(p1, p2, mask))
    }

    pub fn from_mask(p1: usize, p2: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), p1 * p2);
        let count = mask.iter().filter(|m| **m).count();
        Masking {
            p1,
            p2,
            mask,
            count,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.count
    }

    pub fn observed(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(k, _)| (k / self.p2, k % self.p2))
            .collect()
    }
}

impl LinOp for Masking {
    fn in_dim(&self) -> usize {
        self.p1 * self.p2
    }
    fn out_dim(&self) -> usize {
        self.p1 * self.p2
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.mask).zip(x) {
            *o = if *m { *v } else { 0.0 };
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out)
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(if self.count > 0 { 1.0 } else { 0.0 })
    }
}

/// Forward-difference gradient of a `p1 × p2` image (row-major), Neumann
/// boundary. The output holds one `(horizontal, vertical)` pair per pixel,
/// so it reads as a `p1·p2 × 2` row-major matrix whose rows are the groups
/// of the isotropic TV norm.
#[derive(Clone, Debug)]
pub struct Grad2d {
    p1: usize,
    p2: usize,
}

impl Grad2d {
    pub fn new(p1: usize, p2: usize) -> Self {
        Grad2d { p1, p2 }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }
}

impl LinOp for Grad2d {
    fn in_dim(&self) -> usize {
        self.p1 * self.p2
    }
    fn out_dim(&self) -> usize {
        2 * self.p1 * self.p2
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (p1, p2) = (self.p1, self.p2);
        for i in 0..p1 {
            for j in 0..p2 {
                let k = i * p2 + j;
                out[2 * k] = if j + 1 < p2 { x[k + 1] - x[k] } else { 0.0 };
                out[2 * k + 1] = if i + 1 < p1 { x[k + p2] - x[k] } else { 0.0 };
            }
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let (p1, p2) = (self.p1, self.p2);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..p1 {
            for j in 0..p2 {
                let k = i * p2 + j;
                if j + 1 < p2 {
                    out[k + 1] += y[2 * k];
                    out[k] -= y[2 * k];
                }
                if i + 1 < p1 {
                    out[k + p2] += y[2 * k + 1];
                    out[k] -= y[2 * k + 1];
                }
            }
        }
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(8f64.sqrt())
    }
}

/// Compressed sparse row matrix, used for LIBSVM designs.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 || indptr[rows] != indices.len() {
            return Err(Error::dim("inconsistent CSR row pointers"));
        }
        if indices.len() != values.len() {
            return Err(Error::dim("CSR indices and values differ in length"));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::dim("CSR row pointers decrease"));
        }
        if indices.iter().any(|&j| j >= cols) {
            return Err(Error::dim("CSR column index out of range"));
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Build from per-row `(col, value)` lists.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            for &(j, v) in r {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self::new(rows.len(), cols, indptr, indices, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn to_dense(&self) -> super::DenseMatrix {
        let mut m = super::DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m.set(i, j, m.get(i, j) + v);
            }
        }
        m
    }
}

impl LinOp for CsrMatrix {
    fn in_dim(&self) -> usize {
        self.cols
    }
    fn out_dim(&self) -> usize {
        self.rows
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * yi;
            }
        }
    }
}

/// `diag(left) · A · diag(right)`; either side may be omitted.
#[derive(Clone)]
pub struct ScaledOp {
    inner: Arc<dyn LinOp>,
    left: Option<Vec<f64>>,
    right: Option<Vec<f64>>,
}

impl ScaledOp {
    pub fn new(
        inner: Arc<dyn LinOp>,
        left: Option<Vec<f64>>,
        right: Option<Vec<f64>>,
    ) -> Result<Self> {
        if left.as_ref().is_some_and(|l| l.len() != inner.out_dim())
            || right.as_ref().is_some_and(|r| r.len() != inner.in_dim())
        {
            return Err(Error::dim("scaling vector length mismatch"));
        }
        Ok(ScaledOp { inner, left, right })
    }
}

impl LinOp for ScaledOp {
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.right {
            Some(r) => {
                let xs: Vec<f64> = x.iter().zip(r).map(|(a, b)| a * b).collect();
                self.inner.apply_into(&xs, out);
            }
            None => self.inner.apply_into(x, out),
        }
        if let Some(l) = &self.left {
            out.iter_mut().zip(l).for_each(|(o, s)| *o *= s);
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        match &self.left {
            Some(l) => {
                let ys: Vec<f64> = y.iter().zip(l).map(|(a, b)| a * b).collect();
                self.inner.adjoint_into(&ys, out);
            }
            None => self.inner.adjoint_into(y, out),
        }
        if let Some(r) = &self.right {
            out.iter_mut().zip(r).for_each(|(o, s)| *o *= s);
        }
    }
    fn norm_hint(&self) -> Option<f64> {
        let sup = |v: &Option<Vec<f64>>| {
            v.as_ref()
                .map_or(1.0, |v| v.iter().fold(0.0_f64, |m, e| m.max(e.abs())))
        };
        self.inner
            .norm_hint()
            .map(|n| n * sup(&self.left) * sup(&self.right))
    }
}
