use std::sync::Arc;

use super::{DenseMatrix, Grad2d, LinOp};
use crate::error::{Error, Result};

/// One cell of a [`BlockOp`] grid.
#[derive(Clone)]
pub enum Block {
    Zero,
    /// `scale · Id`; only valid on square cells.
    Identity(f64),
    Op(Arc<dyn LinOp>),
}

/// Operator assembled from a grid of blocks. Row `r` of the grid maps into
/// the `r`-th output segment, column `c` reads the `c`-th input segment.
#[derive(Clone)]
pub struct BlockOp {
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
    row_off: Vec<usize>,
    col_off: Vec<usize>,
    blocks: Vec<Vec<Block>>,
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(dims.len() + 1);
    off.push(0);
    for d in dims {
        off.push(off.last().unwrap() + d);
    }
    off
}

impl BlockOp {
    pub fn new(row_dims: Vec<usize>, col_dims: Vec<usize>, blocks: Vec<Vec<Block>>) -> Result<Self> {
        if blocks.len() != row_dims.len() {
            return Err(Error::dim("block grid row count"));
        }
        for (r, row) in blocks.iter().enumerate() {
            if row.len() != col_dims.len() {
                return Err(Error::dim(format!("block row {r} has {} cells", row.len())));
            }
            for (c, b) in row.iter().enumerate() {
                let ok = match b {
                    Block::Zero => true,
                    Block::Identity(_) => row_dims[r] == col_dims[c],
                    Block::Op(op) => op.out_dim() == row_dims[r] && op.in_dim() == col_dims[c],
                };
                if !ok {
                    return Err(Error::dim(format!(
                        "block ({r},{c}) does not fit {}x{}",
                        row_dims[r], col_dims[c]
                    )));
                }
            }
        }
        Ok(BlockOp {
            row_off: offsets(&row_dims),
            col_off: offsets(&col_dims),
            row_dims,
            col_dims,
            blocks,
        })
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }
}

impl LinOp for BlockOp {
    fn in_dim(&self) -> usize {
        *self.col_off.last().unwrap()
    }

    fn out_dim(&self) -> usize {
        *self.row_off.last().unwrap()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = Vec::new();
        for (r, row) in self.blocks.iter().enumerate() {
            let dst = &mut out[self.row_off[r]..self.row_off[r + 1]];
            for (c, b) in row.iter().enumerate() {
                let src = &x[self.col_off[c]..self.col_off[c + 1]];
                match b {
                    Block::Zero => {}
                    Block::Identity(s) => dst.iter_mut().zip(src).for_each(|(d, v)| *d += s * v),
                    Block::Op(op) => {
                        tmp.resize(dst.len(), 0.0);
                        op.apply_into(src, &mut tmp);
                        dst.iter_mut().zip(&tmp).for_each(|(d, v)| *d += v);
                    }
                }
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = Vec::new();
        for (r, row) in self.blocks.iter().enumerate() {
            let src = &y[self.row_off[r]..self.row_off[r + 1]];
            for (c, b) in row.iter().enumerate() {
                let dst = &mut out[self.col_off[c]..self.col_off[c + 1]];
                match b {
                    Block::Zero => {}
                    Block::Identity(s) => dst.iter_mut().zip(src).for_each(|(d, v)| *d += s * v),
                    Block::Op(op) => {
                        tmp.resize(dst.len(), 0.0);
                        op.adjoint_into(src, &mut tmp);
                        dst.iter_mut().zip(&tmp).for_each(|(d, v)| *d += v);
                    }
                }
            }
        }
    }

    fn norm_hint(&self) -> Option<f64> {
        // ‖[B_rc]‖ ≤ ‖[‖B_rc‖]‖_F
        let mut acc = 0.0;
        for row in &self.blocks {
            for b in row {
                let n = match b {
                    Block::Zero => 0.0,
                    Block::Identity(s) => s.abs(),
                    Block::Op(op) => op.norm_hint()?,
                };
                acc += n * n;
            }
        }
        Some(acc.sqrt())
    }
}

/// Slack reformulation of margin constraints: returns `[b⊙A, −Id]` acting on
/// `(x, u)` and the right-hand side `1_n`. Pair it with a separable
/// regularizer that puts the nonnegativity indicator on `u`.
pub fn classif_reformulate(a: &DenseMatrix, labels: &[f64]) -> Result<(BlockOp, Vec<f64>)> {
    let (n, p) = a.shape();
    if labels.len() != n {
        return Err(Error::dim(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(l) = labels.iter().find(|l| **l != 1.0 && **l != -1.0) {
        return Err(Error::config(format!("label {l} is not ±1")));
    }
    let mut ba = a.clone();
    for (i, l) in labels.iter().enumerate() {
        ba.row_mut(i).iter_mut().for_each(|v| *v *= l);
    }
    let op = BlockOp::new(
        vec![n],
        vec![p, n],
        vec![vec![Block::Op(Arc::new(ba)), Block::Identity(-1.0)]],
    )?;
    Ok((op, vec![1.0; n]))
}

/// TV reformulation with slack `U = ∇X`: returns `[[A, 0], [∇, −Id]]` acting on
/// `(X, U)` and the right-hand side `(B, 0)`.
pub fn tv_reformulate(
    blur: Arc<dyn LinOp>,
    p1: usize,
    p2: usize,
    b: &[f64],
) -> Result<(BlockOp, Vec<f64>)> {
    let p = p1 * p2;
    if blur.in_dim() != p || blur.out_dim() != p {
        return Err(Error::dim(format!(
            "blur is {}x{}, image has {p} pixels",
            blur.out_dim(),
            blur.in_dim()
        )));
    }
    if b.len() != p {
        return Err(Error::dim("observation length differs from image size"));
    }
    let op = BlockOp::new(
        vec![p, 2 * p],
        vec![p, 2 * p],
        vec![
            vec![Block::Op(blur), Block::Zero],
            vec![Block::Op(Arc::new(Grad2d::new(p1, p2))), Block::Identity(-1.0)],
        ],
    )?;
    let mut rhs = b.to_vec();
    rhs.resize(3 * p, 0.0);
    Ok((op, rhs))
}
