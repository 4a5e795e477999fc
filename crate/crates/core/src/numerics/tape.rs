//! Tape-based reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse and applies
//! each operation's vector-Jacobian product. Leaves are either trainable
//! parameters or constants; nodes that depend on no parameter are skipped
//! during the backward sweep.
//!
//! A tape belongs to one forward/backward pass on one thread. Independent
//! utterances use independent tapes.

use super::matrix::layer_norm_parts;
use super::Matrix;
use crate::{Result, WasError};

/// Handle to a differentiable tensor recorded on a [`Tape`].
///
/// The value lives on the tape ([`Tape::value`]); its gradient is read from
/// the [`Gradients`] returned by [`Tape::backward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    MaskFill(Var, Vec<bool>),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// `a + row` with the `1 × cols` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(row))?;
        let rg = self.any_grad(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Writes `−∞` wherever `mask` is true. The mask is a constant: masked
    /// entries pass no gradient.
    pub fn mask_fill(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let src = self.value(a);
        if mask.len() != src.len() {
            return Err(WasError::contract(format!(
                "mask of {} entries for a {:?} matrix",
                mask.len(),
                src.shape()
            )));
        }
        let mut value = src.clone();
        for (x, &m) in value.as_mut_slice().iter_mut().zip(&mask) {
            if m {
                *x = f64::NEG_INFINITY;
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::MaskFill(a, mask), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax_rows()?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    /// Row-wise layer norm; `gain` and `bias` are `1 × cols`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, epsilon: f64) -> Result<Var> {
        let (g, b) = (self.value(gain), self.value(bias));
        if g.rows() != 1 || b.rows() != 1 {
            return Err(WasError::Dimension {
                op: "layer_norm",
                left: g.shape(),
                right: b.shape(),
            });
        }
        let (value, normalized, inv_std) =
            layer_norm_parts(self.value(x), g.as_slice(), b.as_slice(), epsilon)?;
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&mats)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Mean over rows of `−log softmax(logits)[row, target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        if targets.len() != l.rows() {
            return Err(WasError::Alignment {
                targets: targets.len(),
                frames: l.rows(),
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= l.cols()) {
            return Err(WasError::contract(format!(
                "target class {t} out of range for {} classes",
                l.cols()
            )));
        }
        let probs = l.softmax_rows()?;
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = l.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let value = Matrix::scalar(total / targets.len().max(1) as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(WasError::contract(format!(
                "backward needs a scalar loss, got a {shape:?} matrix"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let mut send = |v: Var, contribution: Matrix| -> Result<()> {
            if !self.nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(acc) => acc.accumulate(&contribution),
                slot @ None => {
                    *slot = Some(contribution);
                    Ok(())
                }
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    send(*a, g.matmul(&self.value(*b).transpose())?)?;
                }
                if self.requires_grad(*b) {
                    send(*b, self.value(*a).transpose().matmul(g)?)?;
                }
            }
            Op::Transpose(a) => send(*a, g.transpose())?,
            Op::Add(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.clone())?;
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone())?;
                send(*row, g.sum_rows())?;
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    send(*a, g.hadamard(self.value(*b))?)?;
                }
                if self.requires_grad(*b) {
                    send(*b, g.hadamard(self.value(*a))?)?;
                }
            }
            Op::Scale(a, factor) => send(*a, g.scale(*factor))?,
            Op::Relu(a) => {
                let input = self.value(*a);
                let mut out = g.clone();
                for (o, &x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if x <= 0.0 {
                        *o = 0.0;
                    }
                }
                send(*a, out)?;
            }
            Op::MaskFill(a, mask) => {
                let mut out = g.clone();
                for (o, &m) in out.as_mut_slice().iter_mut().zip(mask) {
                    if m {
                        *o = 0.0;
                    }
                }
                send(*a, out)?;
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, d)| p * d).sum();
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = yr[j] * (gr[j] - dot);
                    }
                }
                send(*a, out)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let gain_v = self.value(*gain);
                if self.requires_grad(*x) {
                    let n = normalized.cols() as f64;
                    let mut dx = Matrix::zeros(normalized.rows(), normalized.cols());
                    for (i, &inv) in inv_std.iter().enumerate() {
                        let (h, gr) = (normalized.row(i), g.row(i));
                        let dh: Vec<f64> = gr.iter().zip(gain_v.as_slice()).map(|(d, s)| d * s).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(h).map(|(a, b)| a * b).sum();
                        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                            *o = inv / n * (n * dh[j] - sum_dh - h[j] * sum_dh_h);
                        }
                    }
                    send(*x, dx)?;
                }
                if self.requires_grad(*gain) {
                    send(*gain, g.hadamard(normalized)?.sum_rows())?;
                }
                if self.requires_grad(*bias) {
                    send(*bias, g.sum_rows())?;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let width = self.value(*p).cols();
                    if self.requires_grad(*p) {
                        send(*p, g.slice_cols(start, start + width)?)?;
                    }
                    start += width;
                }
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut out = Matrix::zeros(src.rows(), src.cols());
                for i in 0..g.rows() {
                    out.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                send(*a, out)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Matrix::filled(r, c, g.as_slice()[0]))?;
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Matrix::filled(r, c, g.as_slice()[0] / (r * c) as f64))?;
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.as_slice()[0] / targets.len().max(1) as f64;
                let mut out = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    let row = out.row_mut(i);
                    row[t] -= 1.0;
                    for x in row.iter_mut() {
                        *x *= scale;
                    }
                }
                send(*logits, out)?;
            }
        }
        Ok(())
    }
}

/// Gradients of one scalar loss with respect to every recorded tensor that
/// depends on a parameter.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` for constants and for tensors the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
