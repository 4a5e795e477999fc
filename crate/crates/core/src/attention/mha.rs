use super::{suppress_row_with, ContextWindow, ScaleDim, SuppressionMask, ThresholdComparison, WasConfig};
use crate::numerics::{Matrix, Rng, Tape, Var};
use crate::{Result, WasError};

/// Per-pass attention settings.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMode<'a> {
    pub config: &'a WasConfig,
    pub window: &'a ContextWindow,
    /// Enables dropout on the attention probabilities.
    pub training: bool,
}

/// One recorded attention head.
#[derive(Debug)]
pub struct HeadOutput {
    pub output: Var,
    /// Re-normalized probabilities before dropout.
    pub probabilities: Var,
    pub mask: SuppressionMask,
}

/// Records scaled dot-product attention with WAS on `tape`.
///
/// `logits = scale · Q Kᵀ`; context-window positions become `−∞`; each row is
/// suppressed unless WAS is disabled; the second softmax runs over logits
/// with suppressed positions at `−∞`; dropout (training only) multiplies the
/// final probabilities; `output = A V`.
///
/// With `frozen`, that mask replaces the computed one. The suppression mask is
/// a tape constant either way.
pub fn record_was_attention(
    tape: &mut Tape,
    (q, k, v): (Var, Var, Var),
    scale: f64,
    mode: AttentionMode<'_>,
    rng: &mut Rng,
    frozen: Option<&SuppressionMask>,
) -> Result<HeadOutput> {
    let (qs, ks, vs) = (tape.value(q).shape(), tape.value(k).shape(), tape.value(v).shape());
    if qs.1 != ks.1 {
        return Err(WasError::Dimension {
            op: "attention q/k width",
            left: qs,
            right: ks,
        });
    }
    if ks.0 != vs.0 {
        return Err(WasError::Dimension {
            op: "attention k/v length",
            left: ks,
            right: vs,
        });
    }
    let (rows, cols) = (qs.0, ks.0);

    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let mut logits = tape.scale(scores, scale);
    if let Some(window) = mode.window.mask(rows, cols) {
        logits = tape.mask_fill(logits, window)?;
    }

    let mask = match frozen {
        Some(m) => {
            if (m.rows(), m.cols()) != (rows, cols) {
                return Err(WasError::Dimension {
                    op: "frozen suppression mask",
                    left: (m.rows(), m.cols()),
                    right: (rows, cols),
                });
            }
            SuppressionMask::new(0, 0, rows, cols, m.entries().to_vec())?
        }
        None if mode.config.enabled => {
            let values = tape.value(logits);
            let mut entries = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                let row = suppress_row_with(
                    values.row(i),
                    mode.config.gamma,
                    mode.config.min_length_for_suppression,
                    ThresholdComparison::Strict,
                )
                .map_err(|e| match e {
                    WasError::DegenerateRow { .. } => WasError::DegenerateRow { row: i },
                    other => other,
                })?;
                entries.extend(row.suppressed);
            }
            SuppressionMask::new(0, 0, rows, cols, entries)?
        }
        None => SuppressionMask::empty(0, 0, rows, cols),
    };

    let masked = if mask.count() > 0 {
        tape.mask_fill(logits, mask.entries().to_vec())?
    } else {
        logits
    };
    let probabilities = tape.softmax_rows(masked)?;

    let rate = mode.config.dropout_rate;
    let attended = if mode.training && rate > 0.0 {
        let keep = 1.0 / (1.0 - rate);
        let drop = Matrix::from_fn(rows, cols, |_, _| if rng.bernoulli(rate) { 0.0 } else { keep });
        let drop = tape.constant(drop);
        tape.mul(probabilities, drop)?
    } else {
        probabilities
    };
    let output = tape.matmul(attended, v)?;
    Ok(HeadOutput {
        output,
        probabilities,
        mask,
    })
}

/// Standalone result of [`was_attention`].
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Matrix,
    pub probabilities: Matrix,
    pub mask: SuppressionMask,
}

/// Single-head attention with WAS on plain matrices. `scale` is normally
/// `1/√d_head`.
pub fn was_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    scale: f64,
    mode: AttentionMode<'_>,
    rng: &mut Rng,
) -> Result<AttentionOutput> {
    let mut tape = Tape::new();
    let qkv = (
        tape.constant(q.clone()),
        tape.constant(k.clone()),
        tape.constant(v.clone()),
    );
    let head = record_was_attention(&mut tape, qkv, scale, mode, rng, None)?;
    Ok(AttentionOutput {
        output: tape.value(head.output).clone(),
        probabilities: tape.value(head.probabilities).clone(),
        mask: head.mask,
    })
}

/// Query/key/value projections of one head, each `d_model × d_head`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadProjection {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

/// Weights of a multi-head attention block: per-head projections and the
/// shared output projection `w_o` of shape `(h·d_head) × d_model`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHeadWeights {
    pub heads: Vec<HeadProjection>,
    pub w_o: Matrix,
}

impl AttentionHeadWeights {
    /// Gaussian initialization with variance `1/fan_in`.
    pub fn random(d_model: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        let d_head = head_width(d_model, heads)?;
        let std_in = 1.0 / (d_model as f64).sqrt();
        let heads = (0..heads)
            .map(|_| HeadProjection {
                w_q: rng.normal_matrix(d_model, d_head, std_in),
                w_k: rng.normal_matrix(d_model, d_head, std_in),
                w_v: rng.normal_matrix(d_model, d_head, std_in),
            })
            .collect::<Vec<_>>();
        let w_o = rng.normal_matrix(d_head * heads.len(), d_model, std_in);
        Ok(AttentionHeadWeights { heads, w_o })
    }

    pub fn d_model(&self) -> usize {
        self.w_o.cols()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> AttentionVars {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let heads = self
            .heads
            .iter()
            .map(|h| (leaf(&h.w_q), leaf(&h.w_k), leaf(&h.w_v)))
            .collect();
        let w_o = leaf(&self.w_o);
        AttentionVars { heads, w_o }
    }
}

pub(crate) fn head_width(d_model: usize, heads: usize) -> Result<usize> {
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(WasError::config(format!(
            "{heads} heads do not divide model width {d_model}"
        )));
    }
    Ok(d_model / heads)
}

/// Tape handles for [`AttentionHeadWeights`].
#[derive(Clone, Debug)]
pub struct AttentionVars {
    /// `(w_q, w_k, w_v)` per head.
    pub heads: Vec<(Var, Var, Var)>,
    pub w_o: Var,
}

/// Records multi-head self-attention: every head attends with its own
/// per-row thresholds, head outputs are concatenated and projected by `w_o`.
///
/// Returns the projected output and one mask per head (head index set,
/// layer left at 0).
pub fn record_multi_head(
    tape: &mut Tape,
    x: Var,
    vars: &AttentionVars,
    scale: f64,
    mode: AttentionMode<'_>,
    rng: &mut Rng,
    frozen: Option<&[SuppressionMask]>,
) -> Result<(Var, Vec<SuppressionMask>)> {
    let d_model = tape.value(x).cols();
    let heads = vars.heads.len();
    let d_head = head_width(d_model, heads)?;
    if let Some(f) = frozen {
        if f.len() != heads {
            return Err(WasError::contract(format!(
                "{} frozen masks for {heads} heads",
                f.len()
            )));
        }
    }
    for &(w_q, _, _) in &vars.heads {
        let shape = tape.value(w_q).shape();
        if shape != (d_model, d_head) {
            return Err(WasError::Dimension {
                op: "head projection",
                left: shape,
                right: (d_model, d_head),
            });
        }
    }

    let mut outputs = Vec::with_capacity(heads);
    let mut masks = Vec::with_capacity(heads);
    for (h, &(w_q, w_k, w_v)) in vars.heads.iter().enumerate() {
        let q = tape.matmul(x, w_q)?;
        let k = tape.matmul(x, w_k)?;
        let v = tape.matmul(x, w_v)?;
        let head = record_was_attention(tape, (q, k, v), scale, mode, rng, frozen.map(|f| &f[h]))?;
        let mut mask = head.mask;
        mask.head = h;
        outputs.push(head.output);
        masks.push(mask);
    }
    let concat = if outputs.len() == 1 {
        outputs[0]
    } else {
        tape.concat_cols(&outputs)?
    };
    let projected = tape.matmul(concat, vars.w_o)?;
    Ok((projected, masks))
}

/// Standalone result of [`multi_head_was_attention`].
#[derive(Clone, Debug)]
pub struct MultiHeadOutput {
    pub output: Matrix,
    pub masks: Vec<SuppressionMask>,
}

/// Multi-head self-attention with WAS on plain matrices.
pub fn multi_head_was_attention(
    x: &Matrix,
    weights: &AttentionHeadWeights,
    scale_dim: ScaleDim,
    mode: AttentionMode<'_>,
    rng: &mut Rng,
) -> Result<MultiHeadOutput> {
    if x.cols() != weights.d_model() {
        return Err(WasError::Dimension {
            op: "multi-head input",
            left: x.shape(),
            right: weights.w_o.shape(),
        });
    }
    let scale = scale_dim.factor(x.cols(), weights.heads.len());
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let vars = weights.record(&mut tape, false);
    let (out, masks) = record_multi_head(&mut tape, xv, &vars, scale, mode, rng, None)?;
    Ok(MultiHeadOutput {
        output: tape.value(out).clone(),
        masks,
    })
}
