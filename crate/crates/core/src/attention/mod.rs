//! Scaled dot-product and multi-head self-attention with weak-attention
//! suppression.
//!
//! Row `i` of every probability matrix is query `i`'s distribution over keys.
//! Suppression runs per row: a first softmax yields probabilities, entries
//! strictly below the row threshold have their logits replaced by `−∞`, and a
//! second softmax re-normalizes the survivors. In the backward pass the
//! suppression mask is a constant.

mod mha;
mod suppress;

use serde::{Deserialize, Serialize};

use crate::{Result, WasError};

pub use mha::{
    multi_head_was_attention, record_multi_head, record_was_attention, was_attention,
    AttentionHeadWeights, AttentionMode, AttentionOutput, AttentionVars, HeadOutput, HeadProjection,
    MultiHeadOutput,
};
pub use suppress::{
    suppress_row, suppress_row_with, suppression_threshold, RowSuppression, ThresholdComparison,
};

/// Weak-attention suppression settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WasConfig {
    /// Suppression strength γ; larger values lower the threshold.
    pub gamma: f64,
    pub enabled: bool,
    /// Rows with fewer unmasked positions are never suppressed.
    pub min_length_for_suppression: usize,
    /// Dropout on the re-normalized attention probabilities while training.
    pub dropout_rate: f64,
}

impl Default for WasConfig {
    fn default() -> Self {
        WasConfig {
            gamma: 0.5,
            enabled: true,
            min_length_for_suppression: 2,
            dropout_rate: 0.0,
        }
    }
}

impl WasConfig {
    pub fn disabled() -> Self {
        WasConfig {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn with_gamma(gamma: f64) -> Self {
        WasConfig {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(0.0..=1.0).contains(&self.gamma) {
            return Err(WasError::config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.min_length_for_suppression < 2 {
            return Err(WasError::config(format!(
                "min_length_for_suppression must be at least 2, got {}",
                self.min_length_for_suppression
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(WasError::config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Which width sets the logit scale `1/√d`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleDim {
    /// Full model width `d_i`.
    Model,
    /// Per-head width `d_i / h`.
    #[default]
    Head,
}

impl ScaleDim {
    pub fn factor(self, d_model: usize, heads: usize) -> f64 {
        let d = match self {
            ScaleDim::Model => d_model,
            ScaleDim::Head => d_model / heads.max(1),
        };
        1.0 / (d as f64).sqrt()
    }
}

/// Limited attention span: query `i` sees keys `i − left ..= i + right`.
/// `None` on a side means unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextWindow {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl ContextWindow {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn new(left: Option<usize>, right: Option<usize>) -> Self {
        ContextWindow { left, right }
    }

    pub fn is_unbounded(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }

    pub fn excludes(&self, query: usize, key: usize) -> bool {
        let too_far_left = self.left.is_some_and(|l| key + l < query);
        let too_far_right = self.right.is_some_and(|r| key > query + r);
        too_far_left || too_far_right
    }

    /// Row-major exclusion mask for a `rows × cols` logit matrix, or `None`
    /// when nothing is excluded.
    pub fn mask(&self, rows: usize, cols: usize) -> Option<Vec<bool>> {
        if self.is_unbounded() {
            return None;
        }
        let mask: Vec<bool> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| self.excludes(i, j))
            .collect();
        mask.iter().any(|&m| m).then_some(mask)
    }
}

/// Binary suppression indicators `s[i][j]` for one head of one layer:
/// `true` where query `i`'s attention to key `j` was suppressed by WAS.
/// Positions removed by the context window are never marked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuppressionMask {
    /// 1-based encoder layer; 0 when produced outside an encoder.
    pub layer: usize,
    pub head: usize,
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl SuppressionMask {
    pub fn new(layer: usize, head: usize, rows: usize, cols: usize, entries: Vec<bool>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(WasError::contract(format!(
                "{} mask entries for a {rows}x{cols} mask",
                entries.len()
            )));
        }
        Ok(SuppressionMask {
            layer,
            head,
            rows,
            cols,
            entries,
        })
    }

    pub fn empty(layer: usize, head: usize, rows: usize, cols: usize) -> Self {
        SuppressionMask {
            layer,
            head,
            rows,
            cols,
            entries: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let entries = rows.iter().flat_map(|r| r.iter().map(|&v| v != 0)).collect();
        SuppressionMask {
            layer: 0,
            head: 0,
            rows: rows.len(),
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, query: usize, key: usize) -> bool {
        self.entries[query * self.cols + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.entries[query * self.cols..(query + 1) * self.cols]
    }

    pub fn entries(&self) -> &[bool] {
        &self.entries
    }

    pub fn count(&self) -> u64 {
        self.entries.iter().filter(|&&s| s).count() as u64
    }
}
