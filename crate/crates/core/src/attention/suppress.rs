use crate::numerics::softmax_in_place;
use crate::{Result, WasError};

/// Tolerance on `Σα = 1` accepted by [`suppression_threshold`].
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Comparison used against the threshold. Only [`ThresholdComparison::Strict`]
/// is correct; the other variant exists so verification harnesses can inject
/// a known fault.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ThresholdComparison {
    #[default]
    Strict,
    NonStrict,
}

impl ThresholdComparison {
    #[inline]
    fn suppresses(self, p: f64, theta: f64) -> bool {
        match self {
            ThresholdComparison::Strict => p < theta,
            ThresholdComparison::NonStrict => p <= theta,
        }
    }
}

/// Per-query threshold `θ = 1/L − γ·√(Σⱼ(αⱼ − 1/L)² / (L − 1))`.
///
/// The centre is the constant `1/L`, not the empirical mean. A length-1 row
/// has no deviation and yields `θ = 1`.
pub fn suppression_threshold(row: &[f64], gamma: f64) -> Result<f64> {
    let len = row.len();
    if len == 0 {
        return Err(WasError::contract("threshold of an empty row"));
    }
    let total: f64 = row.iter().sum();
    if !total.is_finite() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(WasError::contract(format!(
            "attention row sums to {total}, expected 1"
        )));
    }
    let uniform = 1.0 / len as f64;
    if len == 1 {
        return Ok(uniform);
    }
    let squared: f64 = row.iter().map(|&a| (a - uniform) * (a - uniform)).sum();
    let deviation = (squared / (len - 1) as f64).sqrt();
    Ok(uniform - gamma * deviation)
}

/// Result of suppressing one logit row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSuppression {
    /// Re-normalized probabilities; exactly zero at suppressed and at
    /// context-masked positions.
    pub probabilities: Vec<f64>,
    /// Positions removed by suppression (context-masked ones excluded).
    pub suppressed: Vec<bool>,
    pub threshold: Option<f64>,
}

impl RowSuppression {
    pub fn suppressed_count(&self) -> usize {
        self.suppressed.iter().filter(|&&s| s).count()
    }
}

/// Two-step suppression of a logit row with the default minimum length of 2.
///
/// `−∞` entries are context-masked: they are excluded from the row length and
/// the deviation, and are not reported as suppressed.
pub fn suppress_row(logits: &[f64], gamma: f64) -> Result<RowSuppression> {
    suppress_row_with(logits, gamma, 2, ThresholdComparison::Strict)
}

/// [`suppress_row`] with an explicit minimum effective length and threshold
/// comparison.
pub fn suppress_row_with(
    logits: &[f64],
    gamma: f64,
    min_length: usize,
    comparison: ThresholdComparison,
) -> Result<RowSuppression> {
    let mut probabilities = logits.to_vec();
    softmax_in_place(&mut probabilities).map_err(|_| WasError::DegenerateRow { row: 0 })?;

    let live: Vec<usize> = (0..logits.len())
        .filter(|&j| logits[j] != f64::NEG_INFINITY)
        .collect();
    let mut suppressed = vec![false; logits.len()];
    if live.len() < min_length.max(2) {
        return Ok(RowSuppression {
            probabilities,
            suppressed,
            threshold: None,
        });
    }

    let live_probs: Vec<f64> = live.iter().map(|&j| probabilities[j]).collect();
    let theta = suppression_threshold(&live_probs, gamma)?;
    let mut any = false;
    for &j in &live {
        if comparison.suppresses(probabilities[j], theta) {
            suppressed[j] = true;
            any = true;
        }
    }
    if !any {
        return Ok(RowSuppression {
            probabilities,
            suppressed,
            threshold: Some(theta),
        });
    }

    let mut masked = logits.to_vec();
    for (x, &s) in masked.iter_mut().zip(&suppressed) {
        if s {
            *x = f64::NEG_INFINITY;
        }
    }
    softmax_in_place(&mut masked).map_err(|_| WasError::DegenerateRow { row: 0 })?;
    Ok(RowSuppression {
        probabilities: masked,
        suppressed,
        threshold: Some(theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: empirical mean and Welford sample variance.
    fn threshold_oracle(row: &[f64], gamma: f64) -> f64 {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &x) in row.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (x - mean);
        }
        mean - gamma * (m2 / (row.len() - 1) as f64).sqrt()
    }

    /// Zero out entries below the oracle threshold, divide by the survivor sum.
    fn renormalize_oracle(probs: &[f64], gamma: f64) -> (Vec<f64>, Vec<bool>) {
        let theta = threshold_oracle(probs, gamma);
        let suppressed: Vec<bool> = probs.iter().map(|&p| p < theta).collect();
        let kept: f64 = probs.iter().zip(&suppressed).filter(|(_, &s)| !s).map(|(p, _)| p).sum();
        let out = probs
            .iter()
            .zip(&suppressed)
            .map(|(&p, &s)| if s { 0.0 } else { p / kept })
            .collect();
        (out, suppressed)
    }

    fn ln(values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v.ln()).collect()
    }

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() < tol, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn uniform_row_threshold_is_one_over_l() {
        for gamma in [0.0, 0.3, 1.0] {
            assert_eq!(suppression_threshold(&[0.25; 4], gamma).unwrap(), 0.25);
        }
    }

    #[test]
    fn gamma_zero_gives_exactly_one_over_l() {
        let row = [0.1, 0.6, 0.3];
        assert_eq!(suppression_threshold(&row, 0.0).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn worked_threshold_example() {
        let row = [0.7, 0.2, 0.05, 0.05];
        let theta = suppression_threshold(&row, 0.5).unwrap();
        // deviations 0.45, -0.05, -0.2, -0.2 → Σ² = 0.285, δ = √0.095
        let exact = 0.25 - 0.5 * 0.095f64.sqrt();
        assert!((theta - exact).abs() < 1e-15);
        assert!((theta - threshold_oracle(&row, 0.5)).abs() < 1e-12);
        assert!((theta - 0.0958893).abs() < 1e-6);
    }

    #[test]
    fn single_entry_row_threshold_is_one() {
        assert_eq!(suppression_threshold(&[1.0], 0.7).unwrap(), 1.0);
    }

    #[test]
    fn unnormalized_row_is_contract_error() {
        assert!(matches!(
            suppression_threshold(&[0.5, 0.6], 0.5),
            Err(WasError::Contract(_))
        ));
        assert!(suppression_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn equal_logits_survive() {
        let r = suppress_row(&[1.3; 4], 0.5).unwrap();
        assert_eq!(r.probabilities, vec![0.25; 4]);
        assert_eq!(r.suppressed_count(), 0);
    }

    #[test]
    fn worked_row_gamma_half() {
        let probs = [0.7, 0.2, 0.05, 0.05];
        let r = suppress_row(&ln(&probs), 0.5).unwrap();
        assert_eq!(r.suppressed, vec![false, false, true, true]);
        assert_close(&r.probabilities, &[7.0 / 9.0, 2.0 / 9.0, 0.0, 0.0], 1e-12);
        let (oracle, mask) = renormalize_oracle(&probs, 0.5);
        assert_eq!(mask, r.suppressed);
        assert_close(&r.probabilities, &oracle, 1e-12);
        assert_eq!(r.probabilities[2], 0.0);
    }

    #[test]
    fn worked_row_gamma_zero() {
        let r = suppress_row(&ln(&[0.7, 0.2, 0.05, 0.05]), 0.0).unwrap();
        assert_eq!(r.suppressed, vec![false, true, true, true]);
        assert_eq!(r.probabilities, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn worked_row_gamma_one() {
        let probs = [0.4, 0.3, 0.15, 0.1, 0.05];
        let r = suppress_row(&ln(&probs), 1.0).unwrap();
        assert!((r.threshold.unwrap() - 0.054226).abs() < 1e-6);
        assert_eq!(r.suppressed, vec![false, false, false, false, true]);
        assert_close(
            &r.probabilities,
            &[0.4 / 0.95, 0.3 / 0.95, 0.15 / 0.95, 0.1 / 0.95, 0.0],
            1e-12,
        );
        assert_close(&r.probabilities, &[0.42105, 0.31579, 0.15789, 0.10526, 0.0], 1e-5);
    }

    #[test]
    fn all_masked_row_is_degenerate() {
        let row = [f64::NEG_INFINITY; 3];
        assert!(matches!(suppress_row(&row, 0.5), Err(WasError::DegenerateRow { .. })));
    }

    #[test]
    fn single_live_position_is_never_suppressed() {
        let r = suppress_row(&[f64::NEG_INFINITY, 2.0, f64::NEG_INFINITY], 0.0).unwrap();
        assert_eq!(r.probabilities, vec![0.0, 1.0, 0.0]);
        assert_eq!(r.suppressed_count(), 0);
        assert!(r.threshold.is_none());
    }

    #[test]
    fn context_masked_positions_use_effective_length() {
        let probs = [0.7, 0.2, 0.05, 0.05];
        let mut logits = ln(&probs);
        logits.insert(1, f64::NEG_INFINITY);
        logits.push(f64::NEG_INFINITY);
        let r = suppress_row(&logits, 0.5).unwrap();
        // identical to the unmasked row of length 4, masked slots untouched
        assert_eq!(r.suppressed, vec![false, false, false, true, true, false]);
        let expected = [7.0 / 9.0, 0.0, 2.0 / 9.0, 0.0, 0.0, 0.0];
        assert_close(&r.probabilities, &expected, 1e-12);
    }

    #[test]
    fn exact_tie_with_threshold_is_kept() {
        // γ = 0 makes θ = 1/L; entry equal to 1/L must survive.
        let probs = [0.5, 0.25, 0.125, 0.125];
        let r = suppress_row(&ln(&probs), 0.0).unwrap();
        assert_eq!(r.threshold, Some(0.25));
        assert!(!r.suppressed[1]);
        assert!(r.suppressed[2] && r.suppressed[3]);
    }

    #[test]
    fn non_strict_fault_suppresses_uniform_rows_entirely() {
        let res = suppress_row_with(&[0.0; 4], 0.5, 2, ThresholdComparison::NonStrict);
        assert!(matches!(res, Err(WasError::DegenerateRow { .. })));
    }

    #[test]
    fn min_length_disables_short_rows() {
        let logits = ln(&[0.7, 0.2, 0.05, 0.05]);
        let r = suppress_row_with(&logits, 0.5, 5, ThresholdComparison::Strict).unwrap();
        assert_eq!(r.suppressed_count(), 0);
    }
}
