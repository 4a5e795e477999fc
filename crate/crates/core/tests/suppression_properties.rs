use proptest::prelude::*;
use was_core::attention::{suppress_row, suppression_threshold};
use was_core::numerics::Matrix;

/// Zero-and-renormalize reference with a mean/sample-std threshold.
fn reference(logits: &[f64], gamma: f64) -> (Vec<f64>, Vec<bool>, Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let n = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / n;
    let var = probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let theta = mean - gamma * var.sqrt();
    let suppressed: Vec<bool> = probs.iter().map(|&p| p < theta).collect();
    let kept: f64 = probs.iter().zip(&suppressed).filter(|(_, s)| !**s).map(|(p, _)| p).sum();
    let out = probs
        .iter()
        .zip(&suppressed)
        .map(|(&p, &s)| if s { 0.0 } else { p / kept })
        .collect();
    (out, suppressed, probs, theta)
}

/// Masks agree except on entries within rounding distance of the threshold.
fn masks_agree(a: &[bool], b: &[bool], probs: &[f64], theta: f64) -> bool {
    (0..a.len()).all(|j| a[j] == b[j] || (probs[j] - theta).abs() < 1e-13)
}

fn row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, 2..=128)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn two_step_matches_zero_and_renormalize(logits in row(), gamma in 0.0f64..=1.0) {
        let got = suppress_row(&logits, gamma).unwrap();
        let (want, mask, _, _) = reference(&logits, gamma);
        prop_assume!(got.suppressed == mask);
        for (a, b) in got.probabilities.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn masks_match_reference(logits in row(), gamma in 0.0f64..=1.0) {
        let got = suppress_row(&logits, gamma).unwrap();
        let (_, mask, probs, theta) = reference(&logits, gamma);
        prop_assert!(masks_agree(&got.suppressed, &mask, &probs, theta));
    }

    #[test]
    fn threshold_matches_sample_std(logits in row(), gamma in 0.0f64..=1.0) {
        let (_, _, probs, theta) = reference(&logits, gamma);
        let got = suppression_threshold(&probs, gamma).unwrap();
        prop_assert!((got - theta).abs() <= 1e-12);
        let uniform = suppression_threshold(&probs, 0.0).unwrap();
        prop_assert!((uniform - 1.0 / probs.len() as f64).abs() <= 1e-15);
    }

    #[test]
    fn at_least_one_entry_survives(logits in row(), gamma in 0.0f64..=1.0) {
        let got = suppress_row(&logits, gamma).unwrap();
        prop_assert!(got.suppressed_count() < logits.len());
        let total: f64 = got.probabilities.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for (p, s) in got.probabilities.iter().zip(&got.suppressed) {
            prop_assert!((0.0..=1.0).contains(p));
            if *s {
                prop_assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn suppression_count_falls_as_gamma_rises(logits in row(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at_lo = suppress_row(&logits, lo).unwrap();
        let at_hi = suppress_row(&logits, hi).unwrap();
        prop_assert!(at_hi.suppressed_count() <= at_lo.suppressed_count());
        for (h, l) in at_hi.suppressed.iter().zip(&at_lo.suppressed) {
            prop_assert!(!h | l, "suppressed at larger gamma but kept at smaller");
        }
    }

    #[test]
    fn adding_a_constant_changes_nothing(logits in row(), gamma in 0.0f64..=1.0, shift in -50.0f64..50.0) {
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let a = suppress_row(&logits, gamma).unwrap();
        let b = suppress_row(&shifted, gamma).unwrap();
        let (_, _, probs, theta) = reference(&logits, gamma);
        prop_assert!(masks_agree(&a.suppressed, &b.suppressed, &probs, theta));
        prop_assume!(a.suppressed == b.suppressed);
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn survivors_keep_their_order(logits in row(), gamma in 0.0f64..=1.0) {
        let got = suppress_row(&logits, gamma).unwrap();
        for i in 0..logits.len() {
            for j in 0..logits.len() {
                if logits[i] > logits[j] {
                    prop_assert!(!got.suppressed[i] || got.suppressed[j]);
                    if !got.suppressed[j] {
                        prop_assert!(got.probabilities[i] >= got.probabilities[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_matches_triple_loop(
        (n, k, m) in (1usize..=64, 1usize..=64, 1usize..=64),
        seed in any::<u64>(),
    ) {
        let mut rng = was_core::numerics::Rng::new(seed);
        let a = rng.normal_matrix(n, k, 1.0);
        let b = rng.normal_matrix(k, m, 1.0);
        let c = a.matmul(&b).unwrap();
        for i in 0..n {
            for j in 0..m {
                let mut want = 0.0;
                for t in 0..k {
                    want += a.get(i, t) * b.get(t, j);
                }
                prop_assert!((c.get(i, j) - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in prop::collection::vec(row(), 1..6), shift in -100.0f64..100.0) {
        let width = rows.iter().map(Vec::len).min().unwrap();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r[..width].to_vec()).collect();
        let m = Matrix::from_rows(&rows);
        let p = m.softmax_rows().unwrap();
        let q = m.map(|x| x + shift).softmax_rows().unwrap();
        for i in 0..p.rows() {
            let total: f64 = p.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for (a, b) in p.row(i).iter().zip(q.row(i)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn worked_row_threshold() {
    let theta = suppression_threshold(&[0.7, 0.2, 0.05, 0.05], 0.5).unwrap();
    assert!((theta - 0.0958893).abs() < 1e-6, "{theta}");
    let (_, _, _, reference_theta) = reference(&[0.7f64.ln(), 0.2f64.ln(), 0.05f64.ln(), 0.05f64.ln()], 0.5);
    assert!((theta - reference_theta).abs() < 1e-12);
}
