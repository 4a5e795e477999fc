use proptest::prelude::*;
use was_core::analysis::{
    collect_masks, layer_fraction, layer_summaries, profile_layer, profile_position, profile_utterance, UtteranceMasks,
};
use was_core::attention::{suppress_row, was_attention, AttentionMode, ContextWindow, SuppressionMask, WasConfig};
use was_core::encoder::corpus::synthetic_corpus;
use was_core::encoder::{CorpusConfig, EncoderConfig, EncoderParams, FeatureSequence};
use was_core::numerics::Rng;
use was_core::oracle;

/// `s[n][l][k][i][j]` drawn directly, then wrapped as masks.
fn fixture(seed: u64) -> Vec<UtteranceMasks> {
    oracle::random_mask_corpus(&mut Rng::new(seed), 2, 4, 5, 8)
}

/// Quadruple loop over `(n, k, i, j)` with integer hit counts.
fn brute_fraction(corpus: &[UtteranceMasks], layer: usize) -> f64 {
    let (mut hits, mut cells) = (0u64, 0u64);
    for utt in corpus {
        for m in &utt.layers[layer - 1] {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    hits += u64::from(m.get(i, j));
                    cells += 1;
                }
            }
        }
    }
    hits as f64 / cells as f64
}

#[test]
fn statistics_equal_loop_oracles_exactly() {
    for seed in 0..300 {
        let corpus = fixture(seed);
        for layer in 1..=2 {
            assert_eq!(layer_fraction(&corpus, layer).unwrap().fraction, brute_fraction(&corpus, layer));
            for utt in &corpus {
                assert_eq!(profile_layer(utt, layer).unwrap().values, oracle::profile_layer(utt, layer));
            }
            for position in 0..8 {
                let slow = oracle::profile_position(&corpus, position, layer, 100);
                match profile_position(&corpus, position, layer, 100) {
                    Ok(p) => {
                        let fast: Vec<(i64, f64)> = p.offsets.iter().copied().zip(p.values.iter().copied()).collect();
                        assert_eq!(fast, slow, "seed {seed} layer {layer} position {position}");
                    }
                    Err(_) => assert!(slow.is_empty()),
                }
            }
        }
    }
}

#[test]
fn hand_fixture() {
    let corpus = vec![UtteranceMasks::new("u", vec![vec![SuppressionMask::from_rows(&[&[0, 1], &[0, 0]])]])];
    assert_eq!(profile_utterance(&corpus[0]).unwrap()[0].values, vec![0.0, 0.5]);
    assert_eq!(layer_fraction(&corpus, 1).unwrap().fraction, 0.25);
}

proptest! {
    #[test]
    fn statistics_ignore_utterance_order(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let corpus = fixture(seed);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        Rng::new(shuffle_seed).shuffle(&mut order);
        let shuffled: Vec<UtteranceMasks> = order.iter().map(|&n| corpus[n].clone()).collect();
        for layer in 1..=2 {
            prop_assert_eq!(layer_fraction(&corpus, layer).unwrap(), layer_fraction(&shuffled, layer).unwrap());
            for position in 0..8 {
                let a = profile_position(&corpus, position, layer, 100).ok();
                let b = profile_position(&shuffled, position, layer, 100).ok();
                prop_assert_eq!(a.map(|p| (p.offsets, p.values)), b.map(|p| (p.offsets, p.values)));
            }
        }
    }

    #[test]
    fn statistics_stay_in_unit_interval(seed in any::<u64>()) {
        let corpus = fixture(seed);
        for layer in 1..=2 {
            let f = layer_fraction(&corpus, layer).unwrap().fraction;
            prop_assert!((0.0..=1.0).contains(&f));
            for utt in &corpus {
                for v in profile_layer(utt, layer).unwrap().values {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}

#[test]
fn layer_fraction_matches_row_by_row_suppression() {
    let (len, width, utterances) = (100, 16, 1000);
    let config = WasConfig::with_gamma(0.5);
    let window = ContextWindow::unbounded();
    let mode = AttentionMode {
        config: &config,
        window: &window,
        training: false,
    };
    let scale = 1.0 / (width as f64).sqrt();
    let mut corpus = Vec::with_capacity(utterances);
    let (mut hits, mut rows) = (0usize, 0usize);
    for n in 0..utterances {
        let mut rng = Rng::stream(23, n as u64);
        let q = rng.normal_matrix(len, width, 1.0);
        let k = rng.normal_matrix(len, width, 1.0);
        let v = rng.normal_matrix(len, width, 1.0);
        let out = was_attention(&q, &k, &v, scale, mode, &mut Rng::new(0)).unwrap();
        let logits = q.matmul(&k.transpose()).unwrap().scale(scale);
        for i in 0..len {
            hits += suppress_row(logits.row(i), 0.5).unwrap().suppressed_count();
            rows += 1;
        }
        let mut mask = out.mask;
        mask.layer = 1;
        corpus.push(UtteranceMasks::new(format!("u{n}"), vec![vec![mask]]));
    }
    assert!(rows >= 100_000);
    let monte_carlo = hits as f64 / (rows * len) as f64;
    let summary = layer_fraction(&corpus, 1).unwrap();
    assert!((summary.fraction - monte_carlo).abs() < 1e-12);
    assert!(summary.fraction <= (len as f64 - 1.0) / len as f64);
    assert!(summary.fraction > 0.0);
}

#[test]
fn trained_model_statistics_are_deterministic_and_bounded() {
    let cfg = EncoderConfig {
        input_dim: 6,
        num_layers: 3,
        d_model: 16,
        ffn_dim: 32,
        heads: 2,
        aux_tap_layers: vec![1],
        output_classes: 5,
        ..EncoderConfig::default()
    };
    let corpus_cfg = CorpusConfig {
        utterances: 6,
        classes: 5,
        feature_dim: 6,
        ..CorpusConfig::default()
    };
    let params = EncoderParams::init(&cfg, &mut Rng::new(24)).unwrap();
    let seqs: Vec<FeatureSequence> = synthetic_corpus(&corpus_cfg, 25).into_iter().map(|u| u.features).collect();
    let a = collect_masks(&params, &seqs).unwrap();
    let b = collect_masks(&params, &seqs).unwrap();
    assert_eq!(a, b);
    let summaries = layer_summaries(&a).unwrap();
    assert_eq!(summaries.len(), 3);
    let max_len = seqs.iter().map(|s| s.frames.rows() / 2).max().unwrap() as f64;
    for s in summaries {
        assert!(s.fraction <= (max_len - 1.0) / max_len);
    }
    let p = profile_position(&a, 10, 3, 100).unwrap();
    assert_eq!(p.retained, 6);
    assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
}
