//! Finite-difference check of encoder gradients.
//!
//! Suppression masks are taken from the unperturbed forward pass and held
//! fixed for every perturbed evaluation, matching the backward pass, which
//! treats the mask as a constant.

use crate::attention::{ContextWindow, SuppressionMask, WasConfig};
use crate::numerics::{Matrix, Rng, Tape};
use crate::Result;

use super::corpus::{synthetic_utterance, CorpusConfig, Utterance};
use super::model::{record_encoder, record_training_loss, EncoderParams, ForwardOptions};
use super::EncoderConfig;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-6;

/// Largest relative error accepted per parameter group.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Agreement for one parameter matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    /// `‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞)`; zero when
    /// both vanish.
    pub relative_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub suppressed: u64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.groups.iter().map(|g| g.relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error() < tolerance
    }
}

/// Loss with every suppression mask pinned, no dropout.
fn pinned_loss(params: &EncoderParams, utt: &Utterance, masks: &[Vec<SuppressionMask>]) -> Result<f64> {
    let cfg = params.config();
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let mut rng = Rng::new(0);
    let mut opts = ForwardOptions {
        training: false,
        rng: &mut rng,
        frozen_masks: Some(masks),
    };
    let graph = record_encoder(&mut tape, params, &vars, &utt.features.frames, &mut opts)?;
    let targets = utt.aligned_targets(cfg.frontend_stride);
    let loss = record_training_loss(&mut tape, graph.logits, &graph.aux_logits, &targets, cfg.aux_weight)?;
    Ok(tape.value(loss).as_slice()[0])
}

/// Compares tape gradients with central differences for every parameter.
///
/// `corrupt` adds a deliberate error to one analytic gradient entry, so
/// callers can confirm that the check fails when it should.
pub fn gradient_check(params: &EncoderParams, utt: &Utterance, step: f64, corrupt: bool) -> Result<GradCheckReport> {
    let cfg = params.config();
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, true);
    let mut rng = Rng::new(0);
    let mut opts = ForwardOptions {
        training: false,
        rng: &mut rng,
        frozen_masks: None,
    };
    let graph = record_encoder(&mut tape, params, &vars, &utt.features.frames, &mut opts)?;
    let targets = utt.aligned_targets(cfg.frontend_stride);
    let loss_var = record_training_loss(&mut tape, graph.logits, &graph.aux_logits, &targets, cfg.aux_weight)?;
    let loss = tape.value(loss_var).as_slice()[0];
    let grads = tape.backward(loss_var)?;
    let masks = graph.masks;
    let suppressed = masks.iter().flatten().map(SuppressionMask::count).sum();

    let mut probe = params.clone();
    let mut groups = Vec::with_capacity(vars.len());
    for (slot, (name, &var)) in params.names().zip(&vars).enumerate() {
        let shape = params.values()[slot].shape();
        let mut analytic = grads
            .get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1));
        if corrupt && slot == 0 {
            let bump = 1e-2 * (1.0 + analytic.max_abs());
            analytic.as_mut_slice()[0] += bump;
        }
        let mut numeric = Matrix::zeros(shape.0, shape.1);
        for k in 0..analytic.len() {
            let original = probe.values()[slot].as_slice()[k];
            probe.values_mut()[slot].as_mut_slice()[k] = original + step;
            let up = pinned_loss(&probe, utt, &masks)?;
            probe.values_mut()[slot].as_mut_slice()[k] = original - step;
            let down = pinned_loss(&probe, utt, &masks)?;
            probe.values_mut()[slot].as_mut_slice()[k] = original;
            numeric.as_mut_slice()[k] = (up - down) / (2.0 * step);
        }
        let scale = analytic.max_abs().max(numeric.max_abs());
        let diff = analytic.sub(&numeric)?.max_abs();
        groups.push(GroupError {
            name: name.to_string(),
            relative_error: if scale == 0.0 { 0.0 } else { diff / scale },
            max_abs_gradient: analytic.max_abs(),
        });
    }
    Ok(GradCheckReport {
        loss,
        suppressed,
        groups,
    })
}

/// A named small model for [`gradcheck_suite`].
#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub name: &'static str,
    pub config: EncoderConfig,
}

/// Small models (`d_model ≤ 32`, at most 8 positions after subsampling)
/// with suppression off, moderate, maximal, and under a context window.
pub fn gradcheck_cases() -> Vec<GradCheckCase> {
    let base = EncoderConfig {
        input_dim: 4,
        num_layers: 2,
        d_model: 16,
        ffn_dim: 24,
        heads: 2,
        aux_tap_layers: vec![1],
        output_classes: 4,
        ..EncoderConfig::default()
    };
    vec![
        GradCheckCase {
            name: "was-disabled",
            config: EncoderConfig {
                was: WasConfig::disabled(),
                ..base.clone()
            },
        },
        GradCheckCase {
            name: "gamma-0.5",
            config: EncoderConfig {
                was: WasConfig::with_gamma(0.5),
                ..base.clone()
            },
        },
        GradCheckCase {
            name: "gamma-0",
            config: EncoderConfig {
                was: WasConfig::with_gamma(0.0),
                ..base.clone()
            },
        },
        GradCheckCase {
            name: "gamma-0.5-window",
            config: EncoderConfig {
                d_model: 32,
                heads: 4,
                window: ContextWindow::new(Some(2), Some(1)),
                ..base
            },
        },
    ]
}

/// Utterance used by the gradient checks: 12 to 16 frames, so 6 to 8
/// positions after subsampling by 2.
pub fn gradcheck_utterance(config: &EncoderConfig, seed: u64) -> Utterance {
    let corpus = CorpusConfig {
        utterances: 1,
        min_frames: 12,
        max_frames: 16,
        classes: config.output_classes,
        feature_dim: config.input_dim,
        min_segment: 2,
        max_segment: 4,
        ..CorpusConfig::default()
    };
    synthetic_utterance(&corpus, seed, 0)
}

/// Runs [`gradient_check`] on every case of [`gradcheck_cases`].
pub fn gradcheck_suite(seed: u64, corrupt: bool) -> Result<Vec<(&'static str, GradCheckReport)>> {
    gradcheck_cases()
        .into_iter()
        .map(|case| {
            let params = EncoderParams::init(&case.config, &mut Rng::new(seed))?;
            let utt = gradcheck_utterance(&case.config, seed);
            Ok((case.name, gradient_check(&params, &utt, GRADCHECK_STEP, corrupt)?))
        })
        .collect()
}
