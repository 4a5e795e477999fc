use rayon::prelude::*;

use crate::numerics::{Matrix, Rng, Tape};
use crate::{Result, WasError};

use super::corpus::Utterance;
use super::model::{argmax_rows, encoder_forward, record_encoder, record_training_loss, EncoderParams, ForwardOptions};
use super::{AdamConfig, EncoderConfig, TrainConfig};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u32,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let (p, g) = (p.as_mut_slice(), g.as_slice());
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// Loss and parameter gradients for one utterance.
#[derive(Debug)]
pub struct UtteranceGradient {
    pub loss: f64,
    /// In parameter order; zeros where the loss does not depend on a slot.
    pub grads: Vec<Matrix>,
    pub suppressed: u64,
}

/// Forward and backward pass for one utterance.
pub fn utterance_gradient(
    params: &EncoderParams,
    utt: &Utterance,
    training: bool,
    rng: &mut Rng,
) -> Result<UtteranceGradient> {
    let cfg = params.config();
    let targets = utt.aligned_targets(cfg.frontend_stride);
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, true);
    let mut opts = ForwardOptions {
        training,
        rng,
        frozen_masks: None,
    };
    let graph = record_encoder(&mut tape, params, &vars, &utt.features.frames, &mut opts)?;
    let loss = record_training_loss(&mut tape, graph.logits, &graph.aux_logits, &targets, cfg.aux_weight)?;
    let mut g = tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(params.values())
        .map(|(&v, m)| g.take(v).unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    let suppressed = graph.masks.iter().flatten().map(|m| m.count()).sum();
    Ok(UtteranceGradient {
        loss: tape.value(loss).as_slice()[0],
        grads,
        suppressed,
    })
}

/// Mean training loss over a corpus, without dropout.
pub fn corpus_loss(params: &EncoderParams, corpus: &[Utterance]) -> Result<f64> {
    let cfg = params.config();
    let losses: Vec<f64> = corpus
        .par_iter()
        .map(|u| {
            let out = encoder_forward(&u.features, params)?;
            super::model::training_loss(
                &out.logits,
                &out.aux_logits,
                &u.aligned_targets(cfg.frontend_stride),
                cfg.aux_weight,
            )
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Fraction of subsampled frames whose main-classifier argmax equals the
/// target.
pub fn frame_accuracy(params: &EncoderParams, corpus: &[Utterance]) -> Result<f64> {
    let stride = params.config().frontend_stride;
    let counts: Vec<(usize, usize)> = corpus
        .par_iter()
        .map(|u| {
            let out = encoder_forward(&u.features, params)?;
            let targets = u.aligned_targets(stride);
            let hits = argmax_rows(&out.logits)
                .iter()
                .zip(&targets)
                .filter(|(p, t)| p == t)
                .count();
            Ok((hits, targets.len()))
        })
        .collect::<Result<_>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(hits as f64 / total.max(1) as f64)
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub update: usize,
    pub lr: f64,
    /// Mean loss of the update's batch, before the step.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub trace: Vec<TraceRow>,
    /// Corpus loss at initialization and after the last update, dropout off.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains a freshly initialized encoder.
///
/// Parameters come from `Rng::new(seed)`. Batches walk a per-epoch shuffle
/// of the corpus (stream 1 of `seed`). Each utterance of each update draws
/// dropout from its own stream, and per-utterance gradients are summed in
/// batch order, so the result does not depend on thread scheduling.
pub fn train(corpus: &[Utterance], config: &EncoderConfig, train: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let params = EncoderParams::init(config, &mut Rng::new(seed))?;
    train_from(params, corpus, train, seed)
}

/// Continues training from existing parameters.
pub fn train_from(
    mut params: EncoderParams,
    corpus: &[Utterance],
    train: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(WasError::config("training corpus is empty"));
    }
    train.validate()?;
    params.config().validate()?;

    let initial_loss = corpus_loss(&params, corpus)?;
    let mut adam = Adam::new(train.optimizer.clone(), params.values());
    let mut order_rng = Rng::stream(seed, 1);
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(train.updates);

    for update in 0..train.updates {
        let mut batch = Vec::with_capacity(train.batch_size);
        while batch.len() < train.batch_size {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                order_rng.shuffle(&mut order);
                order.reverse();
            }
            batch.push(order.pop().expect("refilled above"));
        }

        let results: Vec<UtteranceGradient> = batch
            .par_iter()
            .enumerate()
            .map(|(b, &u)| {
                let mut rng = Rng::stream(seed, ((update as u64 + 1) << 20) | b as u64);
                utterance_gradient(&params, &corpus[u], true, &mut rng)
            })
            .collect::<Result<_>>()?;

        let scale = 1.0 / results.len() as f64;
        let mut grads: Vec<Matrix> = params.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        let mut loss = 0.0;
        for r in &results {
            loss += r.loss * scale;
            for (acc, g) in grads.iter_mut().zip(&r.grads) {
                acc.accumulate(&g.scale(scale))?;
            }
        }
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(WasError::Divergence { update, loss });
        }

        let lr = train.schedule.lr(update);
        adam.step(params.values_mut(), &grads, lr);
        trace.push(TraceRow { update, lr, loss });
    }

    let final_loss = corpus_loss(&params, corpus)?;
    if !final_loss.is_finite() {
        return Err(WasError::Divergence {
            update: train.updates,
            loss: final_loss,
        });
    }
    Ok(TrainOutcome {
        params,
        trace,
        initial_loss,
        final_loss,
    })
}
