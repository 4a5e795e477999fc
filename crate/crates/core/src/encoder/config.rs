use serde::{Deserialize, Serialize};

use crate::attention::{ContextWindow, ScaleDim, WasConfig};
use crate::{Result, WasError};

/// Shape of the toy transformer encoder.
///
/// Layers are numbered from 1. An auxiliary tap at layer `l` projects the
/// output of layer `l` to the output classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Feature dimension of the input frames.
    pub input_dim: usize,
    pub num_layers: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub heads: usize,
    pub frontend_stride: usize,
    pub aux_tap_layers: Vec<usize>,
    pub aux_weight: f64,
    pub output_classes: usize,
    pub window: ContextWindow,
    pub was: WasConfig,
    pub scale_dim: ScaleDim,
    pub layer_norm_epsilon: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_dim: 16,
            num_layers: 4,
            d_model: 64,
            ffn_dim: 256,
            heads: 4,
            frontend_stride: 2,
            aux_tap_layers: vec![2],
            aux_weight: 0.3,
            output_classes: 8,
            window: ContextWindow::unbounded(),
            was: WasConfig::default(),
            scale_dim: ScaleDim::Head,
            layer_norm_epsilon: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("d_model", self.d_model),
            ("ffn_dim", self.ffn_dim),
            ("heads", self.heads),
            ("frontend_stride", self.frontend_stride),
            ("output_classes", self.output_classes),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(WasError::config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(WasError::config(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        if !(0.0..=1.0).contains(&self.aux_weight) {
            return Err(WasError::config(format!(
                "aux_weight must lie in [0, 1], got {}",
                self.aux_weight
            )));
        }
        for &tap in &self.aux_tap_layers {
            if tap < 1 || tap >= self.num_layers {
                return Err(WasError::config(format!(
                    "auxiliary tap layer {tap} outside [1, {})",
                    self.num_layers
                )));
            }
        }
        let mut sorted = self.aux_tap_layers.clone();
        sorted.dedup();
        if sorted.len() != self.aux_tap_layers.len() || !sorted.is_sorted() {
            return Err(WasError::config("aux_tap_layers must be strictly increasing"));
        }
        if self.layer_norm_epsilon.is_nan() || self.layer_norm_epsilon <= 0.0 {
            return Err(WasError::config("layer_norm_epsilon must be positive"));
        }
        self.was.validate()
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn attention_scale(&self) -> f64 {
        self.scale_dim.factor(self.d_model, self.heads)
    }
}

/// Warm-up / hold / decay learning-rate schedule.
///
/// Linear rise from `floor_lr` to `peak_lr` over `warmup_updates`, constant
/// `peak_lr` for `hold_updates`, then exponential decay reaching `floor_lr`
/// after `decay_updates` more updates and staying there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub warmup_updates: usize,
    pub hold_updates: usize,
    pub decay_updates: usize,
    pub peak_lr: f64,
    pub floor_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warmup_updates: 20,
            hold_updates: 40,
            decay_updates: 60,
            peak_lr: 2e-3,
            floor_lr: 1e-5,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_lr > 0.0 && self.peak_lr >= self.floor_lr && self.peak_lr.is_finite()) {
            return Err(WasError::config(format!(
                "learning rates need 0 < floor_lr <= peak_lr, got floor {} peak {}",
                self.floor_lr, self.peak_lr
            )));
        }
        Ok(())
    }

    /// Learning rate for update `t` (0-based).
    pub fn lr(&self, t: usize) -> f64 {
        let (floor, peak) = (self.floor_lr, self.peak_lr);
        if t < self.warmup_updates {
            return floor + (peak - floor) * t as f64 / self.warmup_updates as f64;
        }
        let t = t - self.warmup_updates;
        if t < self.hold_updates {
            return peak;
        }
        let t = t - self.hold_updates;
        if t >= self.decay_updates {
            return floor;
        }
        peak * (floor / peak).powf(t as f64 / self.decay_updates as f64)
    }
}

/// Adam constants; the defaults are the usual `β₁ = 0.9`, `β₂ = 0.999`,
/// `ε = 1e-8`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Everything the training loop needs besides the corpus and model shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub updates: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            updates: 120,
            batch_size: 8,
            schedule: LrSchedule::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(WasError::config("batch_size must be positive"));
        }
        let adam = &self.optimizer;
        if !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) || adam.epsilon.is_nan() || adam.epsilon <= 0.0 {
            return Err(WasError::config("optimizer needs betas in [0, 1) and epsilon > 0"));
        }
        self.schedule.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        EncoderConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn large_shape_is_valid() {
        let cfg = EncoderConfig {
            input_dim: 80,
            num_layers: 24,
            d_model: 512,
            ffn_dim: 2048,
            heads: 8,
            aux_tap_layers: vec![6, 12, 18],
            ..EncoderConfig::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = EncoderConfig::default();
        let cases = [
            EncoderConfig { heads: 3, ..base.clone() },
            EncoderConfig { aux_weight: 1.5, ..base.clone() },
            EncoderConfig { aux_tap_layers: vec![0], ..base.clone() },
            EncoderConfig { aux_tap_layers: vec![4], ..base.clone() },
            EncoderConfig { aux_tap_layers: vec![2, 1], ..base.clone() },
            EncoderConfig { frontend_stride: 0, ..base.clone() },
            EncoderConfig { was: WasConfig::with_gamma(2.0), ..base.clone() },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(WasError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn schedule_landmarks() {
        let s = LrSchedule {
            warmup_updates: 10,
            hold_updates: 5,
            decay_updates: 20,
            peak_lr: 1e-3,
            floor_lr: 1e-5,
        };
        assert_eq!(s.lr(0), 1e-5);
        assert_eq!(s.lr(10), 1e-3);
        assert!((s.lr(5) - (1e-5 + 1e-3) / 2.0).abs() < 1e-18);
        assert_eq!(s.lr(14), 1e-3);
        assert_eq!(s.lr(15), 1e-3);
        assert!((s.lr(35) - 1e-5).abs() < 1e-18);
        assert_eq!(s.lr(1000), 1e-5);
        // geometric midpoint of the decay
        assert!((s.lr(25) - (1e-3f64 * 1e-5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_continuous_at_boundaries() {
        let s = LrSchedule {
            warmup_updates: 1000,
            hold_updates: 500,
            decay_updates: 4000,
            peak_lr: 1e-3,
            floor_lr: 1e-5,
        };
        let step = (s.peak_lr - s.floor_lr) / 1000.0;
        for boundary in [1000usize, 1500, 5500] {
            let jump = (s.lr(boundary) - s.lr(boundary - 1)).abs();
            assert!(jump <= step * 1.0001, "jump {jump} at {boundary}");
        }
    }

    #[test]
    fn monotone_rise_and_fall() {
        let s = LrSchedule::default();
        for t in 1..s.warmup_updates {
            assert!(s.lr(t) > s.lr(t - 1));
        }
        let start = s.warmup_updates + s.hold_updates;
        for t in start + 1..start + s.decay_updates {
            assert!(s.lr(t) < s.lr(t - 1));
        }
    }
}
