use crate::attention::{record_multi_head, AttentionMode, AttentionVars, SuppressionMask};
use crate::numerics::{Matrix, Rng, Tape, Var};
use crate::{Result, WasError};

use super::corpus::FeatureSequence;
use super::EncoderConfig;

#[derive(Clone, Copy, Debug)]
enum Init {
    Gaussian(f64),
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

#[derive(Clone, Debug)]
struct LayerSlots {
    ln1_gain: usize,
    ln1_bias: usize,
    heads: Vec<[usize; 3]>,
    w_o: usize,
    ln2_gain: usize,
    ln2_bias: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
}

/// Parameter order of an encoder. This order is the checkpoint order:
///
/// 1. `frontend.w`, `frontend.b`
/// 2. per layer `l`: `layer{l}.ln1.gain`, `layer{l}.ln1.bias`, then for each
///    head `h`: `layer{l}.head{h}.w_q`, `.w_k`, `.w_v`; `layer{l}.attn.w_o`,
///    `layer{l}.ln2.gain`, `layer{l}.ln2.bias`, `layer{l}.ffn.w1`,
///    `layer{l}.ffn.b1`, `layer{l}.ffn.w2`, `layer{l}.ffn.b2`
/// 3. per tap layer `t`: `tap{t}.w`, `tap{t}.b`
/// 4. `classifier.w`, `classifier.b`
#[derive(Clone, Debug)]
struct Layout {
    slots: Vec<Slot>,
    frontend_w: usize,
    frontend_b: usize,
    layers: Vec<LayerSlots>,
    taps: Vec<(usize, usize)>,
    out_w: usize,
    out_b: usize,
}

impl Layout {
    fn new(cfg: &EncoderConfig) -> Self {
        let mut slots = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, init: Init| {
            slots.push(Slot { name, rows, cols, init });
            slots.len() - 1
        };
        let glorot = |fan_in: usize| Init::Gaussian(1.0 / (fan_in as f64).sqrt());

        let (d, f) = (cfg.d_model, cfg.ffn_dim);
        let stacked = cfg.input_dim * cfg.frontend_stride;
        let frontend_w = add("frontend.w".into(), stacked, d, glorot(stacked));
        let frontend_b = add("frontend.b".into(), 1, d, Init::Zeros);

        let d_head = cfg.d_head();
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 1..=cfg.num_layers {
            let ln1_gain = add(format!("layer{l}.ln1.gain"), 1, d, Init::Ones);
            let ln1_bias = add(format!("layer{l}.ln1.bias"), 1, d, Init::Zeros);
            let heads = (0..cfg.heads)
                .map(|h| {
                    ["w_q", "w_k", "w_v"].map(|w| add(format!("layer{l}.head{h}.{w}"), d, d_head, glorot(d)))
                })
                .collect();
            let w_o = add(format!("layer{l}.attn.w_o"), d_head * cfg.heads, d, glorot(d));
            let ln2_gain = add(format!("layer{l}.ln2.gain"), 1, d, Init::Ones);
            let ln2_bias = add(format!("layer{l}.ln2.bias"), 1, d, Init::Zeros);
            let ffn_w1 = add(format!("layer{l}.ffn.w1"), d, f, glorot(d));
            let ffn_b1 = add(format!("layer{l}.ffn.b1"), 1, f, Init::Zeros);
            let ffn_w2 = add(format!("layer{l}.ffn.w2"), f, d, glorot(f));
            let ffn_b2 = add(format!("layer{l}.ffn.b2"), 1, d, Init::Zeros);
            layers.push(LayerSlots {
                ln1_gain,
                ln1_bias,
                heads,
                w_o,
                ln2_gain,
                ln2_bias,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
            });
        }

        let c = cfg.output_classes;
        let taps = cfg
            .aux_tap_layers
            .iter()
            .map(|t| {
                (
                    add(format!("tap{t}.w"), d, c, glorot(d)),
                    add(format!("tap{t}.b"), 1, c, Init::Zeros),
                )
            })
            .collect();
        let out_w = add("classifier.w".into(), d, c, glorot(d));
        let out_b = add("classifier.b".into(), 1, c, Init::Zeros);

        Layout {
            slots,
            frontend_w,
            frontend_b,
            layers,
            taps,
            out_w,
            out_b,
        }
    }
}

/// All trainable matrices of an encoder together with its configuration.
#[derive(Clone, Debug)]
pub struct EncoderParams {
    config: EncoderConfig,
    layout: Layout,
    values: Vec<Matrix>,
}

impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl EncoderParams {
    /// Random initialization: Gaussian weights with variance `1/fan_in`,
    /// zero biases, unit layer-norm gains.
    pub fn init(config: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let values = layout
            .slots
            .iter()
            .map(|s| match s.init {
                Init::Gaussian(std) => rng.normal_matrix(s.rows, s.cols, std),
                Init::Zeros => Matrix::zeros(s.rows, s.cols),
                Init::Ones => Matrix::filled(s.rows, s.cols, 1.0),
            })
            .collect();
        Ok(EncoderParams {
            config: config.clone(),
            layout,
            values,
        })
    }

    /// Rebuilds parameters from values in layout order.
    pub fn from_values(config: &EncoderConfig, values: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        if values.len() != layout.slots.len() {
            return Err(WasError::contract(format!(
                "{} matrices for {} parameter slots",
                values.len(),
                layout.slots.len()
            )));
        }
        for (slot, v) in layout.slots.iter().zip(&values) {
            if v.shape() != (slot.rows, slot.cols) {
                return Err(WasError::Dimension {
                    op: "parameter slot",
                    left: v.shape(),
                    right: (slot.rows, slot.cols),
                });
            }
        }
        Ok(EncoderParams {
            config: config.clone(),
            layout,
            values,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Replaces the suppression settings without touching weights.
    pub fn set_was(&mut self, was: crate::attention::WasConfig) -> Result<()> {
        was.validate()?;
        self.config.was = was;
        Ok(())
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layout.slots.iter().map(|s| s.name.as_str())
    }

    /// Expected `(rows, cols)` of every slot, in order.
    pub(crate) fn shapes(config: &EncoderConfig) -> Vec<(usize, usize)> {
        Layout::new(config).slots.iter().map(|s| (s.rows, s.cols)).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = self.names().position(|n| n == name)?;
        Some(&mut self.values[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Registers every matrix on `tape`, as parameters or as constants.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.values
            .iter()
            .map(|m| {
                if trainable {
                    tape.param(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect()
    }
}

/// Stacks `stride` consecutive frames into one row; `⌊T/stride⌋` rows, the
/// remainder is dropped.
pub fn stack_frames(frames: &Matrix, stride: usize) -> Result<Matrix> {
    if stride == 0 {
        return Err(WasError::config("frontend stride must be positive"));
    }
    let out_len = frames.rows() / stride;
    if out_len == 0 {
        return Err(WasError::EmptyOutput {
            frames: frames.rows(),
            stride,
        });
    }
    let d = frames.cols();
    let data = frames.as_slice()[..out_len * stride * d].to_vec();
    Matrix::from_vec(out_len, stride * d, data)
}

/// Per-pass switches for [`record_encoder`].
pub struct ForwardOptions<'a> {
    pub training: bool,
    /// Dropout stream; only drawn from while training.
    pub rng: &'a mut Rng,
    /// Suppression masks to reuse instead of recomputing, indexed
    /// `[layer - 1][head]`.
    pub frozen_masks: Option<&'a [Vec<SuppressionMask>]>,
}

/// Recorded forward pass.
#[derive(Debug)]
pub struct EncoderGraph {
    pub frontend: Var,
    pub layer_outputs: Vec<Var>,
    pub logits: Var,
    pub aux_logits: Vec<Var>,
    /// `[layer - 1][head]`.
    pub masks: Vec<Vec<SuppressionMask>>,
}

/// Records the frame-stacking frontend: stack then project to `d_model`.
pub fn record_frontend(tape: &mut Tape, params: &EncoderParams, vars: &[Var], frames: &Matrix) -> Result<Var> {
    let cfg = &params.config;
    if frames.cols() != cfg.input_dim {
        return Err(WasError::Dimension {
            op: "frontend input",
            left: frames.shape(),
            right: (frames.rows(), cfg.input_dim),
        });
    }
    let stacked = tape.constant(stack_frames(frames, cfg.frontend_stride)?);
    let projected = tape.matmul(stacked, vars[params.layout.frontend_w])?;
    tape.add_row(projected, vars[params.layout.frontend_b])
}

/// Pre-norm transformer layer `l` (1-based):
/// `h = x + MHA(LN₁(x))`, `y = h + W₂ relu(W₁ LN₂(h) + b₁) + b₂`.
pub fn record_transformer_layer(
    tape: &mut Tape,
    params: &EncoderParams,
    vars: &[Var],
    layer: usize,
    x: Var,
    opts: &mut ForwardOptions<'_>,
) -> Result<(Var, Vec<SuppressionMask>)> {
    let cfg = &params.config;
    let slots = params
        .layout
        .layers
        .get(layer.wrapping_sub(1))
        .ok_or_else(|| WasError::contract(format!("layer {layer} outside 1..={}", cfg.num_layers)))?;
    let eps = cfg.layer_norm_epsilon;

    let normed = tape.layer_norm(x, vars[slots.ln1_gain], vars[slots.ln1_bias], eps)?;
    let attn_vars = AttentionVars {
        heads: slots.heads.iter().map(|h| (vars[h[0]], vars[h[1]], vars[h[2]])).collect(),
        w_o: vars[slots.w_o],
    };
    let mode = AttentionMode {
        config: &cfg.was,
        window: &cfg.window,
        training: opts.training,
    };
    let frozen = match opts.frozen_masks {
        Some(all) => Some(
            all.get(layer - 1)
                .ok_or_else(|| WasError::contract(format!("no frozen masks for layer {layer}")))?
                .as_slice(),
        ),
        None => None,
    };
    let (attended, mut masks) = record_multi_head(
        tape,
        normed,
        &attn_vars,
        cfg.attention_scale(),
        mode,
        opts.rng,
        frozen,
    )?;
    for m in &mut masks {
        m.layer = layer;
    }
    let h = tape.add(x, attended)?;

    let normed = tape.layer_norm(h, vars[slots.ln2_gain], vars[slots.ln2_bias], eps)?;
    let inner = tape.matmul(normed, vars[slots.ffn_w1])?;
    let inner = tape.add_row(inner, vars[slots.ffn_b1])?;
    let inner = tape.relu(inner);
    let outer = tape.matmul(inner, vars[slots.ffn_w2])?;
    let outer = tape.add_row(outer, vars[slots.ffn_b2])?;
    let y = tape.add(h, outer)?;
    Ok((y, masks))
}

/// Records the whole encoder on `tape`. `vars` come from
/// [`EncoderParams::record`] on the same tape.
pub fn record_encoder(
    tape: &mut Tape,
    params: &EncoderParams,
    vars: &[Var],
    frames: &Matrix,
    opts: &mut ForwardOptions<'_>,
) -> Result<EncoderGraph> {
    let cfg = &params.config;
    let frontend = record_frontend(tape, params, vars, frames)?;

    let mut x = frontend;
    let mut layer_outputs = Vec::with_capacity(cfg.num_layers);
    let mut masks = Vec::with_capacity(cfg.num_layers);
    let mut aux_logits = Vec::with_capacity(cfg.aux_tap_layers.len());
    for layer in 1..=cfg.num_layers {
        let (y, layer_masks) = record_transformer_layer(tape, params, vars, layer, x, opts)?;
        layer_outputs.push(y);
        masks.push(layer_masks);
        if let Some(t) = cfg.aux_tap_layers.iter().position(|&t| t == layer) {
            let (w, b) = params.layout.taps[t];
            let proj = tape.matmul(y, vars[w])?;
            let proj = tape.add_row(proj, vars[b])?;
            aux_logits.push(tape.relu(proj));
        }
        x = y;
    }

    let logits = tape.matmul(x, vars[params.layout.out_w])?;
    let logits = tape.add_row(logits, vars[params.layout.out_b])?;
    Ok(EncoderGraph {
        frontend,
        layer_outputs,
        logits,
        aux_logits,
        masks,
    })
}

/// Records `CE(main) + aux_weight · mean_t CE(tap_t)`.
pub fn record_training_loss(
    tape: &mut Tape,
    logits: Var,
    aux_logits: &[Var],
    targets: &[usize],
    aux_weight: f64,
) -> Result<Var> {
    let main = tape.cross_entropy(logits, targets)?;
    if aux_logits.is_empty() || aux_weight == 0.0 {
        return Ok(main);
    }
    let mut aux_total = tape.cross_entropy(aux_logits[0], targets)?;
    for &a in &aux_logits[1..] {
        let ce = tape.cross_entropy(a, targets)?;
        aux_total = tape.add(aux_total, ce)?;
    }
    let aux = tape.scale(aux_total, aux_weight / aux_logits.len() as f64);
    tape.add(main, aux)
}

/// Training loss on plain matrices.
pub fn training_loss(logits: &Matrix, aux_logits: &[Matrix], targets: &[usize], aux_weight: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let aux: Vec<Var> = aux_logits.iter().map(|a| tape.constant(a.clone())).collect();
    let loss = record_training_loss(&mut tape, l, &aux, targets, aux_weight)?;
    Ok(tape.value(loss).as_slice()[0])
}

/// Inference result of [`encoder_forward`].
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub logits: Matrix,
    pub aux_logits: Vec<Matrix>,
    /// `[layer - 1][head]`.
    pub masks: Vec<Vec<SuppressionMask>>,
}

/// Forward pass without dropout.
pub fn encoder_forward(seq: &FeatureSequence, params: &EncoderParams) -> Result<EncoderOutput> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let mut rng = Rng::new(0);
    let mut opts = ForwardOptions {
        training: false,
        rng: &mut rng,
        frozen_masks: None,
    };
    let graph = record_encoder(&mut tape, params, &vars, &seq.frames, &mut opts)?;
    Ok(EncoderOutput {
        logits: tape.value(graph.logits).clone(),
        aux_logits: graph.aux_logits.iter().map(|&a| tape.value(a).clone()).collect(),
        masks: graph.masks,
    })
}

/// Frontend output (stack and project) on plain matrices.
pub fn frontend_subsample(seq: &FeatureSequence, params: &EncoderParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let out = record_frontend(&mut tape, params, &vars, &seq.frames)?;
    Ok(tape.value(out).clone())
}

/// One transformer layer on plain matrices, without dropout.
pub fn transformer_layer_forward(
    x: &Matrix,
    params: &EncoderParams,
    layer: usize,
) -> Result<(Matrix, Vec<SuppressionMask>)> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let xv = tape.constant(x.clone());
    let mut rng = Rng::new(0);
    let mut opts = ForwardOptions {
        training: false,
        rng: &mut rng,
        frozen_masks: None,
    };
    let (y, masks) = record_transformer_layer(&mut tape, params, &vars, layer, xv, &mut opts)?;
    Ok((tape.value(y).clone(), masks))
}

/// Index of the largest entry per row.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}
