use crate::attention::SuppressionMask;
use crate::{Result, WasError};

/// Suppression masks of one utterance, indexed `[layer - 1][head]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceMasks {
    pub id: String,
    pub layers: Vec<Vec<SuppressionMask>>,
}

impl UtteranceMasks {
    pub fn new(id: impl Into<String>, layers: Vec<Vec<SuppressionMask>>) -> Self {
        UtteranceMasks { id: id.into(), layers }
    }

    /// Heads of `layer` (1-based), checked to share one shape.
    pub fn layer(&self, layer: usize) -> Result<&[SuppressionMask]> {
        let heads = self
            .layers
            .get(layer.wrapping_sub(1))
            .ok_or_else(|| WasError::contract(format!("layer {layer} outside 1..={}", self.layers.len())))?;
        let first = heads
            .first()
            .ok_or_else(|| WasError::contract(format!("layer {layer} has no heads")))?;
        let shape = (first.rows(), first.cols());
        if let Some(bad) = heads.iter().find(|m| (m.rows(), m.cols()) != shape) {
            return Err(WasError::contract(format!(
                "head {} of layer {layer} is {}x{}, head 0 is {}x{}",
                bad.head,
                bad.rows(),
                bad.cols(),
                shape.0,
                shape.1
            )));
        }
        Ok(heads)
    }
}

/// `f(j)` for one layer of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct SuppressionProfile {
    pub layer: usize,
    /// `Σᵢ Σₖ s[i][j]` per key position.
    pub counts: Vec<u64>,
    /// `L · H`.
    pub denominator: u64,
    pub values: Vec<f64>,
}

/// `fᵢ(j)` over a corpus for one query position, on relative offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionProfile {
    pub layer: usize,
    pub position: usize,
    pub heads: usize,
    /// Utterances long enough to contain the query position.
    pub retained: usize,
    /// Offsets `j − i` with at least one contributing utterance, ascending.
    pub offsets: Vec<i64>,
    /// Utterances contributing at each offset (the effective `N`).
    pub support: Vec<usize>,
    pub counts: Vec<u64>,
    pub values: Vec<f64>,
}

/// Mean suppression over all `(i, j, k, n)` of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSummary {
    pub layer: usize,
    pub suppressed: u64,
    pub total: u64,
    pub fraction: f64,
}

/// `f(j) = Σᵢ Σₖ s[i][j] / (L·H)` for every layer of an utterance.
pub fn profile_utterance(masks: &UtteranceMasks) -> Result<Vec<SuppressionProfile>> {
    (1..=masks.layers.len())
        .map(|layer| profile_layer(masks, layer))
        .collect()
}

/// [`profile_utterance`] for a single layer (1-based).
pub fn profile_layer(masks: &UtteranceMasks, layer: usize) -> Result<SuppressionProfile> {
    let heads = masks.layer(layer)?;
    let (rows, cols) = (heads[0].rows(), heads[0].cols());
    let mut counts = vec![0u64; cols];
    for m in heads {
        for i in 0..rows {
            for (c, &s) in counts.iter_mut().zip(m.row(i)) {
                *c += s as u64;
            }
        }
    }
    let denominator = (rows * heads.len()) as u64;
    let values = counts
        .iter()
        .map(|&c| if denominator == 0 { 0.0 } else { c as f64 / denominator as f64 })
        .collect();
    Ok(SuppressionProfile {
        layer,
        counts,
        denominator,
        values,
    })
}

/// `fᵢ(j) = Σₙ Σₖ s[i][j] / (N·H)` for query `position` (0-based) at
/// offsets `−half_window..=half_window`.
///
/// Utterances shorter than `position + 1` are dropped; at each offset `N`
/// counts only utterances where the key position exists. Offsets no
/// utterance covers are omitted.
pub fn profile_position(
    corpus: &[UtteranceMasks],
    position: usize,
    layer: usize,
    half_window: usize,
) -> Result<PositionProfile> {
    let width = 2 * half_window + 1;
    let mut counts = vec![0u64; width];
    let mut support = vec![0usize; width];
    let mut heads: Option<usize> = None;
    let mut retained = 0;

    for utt in corpus {
        let layer_masks = utt.layer(layer)?;
        match heads {
            None => heads = Some(layer_masks.len()),
            Some(h) if h != layer_masks.len() => {
                return Err(WasError::contract(format!(
                    "utterance {} has {} heads at layer {layer}, expected {h}",
                    utt.id,
                    layer_masks.len()
                )));
            }
            Some(_) => {}
        }
        let (rows, cols) = (layer_masks[0].rows(), layer_masks[0].cols());
        if position >= rows {
            continue;
        }
        retained += 1;
        for (slot, (count, n)) in counts.iter_mut().zip(support.iter_mut()).enumerate() {
            let Some(key) = (position + slot).checked_sub(half_window) else {
                continue;
            };
            if key >= cols {
                continue;
            }
            *n += 1;
            *count += layer_masks.iter().filter(|m| m.get(position, key)).count() as u64;
        }
    }

    if retained == 0 {
        return Err(WasError::EmptyProfile { position });
    }
    let heads = heads.unwrap_or(0);
    let mut profile = PositionProfile {
        layer,
        position,
        heads,
        retained,
        offsets: Vec::new(),
        support: Vec::new(),
        counts: Vec::new(),
        values: Vec::new(),
    };
    for slot in 0..width {
        if support[slot] == 0 {
            continue;
        }
        profile.offsets.push(slot as i64 - half_window as i64);
        profile.support.push(support[slot]);
        profile.counts.push(counts[slot]);
        profile
            .values
            .push(counts[slot] as f64 / (support[slot] * heads) as f64);
    }
    Ok(profile)
}

/// Suppressed fraction over every query, key, head and utterance of a layer.
pub fn layer_fraction(corpus: &[UtteranceMasks], layer: usize) -> Result<LayerSummary> {
    if corpus.is_empty() {
        return Err(WasError::contract("layer fraction of an empty corpus"));
    }
    let (mut suppressed, mut total) = (0u64, 0u64);
    for utt in corpus {
        for m in utt.layer(layer)? {
            suppressed += m.count();
            total += (m.rows() * m.cols()) as u64;
        }
    }
    let fraction = if total == 0 { 0.0 } else { suppressed as f64 / total as f64 };
    Ok(LayerSummary {
        layer,
        suppressed,
        total,
        fraction,
    })
}
