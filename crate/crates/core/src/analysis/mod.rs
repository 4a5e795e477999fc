//! Suppression statistics over trained-model masks.
//!
//! All statistics accumulate integer counts and divide once, so results do
//! not depend on the order utterances are processed in.

mod export;
mod stats;

use rayon::prelude::*;

use crate::encoder::{encoder_forward, EncoderParams, FeatureSequence};
use crate::Result;

pub use export::{export_profile, parse_profile_csv, points_csv, profile_csv, profile_svg, ProfileFormat, ProfileSeries};
pub use stats::{
    layer_fraction, profile_layer, profile_position, profile_utterance, LayerSummary, PositionProfile,
    SuppressionProfile, UtteranceMasks,
};

/// Half-width of the relative-offset window for position profiles.
pub const DEFAULT_HALF_WINDOW: usize = 100;

/// Runs the encoder (dropout off) over every sequence and keeps its masks.
pub fn collect_masks(params: &EncoderParams, sequences: &[FeatureSequence]) -> Result<Vec<UtteranceMasks>> {
    sequences
        .par_iter()
        .map(|seq| {
            let out = encoder_forward(seq, params)?;
            Ok(UtteranceMasks::new(seq.id.clone(), out.masks))
        })
        .collect()
}

/// [`layer_fraction`] for every layer.
pub fn layer_summaries(corpus: &[UtteranceMasks]) -> Result<Vec<LayerSummary>> {
    let layers = corpus.first().map_or(0, |u| u.layers.len());
    (1..=layers).map(|l| layer_fraction(corpus, l)).collect()
}
