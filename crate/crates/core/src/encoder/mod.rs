//! Toy transformer acoustic encoder with WAS attention.
//!
//! Frame-stacking frontend (stride 2 halves the frame rate), a stack of
//! pre-norm transformer layers, auxiliary linear+ReLU taps on intermediate
//! layers, a linear classifier, and an Adam training loop driven by a
//! warm-up/hold/decay learning-rate schedule.

mod checkpoint;
mod config;
pub mod corpus;
mod gradcheck;
mod model;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, params_from_bytes, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{AdamConfig, EncoderConfig, LrSchedule, TrainConfig};
pub use gradcheck::{
    gradcheck_cases, gradcheck_suite, gradcheck_utterance, gradient_check, GradCheckCase, GradCheckReport, GroupError,
    GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use corpus::{CorpusConfig, FeatureSequence, Utterance};
pub use model::{
    argmax_rows, encoder_forward, frontend_subsample, record_encoder, record_frontend, record_training_loss,
    record_transformer_layer, stack_frames, training_loss, transformer_layer_forward, EncoderGraph, EncoderOutput,
    EncoderParams, ForwardOptions,
};
pub use train::{
    corpus_loss, frame_accuracy, train, train_from, utterance_gradient, Adam, TraceRow, TrainOutcome,
    UtteranceGradient,
};
