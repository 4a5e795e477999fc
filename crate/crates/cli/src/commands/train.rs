use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;
use was_core::encoder::corpus::synthetic_corpus;
use was_core::encoder::{checkpoint_bytes, train, TraceRow};

use super::{fnv1a64, prepare, write_file, write_json};
use crate::args::TrainArgs;
use crate::config::RunConfig;
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.wasm1";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Serialize)]
struct TrainManifest<'a> {
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    initial_loss: f64,
    final_loss: f64,
    checkpoint: &'static str,
    checkpoint_fnv1a64: String,
    loss_trace: &'static str,
}

pub fn loss_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("update,lr,loss\n");
    for row in trace {
        let _ = writeln!(out, "{},{},{}", row.update, row.lr, row.loss);
    }
    out
}

pub fn demo_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, dir) = prepare(&args.run, args.gamma, args.updates, args.scale_dim)?;
    let seed = args.run.seed;
    let corpus = synthetic_corpus(&cfg.corpus, seed);
    let outcome = train(&corpus, &cfg.encoder, &cfg.training, seed)?;

    let bytes = checkpoint_bytes(&outcome.params)?;
    write_file(&dir.join(CHECKPOINT_FILE), &bytes)?;
    write_file(&dir.join(LOSS_FILE), loss_csv(&outcome.trace))?;
    write_json(
        &dir.join("manifest.json"),
        &TrainManifest {
            command: "demo-train",
            seed,
            config: &cfg,
            initial_loss: outcome.initial_loss,
            final_loss: outcome.final_loss,
            checkpoint: CHECKPOINT_FILE,
            checkpoint_fnv1a64: fnv1a64(&bytes),
            loss_trace: LOSS_FILE,
        },
    )?;

    let reduction = 1.0 - outcome.final_loss / outcome.initial_loss;
    let _ = writeln!(out, "utterances {}  updates {}", corpus.len(), cfg.training.updates);
    let _ = writeln!(out, "initial loss {:.6}", outcome.initial_loss);
    let _ = writeln!(out, "final loss   {:.6}", outcome.final_loss);
    let _ = writeln!(out, "reduction    {:.2}%", 100.0 * reduction);
    let _ = writeln!(out, "wrote {}", dir.display());
    Ok(())
}
