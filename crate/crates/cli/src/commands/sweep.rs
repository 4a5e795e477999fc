use std::fmt::Write as _;
use std::io::Write;

use was_core::analysis::{collect_masks, layer_summaries};
use was_core::encoder::corpus::synthetic_corpus;
use was_core::encoder::{frame_accuracy, load_checkpoint, train, FeatureSequence};

use super::{check_gamma, parse_list, prepare, write_file};
use crate::args::SweepArgs;
use crate::error::{input, CliError};

pub const SWEEP_FILE: &str = "sweep.csv";

/// One gamma: toy-task frame accuracy and per-layer suppression fractions
/// on the seeded corpus.
pub fn sweep_gamma(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let gammas: Vec<f64> = parse_list("--gamma", &args.gamma)?;
    if gammas.is_empty() {
        return Err(CliError::invalid("--gamma needs at least one value"));
    }
    for &g in &gammas {
        check_gamma(g)?;
    }
    let (cfg, dir) = prepare(&args.run, None, args.updates, args.scale_dim)?;
    let seed = args.run.seed;
    let fixed = match &args.checkpoint {
        Some(path) => {
            let params = input(path, load_checkpoint(path))?;
            let enc = params.config();
            if enc.input_dim != cfg.corpus.feature_dim || enc.output_classes != cfg.corpus.classes {
                return Err(CliError::invalid(format!(
                    "checkpoint expects {} features and {} classes, corpus has {} and {}",
                    enc.input_dim, enc.output_classes, cfg.corpus.feature_dim, cfg.corpus.classes
                )));
            }
            Some(params)
        }
        None => None,
    };
    let corpus = synthetic_corpus(&cfg.corpus, seed);
    let sequences: Vec<FeatureSequence> = corpus.iter().map(|u| u.features.clone()).collect();

    let num_layers = fixed.as_ref().map_or(cfg.encoder.num_layers, |p| p.config().num_layers);
    let mut csv = String::from("gamma,accuracy");
    for l in 1..=num_layers {
        let _ = write!(csv, ",layer{l}");
    }
    csv.push('\n');

    let mode = if fixed.is_some() { "fixed checkpoint" } else { "train per gamma" };
    let _ = writeln!(out, "mode: {mode}; {} utterances", corpus.len());
    for &gamma in &gammas {
        let params = match &fixed {
            Some(p) => {
                let mut p = p.clone();
                let mut was = p.config().was.clone();
                was.gamma = gamma;
                was.enabled = true;
                p.set_was(was)?;
                p
            }
            None => {
                let mut enc = cfg.encoder.clone();
                enc.was.gamma = gamma;
                enc.was.enabled = true;
                train(&corpus, &enc, &cfg.training, seed)?.params
            }
        };
        let accuracy = frame_accuracy(&params, &corpus)?;
        let summaries = layer_summaries(&collect_masks(&params, &sequences)?)?;
        let _ = write!(csv, "{gamma},{accuracy}");
        let _ = write!(out, "gamma {gamma:<5} accuracy {accuracy:.4}  fractions");
        for s in &summaries {
            let _ = write!(csv, ",{}", s.fraction);
            let _ = write!(out, " {:.4}", s.fraction);
        }
        csv.push('\n');
        let _ = writeln!(out);
    }
    write_file(&dir.join(SWEEP_FILE), csv)?;
    let _ = writeln!(out, "wrote {}", dir.join(SWEEP_FILE).display());
    Ok(())
}
