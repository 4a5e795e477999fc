use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use was_core::analysis::{
    collect_masks, layer_summaries, points_csv, profile_csv, profile_layer, profile_position, profile_svg,
    LayerSummary, ProfileSeries, UtteranceMasks, DEFAULT_HALF_WINDOW,
};
use was_core::encoder::corpus::{read_feature_csv, read_wasf, synthetic_corpus};
use was_core::encoder::{checkpoint_bytes, load_checkpoint, EncoderParams, FeatureSequence};
use was_core::{oracle, WasError};

use super::{check_gamma, fnv1a64, parse_list, resolve, write_file, write_json};
use crate::args::AnalyzeArgs;
use crate::config::RunConfig;
use crate::error::{input, CliError};

#[derive(Serialize)]
struct LayerEntry {
    layer: usize,
    suppressed: u64,
    total: u64,
    fraction: f64,
}

impl From<&LayerSummary> for LayerEntry {
    fn from(s: &LayerSummary) -> Self {
        LayerEntry {
            layer: s.layer,
            suppressed: s.suppressed,
            total: s.total,
            fraction: s.fraction,
        }
    }
}

#[derive(Serialize)]
struct AnalyzeManifest {
    command: &'static str,
    /// As given on the command line.
    checkpoint: String,
    checkpoint_fnv1a64: String,
    gamma: f64,
    suppression_enabled: bool,
    /// `None` when features came from files.
    corpus_seed: Option<u64>,
    utterances: usize,
    layers: Vec<usize>,
    positions: Vec<usize>,
    skipped_positions: Vec<usize>,
    half_window: usize,
    layer_summaries: Vec<LayerEntry>,
    files: Vec<String>,
}

/// A profile CSV as written, with the same table recomputed by the loop
/// reference for golden files.
struct Rendered {
    path: String,
    fast: String,
    reference: String,
}

fn load_features(paths: &[PathBuf], frame_rate_ms: f64) -> Result<Vec<FeatureSequence>, CliError> {
    paths
        .iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            let frames = if bytes.starts_with(b"WASF") {
                read_wasf(bytes.as_slice())
            } else {
                read_feature_csv(bytes.as_slice())
            };
            let frames = input(path, frames)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "features".into());
            Ok(FeatureSequence {
                id,
                frames,
                frame_rate_ms,
            })
        })
        .collect()
}

fn select_layers(requested: Option<&str>, num_layers: usize) -> Result<Vec<usize>, CliError> {
    let layers: Vec<usize> = match requested {
        Some(text) => parse_list("--layers", text)?,
        None => BTreeSet::from([1, num_layers]).into_iter().filter(|&l| l >= 1).collect(),
    };
    for &l in &layers {
        if l == 0 || l > num_layers {
            return Err(CliError::invalid(format!(
                "layer {l} out of range: valid layers are 1..={num_layers}"
            )));
        }
    }
    Ok(layers)
}

fn render_layer(masks: &[UtteranceMasks], layer: usize, rendered: &mut Vec<Rendered>) -> Result<String, CliError> {
    let mut series = Vec::with_capacity(masks.len());
    for utt in masks {
        let profile = profile_layer(utt, layer)?;
        let reference: Vec<(i64, f64)> = oracle::profile_layer(utt, layer)
            .into_iter()
            .enumerate()
            .map(|(j, v)| (j as i64, v))
            .collect();
        rendered.push(Rendered {
            path: format!("profiles/layer{layer}/{}.csv", utt.id),
            fast: profile_csv(&profile),
            reference: points_csv("position", &reference),
        });
        series.push((utt.id.as_str(), profile.points()));
    }
    Ok(profile_svg(&format!("layer {layer}: suppression by key position"), &series))
}

pub fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.run.config.as_deref())?;
    let dir = resolve(&args.run.out)?;
    let checkpoint = resolve(&args.checkpoint)?;
    let mut params: EncoderParams = input(&checkpoint, load_checkpoint(&checkpoint))?;
    if let Some(g) = args.gamma {
        check_gamma(g)?;
        let mut was = params.config().was.clone();
        was.gamma = g;
        was.enabled = true;
        params.set_was(was)?;
    }
    let enc = params.config().clone();
    let layers = select_layers(args.layers.as_deref(), enc.num_layers)?;
    let positions: Vec<usize> = parse_list("--positions", &args.positions)?;

    let (sequences, corpus_seed) = if args.features.is_empty() {
        cfg.corpus.validate()?;
        if cfg.corpus.feature_dim != enc.input_dim {
            return Err(CliError::invalid(format!(
                "corpus.feature_dim {} differs from the checkpoint's input_dim {}",
                cfg.corpus.feature_dim, enc.input_dim
            )));
        }
        let corpus = synthetic_corpus(&cfg.corpus, args.run.seed);
        (corpus.into_iter().map(|u| u.features).collect(), Some(args.run.seed))
    } else {
        (load_features(&args.features, cfg.corpus.frame_rate_ms)?, None)
    };
    let masks = match collect_masks(&params, &sequences) {
        Err(e @ (WasError::Dimension { .. } | WasError::EmptyOutput { .. })) => {
            return Err(CliError::invalid(e.to_string()));
        }
        other => other?,
    };
    let summaries = layer_summaries(&masks)?;

    let mut rendered = Vec::new();
    let mut svgs = Vec::new();
    let mut skipped = BTreeSet::new();
    for &layer in &layers {
        svgs.push((format!("profiles/layer{layer}.svg"), render_layer(&masks, layer, &mut rendered)?));
        let mut series = Vec::new();
        for &position in &positions {
            match profile_position(&masks, position, layer, DEFAULT_HALF_WINDOW) {
                Ok(p) => {
                    let reference = oracle::profile_position(&masks, position, layer, DEFAULT_HALF_WINDOW);
                    rendered.push(Rendered {
                        path: format!("positions/layer{layer}_pos{position}.csv"),
                        fast: profile_csv(&p),
                        reference: points_csv("offset", &reference),
                    });
                    series.push((format!("query {position}"), p.points()));
                }
                Err(WasError::EmptyProfile { .. }) => {
                    skipped.insert(position);
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !series.is_empty() {
            let refs: Vec<(&str, Vec<(i64, f64)>)> = series.iter().map(|(l, p)| (l.as_str(), p.clone())).collect();
            svgs.push((
                format!("positions/layer{layer}.svg"),
                profile_svg(&format!("layer {layer}: suppression by offset from the query"), &refs),
            ));
        }
    }
    for position in &skipped {
        eprintln!("warning: no utterance reaches query position {position}; skipped");
    }

    let mut files = Vec::new();
    for r in &rendered {
        write_file(&dir.join(&r.path), &r.fast)?;
        files.push(r.path.clone());
    }
    for (path, svg) in &svgs {
        write_file(&dir.join(path), svg)?;
        files.push(path.clone());
    }
    let ckpt_bytes = checkpoint_bytes(&params)?;
    write_json(
        &dir.join("manifest.json"),
        &AnalyzeManifest {
            command: "analyze",
            checkpoint: args.checkpoint.display().to_string(),
            checkpoint_fnv1a64: fnv1a64(&ckpt_bytes),
            gamma: enc.was.gamma,
            suppression_enabled: enc.was.enabled,
            corpus_seed,
            utterances: sequences.len(),
            layers: layers.clone(),
            positions: positions.clone(),
            skipped_positions: skipped.iter().copied().collect(),
            half_window: DEFAULT_HALF_WINDOW,
            layer_summaries: summaries.iter().map(LayerEntry::from).collect(),
            files: files.clone(),
        },
    )?;

    let _ = writeln!(out, "utterances {}  layers {}", sequences.len(), enc.num_layers);
    for s in &summaries {
        let _ = writeln!(out, "layer {:>2}: suppressed fraction {:.6} ({} of {})", s.layer, s.fraction, s.suppressed, s.total);
    }
    if let (Some(first), Some(last)) = (summaries.first(), summaries.last()) {
        if summaries.len() > 1 {
            if last.fraction > 0.0 {
                let _ = writeln!(
                    out,
                    "layer {} : layer {} suppression ratio {:.3}",
                    first.layer,
                    last.layer,
                    first.fraction / last.fraction
                );
            } else {
                let _ = writeln!(out, "layer {} : layer {} suppression ratio undefined", first.layer, last.layer);
            }
        }
    }
    let _ = writeln!(out, "wrote {} files to {}", files.len() + 1, dir.display());

    if let Some(golden) = &args.golden {
        let golden = resolve(golden)?;
        if args.bless {
            for r in &rendered {
                write_file(&golden.join(&r.path), &r.reference)?;
            }
            let _ = writeln!(out, "blessed {} golden files in {}", rendered.len(), golden.display());
        } else {
            compare_golden(&golden, &rendered, out)?;
        }
    }

    if !layers.is_empty() && rendered.is_empty() {
        return Err(CliError::Failed("no profile could be produced".into()));
    }
    Ok(())
}

fn compare_golden(golden: &Path, rendered: &[Rendered], out: &mut dyn Write) -> Result<(), CliError> {
    let mut mismatched = Vec::new();
    for r in rendered {
        match fs::read_to_string(golden.join(&r.path)) {
            Ok(expected) if expected == r.fast => {}
            Ok(_) => mismatched.push(format!("{} differs", r.path)),
            Err(e) => mismatched.push(format!("{}: {e}", r.path)),
        }
    }
    if mismatched.is_empty() {
        let _ = writeln!(out, "golden: {} files match", rendered.len());
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "golden comparison failed for {} of {} files:\n  {}",
            mismatched.len(),
            rendered.len(),
            mismatched.join("\n  ")
        )))
    }
}
