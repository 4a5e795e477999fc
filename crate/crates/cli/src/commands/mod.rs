mod analyze;
mod sweep;
mod train;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::args::{RunArgs, ScaleDimArg};
use crate::config::RunConfig;
use crate::error::CliError;

pub use analyze::analyze;
pub use sweep::sweep_gamma;
pub use train::demo_train;
pub use verify::{gradcheck, oracle_check};

/// Loads the run configuration, applies overrides, validates it and
/// resolves the output directory.
fn prepare(
    run: &RunArgs,
    gamma: Option<f64>,
    updates: Option<usize>,
    scale_dim: Option<ScaleDimArg>,
) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(run.config.as_deref())?;
    cfg.apply(gamma, updates, scale_dim.map(Into::into));
    cfg.validate()?;
    Ok((cfg, resolve(&run.out)?))
}

fn resolve(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Comma-separated values; an empty or blank string gives an empty list.
fn parse_list<T: FromStr>(flag: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::invalid(format!("{flag}: cannot parse {s:?}"))))
        .collect()
}

fn check_gamma(gamma: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(CliError::invalid(format!("gamma {gamma} outside [0, 1]")))
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let fail = |source| CliError::Output {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(fail)?;
    }
    fs::write(path, contents).map_err(fail)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(was_core::WasError::from)?;
    text.push('\n');
    write_file(path, text)
}

/// 64-bit FNV-1a digest, hex encoded, used to identify checkpoints in
/// manifests.
fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_parse_and_allow_empty() {
        assert_eq!(parse_list::<usize>("--layers", "1, 4").unwrap(), vec![1, 4]);
        assert!(parse_list::<usize>("--layers", "").unwrap().is_empty());
        assert!(matches!(parse_list::<usize>("--layers", "1,x"), Err(CliError::Invalid(_))));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64(b"a"), "af63dc4c8601ec8c");
    }
}
