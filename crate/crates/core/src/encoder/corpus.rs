//! Feature sequences, the synthetic "phone" corpus and feature file I/O.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};
use crate::{Result, WasError};

/// Class index reserved for silence in the synthetic corpus.
pub const SILENCE_CLASS: usize = 0;

const WASF_MAGIC: &[u8; 4] = b"WASF";

/// Time × feature matrix for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub frames: Matrix,
    pub frame_rate_ms: f64,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Features with one class target per input frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub features: FeatureSequence,
    pub targets: Vec<usize>,
}

impl Utterance {
    /// Targets at the subsampled rate: output frame `t` takes the label of
    /// input frame `t·stride + stride/2`. Trailing frames that do not fill a
    /// whole stack are dropped, as in the frontend.
    pub fn aligned_targets(&self, stride: usize) -> Vec<usize> {
        let out_len = self.targets.len() / stride.max(1);
        (0..out_len).map(|t| self.targets[t * stride + stride / 2]).collect()
    }
}

/// Parameters of the synthetic corpus.
///
/// Each utterance is a sequence of piecewise-constant segments. Phone classes
/// `1..classes` emit frames around a per-class Gaussian prototype; silence
/// (class 0) emits near-zero frames. Utterances start and end in silence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub utterances: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Total classes including silence.
    pub classes: usize,
    pub feature_dim: usize,
    /// Probability that an interior segment is silence.
    pub silence_rate: f64,
    pub min_segment: usize,
    pub max_segment: usize,
    /// Per-frame Gaussian noise around a phone prototype.
    pub noise_std: f64,
    pub silence_std: f64,
    pub frame_rate_ms: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            utterances: 32,
            min_frames: 60,
            max_frames: 120,
            classes: 8,
            feature_dim: 16,
            silence_rate: 0.25,
            min_segment: 4,
            max_segment: 12,
            noise_std: 0.5,
            silence_std: 0.05,
            frame_rate_ms: 10.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(WasError::config("corpus needs silence plus at least one phone class"));
        }
        if self.feature_dim == 0 {
            return Err(WasError::config("feature_dim must be positive"));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(WasError::config(format!(
                "invalid utterance length range {}..={}",
                self.min_frames, self.max_frames
            )));
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment {
            return Err(WasError::config(format!(
                "invalid segment length range {}..={}",
                self.min_segment, self.max_segment
            )));
        }
        if !(0.0..=1.0).contains(&self.silence_rate) {
            return Err(WasError::config("silence_rate must lie in [0, 1]"));
        }
        if !(self.noise_std >= 0.0 && self.silence_std >= 0.0) {
            return Err(WasError::config("noise levels must be non-negative"));
        }
        Ok(())
    }
}

/// Stream ids used by the corpus sit above this base, away from the streams
/// training draws from the same seed.
const CORPUS_STREAM_BASE: u64 = 1 << 48;

/// Class prototypes for a corpus seed; row `c` is the mean of class `c`.
fn prototypes(config: &CorpusConfig, seed: u64) -> Matrix {
    let mut rng = Rng::stream(seed, CORPUS_STREAM_BASE);
    let mut protos = rng.normal_matrix(config.classes, config.feature_dim, 1.0);
    protos.row_mut(SILENCE_CLASS).fill(0.0);
    protos
}

/// Utterance `index` of the corpus identified by `seed`. Every utterance has
/// its own random stream, so corpora of different sizes share a prefix and
/// held-out utterances can be drawn from indices past the training set.
pub fn synthetic_utterance(config: &CorpusConfig, seed: u64, index: usize) -> Utterance {
    let protos = prototypes(config, seed);
    make_utterance(config, &protos, seed, index)
}

fn make_utterance(config: &CorpusConfig, protos: &Matrix, seed: u64, index: usize) -> Utterance {
    let mut rng = Rng::stream(seed, CORPUS_STREAM_BASE + index as u64 + 1);
    let len = rng.int_range(config.min_frames, config.max_frames);

    let mut labels = Vec::with_capacity(len);
    let mut first = true;
    while labels.len() < len {
        let seg = rng.int_range(config.min_segment, config.max_segment);
        let class = if first || rng.bernoulli(config.silence_rate) {
            SILENCE_CLASS
        } else {
            rng.int_range(1, config.classes - 1)
        };
        first = false;
        labels.extend(std::iter::repeat_n(class, seg));
    }
    labels.truncate(len);
    // closing silence
    let tail = config.min_segment.min(len / 4);
    for l in labels.iter_mut().skip(len - tail) {
        *l = SILENCE_CLASS;
    }

    let frames = Matrix::from_fn(len, config.feature_dim, |t, d| {
        let class = labels[t];
        let std = if class == SILENCE_CLASS {
            config.silence_std
        } else {
            config.noise_std
        };
        protos.get(class, d) + std * rng.normal()
    });
    Utterance {
        features: FeatureSequence {
            id: format!("utt{index:04}"),
            frames,
            frame_rate_ms: config.frame_rate_ms,
        },
        targets: labels,
    }
}

/// Utterances `start..start + count` of the corpus for `seed`.
pub fn synthetic_range(config: &CorpusConfig, seed: u64, start: usize, count: usize) -> Vec<Utterance> {
    let protos = prototypes(config, seed);
    (start..start + count)
        .map(|n| make_utterance(config, &protos, seed, n))
        .collect()
}

/// The first `config.utterances` utterances for `seed`.
pub fn synthetic_corpus(config: &CorpusConfig, seed: u64) -> Vec<Utterance> {
    synthetic_range(config, seed, 0, config.utterances)
}

/// Writes `WASF` binary features: magic, frame count and feature dimension as
/// little-endian `u32`, then the values as little-endian `f32`, row-major.
pub fn write_wasf<W: Write>(mut out: W, frames: &Matrix) -> Result<()> {
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| WasError::format("WASF features", format!("dimension {n} exceeds u32")))
    };
    out.write_all(WASF_MAGIC)?;
    out.write_all(&dim(frames.rows())?.to_le_bytes())?;
    out.write_all(&dim(frames.cols())?.to_le_bytes())?;
    for &v in frames.as_slice() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_wasf<R: Read>(mut input: R) -> Result<Matrix> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != WASF_MAGIC {
        return Err(WasError::format("WASF features", "missing WASF header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(WasError::format(
            "WASF features",
            format!("{} payload bytes for {rows}x{cols} values", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// CSV features with header `f0,f1,…`; one frame per line.
pub fn write_feature_csv<W: Write>(mut out: W, frames: &Matrix) -> Result<()> {
    let header: Vec<String> = (0..frames.cols()).map(|d| format!("f{d}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for t in 0..frames.rows() {
        let row: Vec<String> = frames.row(t).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_feature_csv<R: Read>(mut input: R) -> Result<Matrix> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| WasError::format("feature CSV", "empty file"))?;
    let cols = header.split(',').count();
    for (d, name) in header.split(',').enumerate() {
        if name.trim() != format!("f{d}") {
            return Err(WasError::format(
                "feature CSV",
                format!("header column {d} is {name:?}, expected \"f{d}\""),
            ));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in lines.enumerate() {
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != cols {
            return Err(WasError::format(
                "feature CSV",
                format!("line {} has {} fields, expected {cols}", n + 2, values.len()),
            ));
        }
        for v in values {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| WasError::format("feature CSV", format!("bad number {v:?} on line {}", n + 2)))?;
            if !x.is_finite() {
                return Err(WasError::format("feature CSV", format!("non-finite value on line {}", n + 2)));
            }
            data.push(x);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_prefix_stable() {
        let cfg = CorpusConfig::default();
        let a = synthetic_corpus(&cfg, 5);
        let b = synthetic_corpus(&cfg, 5);
        assert_eq!(a, b);
        let extra = synthetic_range(&cfg, 5, 0, cfg.utterances + 4);
        assert_eq!(&extra[..cfg.utterances], &a[..]);
        assert_eq!(synthetic_utterance(&cfg, 5, 3), a[3]);
    }

    #[test]
    fn utterances_respect_config() {
        let cfg = CorpusConfig::default();
        for u in synthetic_corpus(&cfg, 1) {
            let len = u.features.len();
            assert!((cfg.min_frames..=cfg.max_frames).contains(&len));
            assert_eq!(u.targets.len(), len);
            assert_eq!(u.features.feature_dim(), cfg.feature_dim);
            assert!(u.targets.iter().all(|&c| c < cfg.classes));
            assert_eq!(u.targets[0], SILENCE_CLASS);
            assert_eq!(*u.targets.last().unwrap(), SILENCE_CLASS);
            assert!(u.features.frames.is_finite());
        }
    }

    #[test]
    fn target_alignment_drops_trailing_frame() {
        let u = Utterance {
            features: FeatureSequence {
                id: "x".into(),
                frames: Matrix::zeros(11, 1),
                frame_rate_ms: 10.0,
            },
            targets: (0..11).collect(),
        };
        assert_eq!(u.aligned_targets(2), vec![1, 3, 5, 7, 9]);
        assert_eq!(u.aligned_targets(1), (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn wasf_round_trip_is_f32_exact() {
        let m = Matrix::from_rows(&[[0.5, -1.25, 3.0], [1e-3, 7.0, -0.0]]);
        let mut buf = Vec::new();
        write_wasf(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"WASF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 12 + 6 * 4);
        let back = read_wasf(&buf[..]).unwrap();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn wasf_rejects_truncation() {
        let mut buf = Vec::new();
        write_wasf(&mut buf, &Matrix::zeros(2, 2)).unwrap();
        buf.pop();
        assert!(read_wasf(&buf[..]).is_err());
        assert!(read_wasf(&b"WASX\0\0\0\0\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let m = Matrix::from_rows(&[[0.1, 2.0], [-3.5, 1.0 / 3.0]]);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &m).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("f0,f1\n"));
        assert_eq!(read_feature_csv(&buf[..]).unwrap(), m);
    }

    #[test]
    fn feature_csv_rejects_bad_header_and_ragged_rows() {
        assert!(read_feature_csv(&b"a,b\n1,2\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,f1\n1\n"[..]).is_err());
    }
}
