//! Slow reference implementations used to cross-check the fast paths.
//!
//! Each route here is written independently of the library code it checks:
//! the threshold uses the empirical mean with Welford's sample variance, and
//! suppression zeroes and re-normalizes probabilities instead of re-running
//! softmax on masked logits. The statistics are plain nested loops in `f64`.

use crate::analysis::{self, UtteranceMasks};
use crate::attention::{suppress_row_with, suppression_threshold, RowSuppression, SuppressionMask, ThresholdComparison};
use crate::numerics::Rng;
use crate::WasError;

/// Differences between routes closer than this to the threshold are treated
/// as rounding, not as disagreement.
const BOUNDARY_SLACK: f64 = 1e-13;

/// Tolerance on re-normalized probabilities between the two routes.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Threshold from the empirical mean and Welford sample variance.
pub fn threshold(probs: &[f64], gamma: f64) -> f64 {
    if probs.len() < 2 {
        return 1.0;
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in probs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    mean - gamma * (m2 / (probs.len() - 1) as f64).sqrt()
}

/// Plain softmax; `−∞` maps to zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&x| if x == f64::NEG_INFINITY { 0.0 } else { (x - max).exp() })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Reference suppression of one logit row.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRow {
    pub probabilities: Vec<f64>,
    pub suppressed: Vec<bool>,
    /// First-pass probabilities.
    pub initial: Vec<f64>,
    pub threshold: f64,
}

/// Softmax, threshold over the live entries, zero the suppressed ones and
/// divide by what remains.
pub fn suppress(logits: &[f64], gamma: f64) -> OracleRow {
    let initial = softmax(logits);
    let live: Vec<usize> = (0..logits.len())
        .filter(|&j| logits[j] != f64::NEG_INFINITY)
        .collect();
    let live_probs: Vec<f64> = live.iter().map(|&j| initial[j]).collect();
    let theta = threshold(&live_probs, gamma);
    let mut suppressed = vec![false; logits.len()];
    if live.len() >= 2 {
        for &j in &live {
            suppressed[j] = initial[j] < theta;
        }
    }
    let kept: f64 = (0..logits.len()).filter(|&j| !suppressed[j]).map(|j| initial[j]).sum();
    let probabilities = (0..logits.len())
        .map(|j| if suppressed[j] { 0.0 } else { initial[j] / kept })
        .collect();
    OracleRow {
        probabilities,
        suppressed,
        initial,
        threshold: theta,
    }
}

/// `f(j)` by direct summation of mask bits.
pub fn profile_layer(masks: &UtteranceMasks, layer: usize) -> Vec<f64> {
    let heads = &masks.layers[layer - 1];
    let (rows, cols) = (heads[0].rows(), heads[0].cols());
    (0..cols)
        .map(|j| {
            let mut hits = 0u64;
            for i in 0..rows {
                for m in heads {
                    hits += m.get(i, j) as u64;
                }
            }
            hits as f64 / (rows * heads.len()) as f64
        })
        .collect()
}

/// `fᵢ(j)` by direct summation; `(offset, value)` for covered offsets.
pub fn profile_position(corpus: &[UtteranceMasks], position: usize, layer: usize, half_window: usize) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    for offset in -(half_window as i64)..=half_window as i64 {
        let key = position as i64 + offset;
        let (mut hits, mut n, mut heads) = (0u64, 0u64, 0u64);
        for utt in corpus {
            let hs = &utt.layers[layer - 1];
            heads = hs.len() as u64;
            if position < hs[0].rows() && key >= 0 && key < hs[0].cols() as i64 {
                n += 1;
                for m in hs {
                    hits += m.get(position, key as usize) as u64;
                }
            }
        }
        if n > 0 {
            out.push((offset, hits as f64 / (n * heads) as f64));
        }
    }
    out
}

/// Layer fraction by direct summation.
pub fn layer_fraction(corpus: &[UtteranceMasks], layer: usize) -> f64 {
    let (mut hits, mut cells) = (0u64, 0u64);
    for utt in corpus {
        for m in &utt.layers[layer - 1] {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    cells += 1;
                    hits += m.get(i, j) as u64;
                }
            }
        }
    }
    hits as f64 / cells as f64
}

/// Result of one property over many generated cases.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Cases where two routes disagreed only on an entry within rounding
    /// distance of the threshold.
    pub boundary_cases: usize,
    pub max_abs_diff: f64,
    pub first_failure: Option<String>,
}

impl PropertyReport {
    fn new(name: &'static str) -> Self {
        PropertyReport {
            name,
            cases: 0,
            failures: 0,
            boundary_cases: 0,
            max_abs_diff: 0.0,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn fail(&mut self, why: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(why());
        }
    }

    fn diff(&mut self, d: f64) {
        self.max_abs_diff = self.max_abs_diff.max(d);
    }
}

/// Seeds of one battery run. Case `index` of every property draws from
/// `Rng::stream(seed, index)`, so a failure is reproducible from the pair.
#[derive(Clone, Copy, Debug)]
pub struct Battery {
    pub seed: u64,
    pub rows: usize,
    pub comparison: ThresholdComparison,
}

/// Gammas checked for monotonicity.
pub const GAMMA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Random logit row of length 2..=128 and a gamma in `[0, 1]`.
pub fn random_row(rng: &mut Rng, index: usize) -> (Vec<f64>, f64) {
    let len = rng.int_range(2, 128);
    let gamma = match index % 7 {
        0 => 0.0,
        1 => 1.0,
        _ => rng.uniform(),
    };
    let logits = match index % 10 {
        // Uniform rows put every entry exactly on the threshold.
        0 => vec![rng.normal(); len],
        // Ties: two plateaus of repeated logits.
        1 => {
            let (a, b) = (rng.normal(), rng.normal());
            (0..len).map(|j| if j % 3 == 0 { a } else { b }).collect()
        }
        // Context-masked positions.
        2 => {
            let mut row: Vec<f64> = (0..len).map(|_| 2.0 * rng.normal()).collect();
            let keep = rng.int_range(0, len - 1);
            for (j, x) in row.iter_mut().enumerate() {
                if j != keep && rng.bernoulli(0.3) {
                    *x = f64::NEG_INFINITY;
                }
            }
            row
        }
        _ => {
            let temperature = 0.1 + 4.0 * rng.uniform();
            (0..len).map(|_| temperature * rng.normal()).collect()
        }
    };
    (logits, gamma)
}

/// True when every disagreement between the masks sits on an entry within
/// rounding distance of the oracle threshold, without touching it.
fn rounding_only(a: &[bool], b: &[bool], oracle: &OracleRow) -> bool {
    (0..a.len()).all(|j| {
        a[j] == b[j] || {
            let gap = (oracle.initial[j] - oracle.threshold).abs();
            gap > 0.0 && gap <= BOUNDARY_SLACK
        }
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl Battery {
    pub fn new(seed: u64, rows: usize) -> Self {
        Battery {
            seed,
            rows,
            comparison: ThresholdComparison::Strict,
        }
    }

    fn case(&self, index: usize) -> (Vec<f64>, f64) {
        random_row(&mut Rng::stream(self.seed, index as u64), index)
    }

    fn run_row(&self, logits: &[f64], gamma: f64) -> crate::Result<RowSuppression> {
        suppress_row_with(logits, gamma, 2, self.comparison)
    }

    fn label(&self, index: usize, gamma: f64) -> String {
        format!("seed {} case {index} (gamma {gamma})", self.seed)
    }

    /// Every property, in a fixed order.
    pub fn run(&self) -> Vec<PropertyReport> {
        vec![
            self.two_step_equivalence(),
            self.threshold_fidelity(),
            self.survivor_guarantee(),
            self.gamma_monotonicity(),
            self.shift_invariance(),
            self.statistics(),
        ]
    }

    /// −∞ re-softmax equals zero-and-renormalize within [`PROBABILITY_TOLERANCE`].
    pub fn two_step_equivalence(&self) -> PropertyReport {
        let mut report = PropertyReport::new("two-step equivalence");
        for index in 0..self.rows {
            report.cases += 1;
            let (logits, gamma) = self.case(index);
            let expected = suppress(&logits, gamma);
            let actual = match self.run_row(&logits, gamma) {
                Ok(a) => a,
                Err(e) => {
                    report.fail(|| format!("{}: fast path failed: {e}", self.label(index, gamma)));
                    continue;
                }
            };
            if actual.suppressed != expected.suppressed {
                if rounding_only(&actual.suppressed, &expected.suppressed, &expected) {
                    report.boundary_cases += 1;
                } else {
                    report.fail(|| format!("{}: suppression masks differ", self.label(index, gamma)));
                }
                continue;
            }
            let d = max_abs_diff(&actual.probabilities, &expected.probabilities);
            report.diff(d);
            if d > PROBABILITY_TOLERANCE {
                report.fail(|| format!("{}: probabilities differ by {d:e}", self.label(index, gamma)));
            }
        }
        report
    }

    /// Threshold against the Welford route, plus `θ = 1/L` at `γ = 0`.
    pub fn threshold_fidelity(&self) -> PropertyReport {
        let mut report = PropertyReport::new("threshold fidelity");
        for index in 0..self.rows {
            report.cases += 1;
            let (logits, gamma) = self.case(index);
            let probs: Vec<f64> = softmax(&logits).into_iter().filter(|&p| p > 0.0).collect();
            let checks = [(gamma, threshold(&probs, gamma)), (0.0, 1.0 / probs.len() as f64)];
            for (g, expected) in checks {
                match suppression_threshold(&probs, g) {
                    Ok(theta) => {
                        let d = (theta - expected).abs();
                        report.diff(d);
                        if d > PROBABILITY_TOLERANCE {
                            report.fail(|| format!("{}: threshold off by {d:e}", self.label(index, g)));
                        }
                    }
                    Err(e) => report.fail(|| format!("{}: fast path failed: {e}", self.label(index, g))),
                }
            }
        }
        report
    }

    /// At least one live entry survives and the output stays normalized.
    pub fn survivor_guarantee(&self) -> PropertyReport {
        let mut report = PropertyReport::new("survivor guarantee");
        for index in 0..self.rows {
            report.cases += 1;
            let (logits, gamma) = self.case(index);
            let live = logits.iter().filter(|&&x| x != f64::NEG_INFINITY).count();
            match self.run_row(&logits, gamma) {
                Ok(row) => {
                    let total: f64 = row.probabilities.iter().sum();
                    if row.suppressed_count() >= live || (total - 1.0).abs() > 1e-12 {
                        report.fail(|| {
                            format!(
                                "{}: {} of {live} suppressed, row sums to {total}",
                                self.label(index, gamma),
                                row.suppressed_count()
                            )
                        });
                    }
                }
                Err(e) => report.fail(|| format!("{}: fast path failed: {e}", self.label(index, gamma))),
            }
        }
        report
    }

    /// Suppressed counts never increase along [`GAMMA_GRID`].
    pub fn gamma_monotonicity(&self) -> PropertyReport {
        let mut report = PropertyReport::new("gamma monotonicity");
        for index in 0..self.rows {
            report.cases += 1;
            let (logits, _) = self.case(index);
            let counts: crate::Result<Vec<usize>> = GAMMA_GRID
                .iter()
                .map(|&g| self.run_row(&logits, g).map(|r| r.suppressed_count()))
                .collect();
            match counts {
                Ok(c) if c.windows(2).all(|w| w[1] <= w[0]) => {}
                Ok(c) => report.fail(|| format!("seed {} case {index}: counts {c:?} over {GAMMA_GRID:?}", self.seed)),
                Err(e) => report.fail(|| format!("seed {} case {index}: fast path failed: {e}", self.seed)),
            }
        }
        report
    }

    /// Adding a constant to every logit leaves the result unchanged.
    pub fn shift_invariance(&self) -> PropertyReport {
        let mut report = PropertyReport::new("shift invariance");
        for index in 0..self.rows {
            report.cases += 1;
            let (logits, gamma) = self.case(index);
            let shift = 10.0 * Rng::stream(self.seed ^ 0x0053_4849_4654, index as u64).normal();
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let (a, b) = match (self.run_row(&logits, gamma), self.run_row(&shifted, gamma)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    report.fail(|| format!("{}: fast path failed: {e}", self.label(index, gamma)));
                    continue;
                }
            };
            if a.suppressed != b.suppressed {
                if rounding_only(&a.suppressed, &b.suppressed, &suppress(&logits, gamma)) {
                    report.boundary_cases += 1;
                } else {
                    report.fail(|| format!("{}: shift {shift} changes the mask", self.label(index, gamma)));
                }
                continue;
            }
            let d = max_abs_diff(&a.probabilities, &b.probabilities);
            report.diff(d);
            if d > PROBABILITY_TOLERANCE {
                report.fail(|| format!("{}: shift {shift} moves probabilities by {d:e}", self.label(index, gamma)));
            }
        }
        report
    }

    /// Profiles and layer fractions against the loop oracles, exactly, on
    /// random mask corpora with `L ≤ 8`, `H ≤ 4`, `N ≤ 5`.
    pub fn statistics(&self) -> PropertyReport {
        let mut report = PropertyReport::new("statistics vs loop oracle");
        for index in 0..self.rows {
            report.cases += 1;
            let mut rng = Rng::stream(self.seed ^ 0x0053_5441_5453, index as u64);
            let corpus = random_mask_corpus(&mut rng, 2, 4, 5, 8);
            let layer = rng.int_range(1, 2);
            let position = rng.int_range(0, 7);
            if let Err(why) = compare_statistics(&corpus, layer, position, 3) {
                report.fail(|| format!("seed {} case {index}: {why}", self.seed));
            }
        }
        report
    }
}

/// Random corpus of `1..=max_utts` utterances with `layers` layers of
/// `1..=max_heads` heads, lengths `1..=max_len` and density-varying bits.
pub fn random_mask_corpus(
    rng: &mut Rng,
    layers: usize,
    max_heads: usize,
    max_utts: usize,
    max_len: usize,
) -> Vec<UtteranceMasks> {
    let heads = rng.int_range(1, max_heads);
    let utts = rng.int_range(1, max_utts);
    let density = rng.uniform();
    (0..utts)
        .map(|n| {
            let len = rng.int_range(1, max_len);
            let layers = (1..=layers)
                .map(|l| {
                    (0..heads)
                        .map(|h| {
                            let bits = (0..len * len).map(|_| rng.bernoulli(density)).collect();
                            SuppressionMask::new(l, h, len, len, bits).expect("shape by construction")
                        })
                        .collect()
                })
                .collect();
            UtteranceMasks::new(format!("utt{n}"), layers)
        })
        .collect()
}

/// Compares every statistic on `corpus` with its loop oracle, bit for bit.
pub fn compare_statistics(
    corpus: &[UtteranceMasks],
    layer: usize,
    position: usize,
    half_window: usize,
) -> Result<(), String> {
    for utt in corpus {
        let fast = analysis::profile_layer(utt, layer).map_err(|e| e.to_string())?;
        if fast.values != profile_layer(utt, layer) {
            return Err(format!("f(j) differs on {}", utt.id));
        }
    }
    let fraction = analysis::layer_fraction(corpus, layer).map_err(|e| e.to_string())?;
    if fraction.fraction != layer_fraction(corpus, layer) {
        return Err(format!("layer {layer} fraction differs"));
    }
    let slow = profile_position(corpus, position, layer, half_window);
    match analysis::profile_position(corpus, position, layer, half_window) {
        Ok(p) => {
            let fast: Vec<(i64, f64)> = p.offsets.iter().copied().zip(p.values.iter().copied()).collect();
            if fast != slow {
                return Err(format!("position {position} profile differs"));
            }
        }
        Err(WasError::EmptyProfile { .. }) if slow.is_empty() => {}
        Err(e) => return Err(e.to_string()),
    }
    Ok(())
}
