//! Classification metrics, baseline deltas, paired significance tests,
//! report tables and the human review workflow.

mod report;
mod review;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{render_report, DeltaCell, RenderedReport, ReportCell, ACCURACY_ROW, BINARY_ROWS};
pub use review::{
    read_sheet, review_accuracy, sample_for_review, write_sheet, ErrorType, ReviewItem, ReviewSheet, ReviewSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("baseline value is zero")]
    ZeroBaseline,
    #[error("report has no gold-only cell")]
    MissingBaseline,
    #[error("review needs {requested} items but only {available} are available")]
    InsufficientData { requested: usize, available: usize },
    #[error("review sheet incomplete: item {0} has no verdict")]
    IncompleteSheet(String),
}

/// Half-up rounding to `places` decimals, tolerant of binary
/// representation error just below the half.
pub fn round_half_up(value: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (value.abs() * scale + 0.5 + 1e-9).floor() / scale * value.signum()
}

/// `counts[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion(predictions: &[usize], golds: &[usize], k: usize) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &g) in predictions.iter().zip(golds) {
        if let Some(&label) = [p, g].iter().find(|l| **l >= k) {
            return Err(EvalError::LabelOutOfRange { label, k });
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    /// Set when a zero denominator forced one of the values to 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest precision, recall and F1 per class plus overall accuracy.
pub fn metrics(matrix: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = matrix.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = matrix.k();
    let per_class = (0..k)
        .map(|c| {
            let tp = matrix.counts[c][c];
            let support: u64 = matrix.counts[c].iter().sum();
            let predicted: u64 = (0..k).map(|g| matrix.counts[g][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                _ => None,
            };
            ClassMetrics {
                precision: precision.unwrap_or(0.0),
                recall: recall.unwrap_or(0.0),
                f1: f1.unwrap_or(0.0),
                support,
                predicted,
                undefined: precision.is_none() || recall.is_none() || f1.is_none(),
            }
        })
        .collect();
    Ok(Metrics {
        per_class,
        accuracy: matrix.trace() as f64 / total as f64,
        total,
    })
}

/// Relative change against a baseline, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentChange {
    pub percent: f64,
}

impl PercentChange {
    /// Rounded to two decimals, half-up on the magnitude.
    pub fn rounded(&self) -> f64 {
        round_half_up(self.percent, 2)
    }

    pub fn render(&self) -> String {
        let r = self.rounded();
        if r == 0.0 {
            "0%".to_string()
        } else if r > 0.0 {
            format!("{r:.2}%↑")
        } else {
            format!("{:.2}%↓", -r)
        }
    }
}

impl std::fmt::Display for PercentChange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn percent_change(baseline: f64, value: f64) -> Result<PercentChange, EvalError> {
    if baseline == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(PercentChange {
        percent: 100.0 * (value - baseline) / baseline,
    })
}

pub const ALPHA: f64 = 0.05;
/// Discordant-pair count from which McNemar switches to the chi-square form.
pub const EXACT_LIMIT: u64 = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SignificanceMethod {
    #[default]
    McNemar,
    Randomization {
        rounds: u32,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_value: f64,
    pub significant: bool,
    /// Items only system A got right.
    pub a_only: u64,
    /// Items only system B got right.
    pub b_only: u64,
}

/// Two-sided exact McNemar p-value: binomial(n = b + c, 1/2) tail at
/// min(b, c), doubled and capped at 1.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // log-space binomial coefficients keep large n finite
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// McNemar chi-square with continuity correction, one degree of freedom.
pub fn mcnemar_chi_square(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let stat = diff.max(0.0).powi(2) / n as f64;
    statrs::function::erf::erfc((stat / 2.0).sqrt())
}

pub fn mcnemar(b: u64, c: u64) -> f64 {
    if b + c < EXACT_LIMIT {
        mcnemar_exact(b, c)
    } else {
        mcnemar_chi_square(b, c)
    }
}

/// Paired test of systems A and B on the same items.
pub fn significance_test(
    preds_a: &[usize],
    preds_b: &[usize],
    golds: &[usize],
    method: SignificanceMethod,
) -> Result<Significance, EvalError> {
    for other in [preds_b.len(), golds.len()] {
        if other != preds_a.len() {
            return Err(EvalError::LengthMismatch {
                left: preds_a.len(),
                right: other,
            });
        }
    }
    let correct: Vec<(bool, bool)> = preds_a
        .iter()
        .zip(preds_b)
        .zip(golds)
        .map(|((a, b), g)| (a == g, b == g))
        .collect();
    let a_only = correct.iter().filter(|(a, b)| *a && !*b).count() as u64;
    let b_only = correct.iter().filter(|(a, b)| !*a && *b).count() as u64;
    let p_value = match method {
        SignificanceMethod::McNemar => mcnemar(a_only, b_only),
        SignificanceMethod::Randomization { rounds, seed } => randomization(&correct, rounds, seed),
    };
    Ok(Significance {
        p_value,
        significant: p_value < ALPHA,
        a_only,
        b_only,
    })
}

/// Approximate randomization on the accuracy difference: swap each pair's
/// outcomes with probability 1/2 and count shuffles at least as extreme.
fn randomization(correct: &[(bool, bool)], rounds: u32, seed: u64) -> f64 {
    let diff = |pairs: &mut dyn Iterator<Item = (bool, bool)>| -> i64 {
        pairs.map(|(a, b)| i64::from(a) - i64::from(b)).sum::<i64>().abs()
    };
    let observed = diff(&mut correct.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0u64;
    for _ in 0..rounds {
        let mut swapped = correct
            .iter()
            .map(|&(a, b)| if rng.random::<bool>() { (b, a) } else { (a, b) })
            .collect::<Vec<_>>()
            .into_iter();
        if diff(&mut swapped) >= observed {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (f64::from(rounds) + 1.0)
}
