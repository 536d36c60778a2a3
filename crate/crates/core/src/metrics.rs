//! Classification metrics: confusion tallies, precision/recall, the
//! per-class precision-recall curve with all-point average precision, macro
//! mAP, and the least-squares fit of accuracy against `ln(pixel count)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ClassLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("scores and truths differ in length ({scores} vs {truths})")]
    LengthMismatch { scores: usize, truths: usize },
    #[error("precision-recall curve needs at least one positive sample")]
    NoPositives,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("log fit needs at least two distinct pixel counts, got {0}")]
    DegenerateFit(usize),
    #[error("log fit abscissa must be positive, got {0}")]
    NonPositiveAbscissa(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// 3×3 counts indexed `[true][predicted]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (ClassLabel, ClassLabel)>,
    {
        let mut t = Self::new();
        for (truth, predicted) in pairs {
            t.record(truth, predicted);
        }
        t
    }

    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: ClassLabel) -> u64 {
        self.counts[c.index()][c.index()]
    }

    pub fn false_positives(&self, c: ClassLabel) -> u64 {
        let j = c.index();
        (0..NUM_CLASSES).filter(|&i| i != j).map(|i| self.counts[i][j]).sum()
    }

    pub fn false_negatives(&self, c: ClassLabel) -> u64 {
        let i = c.index();
        (0..NUM_CLASSES).filter(|&j| j != i).map(|j| self.counts[i][j]).sum()
    }

    pub fn support(&self, c: ClassLabel) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    /// `trace / total`; a degenerate score when nothing was tallied.
    pub fn accuracy(&self) -> Score {
        let trace: u64 = (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum();
        Score::ratio(trace, self.total())
    }
}

/// A ratio metric. When the denominator is zero the value is 0 and
/// `degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

pub fn precision(tally: &ConfusionTally, c: ClassLabel) -> Score {
    let tp = tally.true_positives(c);
    Score::ratio(tp, tp + tally.false_positives(c))
}

pub fn recall(tally: &ConfusionTally, c: ClassLabel) -> Score {
    let tp = tally.true_positives(c);
    Score::ratio(tp, tp + tally.false_negatives(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// One point per ranked prefix, in ranking order (recall is non-decreasing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Ranks samples by descending score (stable for ties) and records precision
/// and recall after each prefix.
pub fn pr_curve(scores: &[f64], truths: &[bool]) -> Result<PrCurve> {
    if scores.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            truths: truths.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut tp = 0usize;
    let points = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            if truths[i] {
                tp += 1;
            }
            PrPoint {
                recall: tp as f64 / positives as f64,
                precision: tp as f64 / (rank + 1) as f64,
            }
        })
        .collect();
    Ok(PrCurve { points })
}

/// All-point interpolated AP: `Σ (r_i − r_{i−1}) · max_{j ≥ i} p_j`.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let n = curve.points.len();
    let mut envelope = vec![0f64; n];
    let mut running = 0f64;
    for i in (0..n).rev() {
        running = running.max(curve.points[i].precision);
        envelope[i] = running;
    }
    let mut prev_recall = 0f64;
    let mut ap = 0f64;
    for (p, env) in curve.points.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    ap
}

/// Unweighted mean of per-class APs.
pub fn mean_average_precision(aps: &[f64]) -> f64 {
    if aps.is_empty() {
        return 0.0;
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Per-class and macro metrics over a scored evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: u64,
    pub accuracy: f64,
    pub precision: [Score; NUM_CLASSES],
    pub recall: [Score; NUM_CLASSES],
    /// `None` for classes with no positives in the set.
    pub average_precision: [Option<f64>; NUM_CLASSES],
    /// Mean over the classes that have an AP; `None` if none do.
    pub mean_average_precision: Option<f64>,
    pub confusion: ConfusionTally,
}

impl EvalSummary {
    /// `distributions[i]` is the class-probability vector for sample `i`.
    pub fn from_predictions(truths: &[ClassLabel], distributions: &[[f32; NUM_CLASSES]]) -> Self {
        assert_eq!(truths.len(), distributions.len());
        let predicted = distributions.iter().map(|d| {
            let mut best = 0;
            for i in 1..NUM_CLASSES {
                if d[i] > d[best] {
                    best = i;
                }
            }
            ClassLabel::ALL[best]
        });
        let confusion = ConfusionTally::from_pairs(truths.iter().copied().zip(predicted));

        let mut aps = [None; NUM_CLASSES];
        for c in ClassLabel::ALL {
            let scores: Vec<f64> = distributions.iter().map(|d| d[c.index()] as f64).collect();
            let flags: Vec<bool> = truths.iter().map(|&t| t == c).collect();
            aps[c.index()] = pr_curve(&scores, &flags).ok().map(|pr| average_precision(&pr));
        }
        let present: Vec<f64> = aps.iter().flatten().copied().collect();
        let map = (!present.is_empty()).then(|| mean_average_precision(&present));

        Self {
            samples: confusion.total(),
            accuracy: confusion.accuracy().value,
            precision: ClassLabel::ALL.map(|c| precision(&confusion, c)),
            recall: ClassLabel::ALL.map(|c| recall(&confusion, c)),
            average_precision: aps,
            mean_average_precision: map,
            confusion,
        }
    }
}

/// `accuracy ≈ slope · ln(pixels) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LogFit {
    pub fn predict(&self, pixels: f64) -> f64 {
        self.slope * pixels.ln() + self.intercept
    }
}

/// Ordinary least squares of `y` on `ln(x)`.
pub fn log_fit(points: &[(f64, f64)]) -> Result<LogFit> {
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(x.is_finite() && *x > 0.0)) {
        return Err(MetricsError::NonPositiveAbscissa(x));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(MetricsError::DegenerateFit(xs.len()));
    }

    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let mean_x = lx.iter().sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0f64, 0f64);
    for (x, &(_, y)) in lx.iter().zip(points) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }

    if points.iter().all(|p| p.1 == points[0].1) {
        // constant data: SS_tot = SS_res = 0
        return Ok(LogFit {
            slope: 0.0,
            intercept: points[0].1,
            r2: 1.0,
        });
    }

    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let (mut ss_res, mut ss_tot) = (0f64, 0f64);
    for (x, &(_, y)) in lx.iter().zip(points) {
        let r = y - (slope * x + intercept);
        ss_res += r * r;
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LogFit { slope, intercept, r2 })
}
