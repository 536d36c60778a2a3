//! Resolution sweep: every test image is degraded to each tier, classified,
//! and the results are aggregated into per-tier accuracy tables plus a
//! logarithmic fit of overall accuracy against tier pixel count.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetManifest, HardwareTag};
use crate::imaging::{self, ImageError, ResolutionTier};
use crate::inference;
use crate::metrics::{self, EvalSummary, LogFit, Score};
use crate::network::{ClassLabel, Model, NetworkError, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no resolution tiers requested")]
    NoTiers,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub const ACCURACY_DEFINITION: &str =
    "per-class accuracy is per-class recall: the fraction of that class's images labelled correctly";
pub const LOG_FIT_ABSCISSA: &str = "ln(tier pixel count), using the canonical 16:9 tier frame width x height";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub checkpoint_digest: String,
    pub manifest_digest: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub input_side: usize,
    pub accuracy_definition: String,
    pub log_fit_abscissa: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub path: String,
    pub label: ClassLabel,
    pub hardware: Option<HardwareTag>,
    pub tier: String,
    /// Geometry actually fed to the input resize.
    pub width: u32,
    pub height: u32,
    /// True when the source was at or below the tier and left untouched.
    pub native: bool,
    pub predicted: ClassLabel,
    pub confidence: f32,
    pub distribution: [f32; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: ClassLabel,
    pub accuracy: f64,
    pub support: u64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareAccuracy {
    pub hardware: HardwareTag,
    pub accuracy: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSummary {
    pub tier: String,
    pub height: u32,
    pub width: u32,
    pub pixel_count: u64,
    pub predictions: u64,
    pub overall_accuracy: f64,
    pub mean_average_precision: Option<f64>,
    pub per_class: Vec<ClassAccuracy>,
    /// Empty when no entry carries a hardware tag.
    pub hardware: Vec<HardwareAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub metadata: SweepMetadata,
    pub tiers: Vec<TierSummary>,
    pub log_fit: Option<LogFit>,
    pub log_fit_notice: Option<String>,
    pub predictions: Vec<PredictionRecord>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `tier,height,pixel_count,class,accuracy`; one row per class plus an
    /// `overall` row for every tier.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tier,height,pixel_count,class,accuracy\n");
        for t in &self.tiers {
            for c in &t.per_class {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    t.tier, t.height, t.pixel_count, c.class, c.accuracy
                )
                .unwrap();
            }
            writeln!(
                out,
                "{},{},{},overall,{}",
                t.tier, t.height, t.pixel_count, t.overall_accuracy
            )
            .unwrap();
        }
        out
    }

    pub fn tier(&self, tier: ResolutionTier) -> Option<&TierSummary> {
        self.tiers.iter().find(|t| t.height == tier.height())
    }
}

/// Inputs that end up in the report's metadata block.
#[derive(Debug, Clone, Default)]
pub struct SweepContext {
    pub checkpoint_digest: String,
    pub seed: u64,
    pub timestamp_unix: u64,
}

pub fn run_sweep(
    model: &Model,
    manifest: &DatasetManifest,
    tiers: &[ResolutionTier],
    ctx: &SweepContext,
) -> Result<SweepReport, SweepError> {
    if tiers.is_empty() {
        return Err(SweepError::NoTiers);
    }
    let side = model.config().input_size;
    let mut predictions = Vec::with_capacity(manifest.len() * tiers.len());
    for entry in manifest.entries() {
        let path = manifest.resolve(entry);
        let bytes = std::fs::read(&path).map_err(|source| SweepError::Io {
            path: path.clone(),
            source,
        })?;
        let img = imaging::decode(&bytes).map_err(|source| SweepError::Image { path, source })?;
        for &tier in tiers {
            let c = inference::classify(model, &img, Some(tier))?;
            let p = c.prediction;
            predictions.push(PredictionRecord {
                path: entry.path.clone(),
                label: entry.label,
                hardware: entry.hardware,
                tier: tier.to_string(),
                width: c.width,
                height: c.height,
                native: c.native,
                predicted: p.label,
                confidence: p.confidence,
                distribution: p.distribution,
            });
        }
    }

    let summaries: Vec<TierSummary> = tiers.iter().map(|&tier| summarize_tier(tier, &predictions)).collect();

    let points: Vec<(f64, f64)> = summaries
        .iter()
        .map(|t| (t.pixel_count as f64, t.overall_accuracy))
        .collect();
    let (log_fit, log_fit_notice) = match metrics::log_fit(&points) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(format!("log fit omitted: {e}"))),
    };

    Ok(SweepReport {
        metadata: SweepMetadata {
            checkpoint_digest: ctx.checkpoint_digest.clone(),
            manifest_digest: manifest.digest().to_string(),
            seed: ctx.seed,
            timestamp_unix: ctx.timestamp_unix,
            input_side: side,
            accuracy_definition: ACCURACY_DEFINITION.into(),
            log_fit_abscissa: LOG_FIT_ABSCISSA.into(),
        },
        tiers: summaries,
        log_fit,
        log_fit_notice,
        predictions,
    })
}

fn summarize_tier(tier: ResolutionTier, all: &[PredictionRecord]) -> TierSummary {
    let name = tier.to_string();
    let rows: Vec<&PredictionRecord> = all.iter().filter(|p| p.tier == name).collect();
    let truths: Vec<ClassLabel> = rows.iter().map(|p| p.label).collect();
    let dists: Vec<[f32; NUM_CLASSES]> = rows.iter().map(|p| p.distribution).collect();
    let summary = EvalSummary::from_predictions(&truths, &dists);

    let per_class = ClassLabel::ALL
        .iter()
        .map(|&c| {
            let Score { value, degenerate } = summary.recall[c.index()];
            ClassAccuracy {
                class: c,
                accuracy: value,
                support: summary.confusion.support(c),
                degenerate,
            }
        })
        .collect();

    let hardware = [HardwareTag::WithHardware, HardwareTag::WithoutHardware]
        .into_iter()
        .filter_map(|tag| {
            let tagged: Vec<_> = rows.iter().filter(|p| p.hardware == Some(tag)).collect();
            if tagged.is_empty() {
                return None;
            }
            let correct = tagged.iter().filter(|p| p.predicted == p.label).count();
            Some(HardwareAccuracy {
                hardware: tag,
                accuracy: correct as f64 / tagged.len() as f64,
                support: tagged.len() as u64,
            })
        })
        .collect();

    let (width, height) = tier.dimensions();
    TierSummary {
        tier: name,
        height,
        width,
        pixel_count: tier.pixel_count(),
        predictions: rows.len() as u64,
        overall_accuracy: summary.accuracy,
        mean_average_precision: summary.mean_average_precision,
        per_class,
        hardware,
    }
}
