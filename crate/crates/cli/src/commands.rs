//! One function per subcommand. Each takes its arguments as a plain struct and
//! writes human-oriented text to `log` and machine-oriented output to `out`,
//! so tests can drive them without spawning the binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ocscreen_core::checkpoint::load_checkpoint;
use ocscreen_core::dataset::{load_manifest, validate, DatasetManifest, ValidationReport};
use ocscreen_core::trainer::{self, load_samples, split_dataset, HyperParams, ProgressEvent};
use ocscreen_core::{
    classify, gen_synthetic, imaging, run_sweep, save_checkpoint, ClassLabel, EvalSummary, Model, ModelConfig,
    ResolutionTier, SweepContext, SweepReport, TrainHistory, TrainingMetadata,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};
use crate::service::{self, AppState, ServedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigPreset {
    /// 128×128 input, stages 16/32/64, hidden 128
    Default,
    /// 64×64 input, stages 8/8/16/16, hidden 32
    Reduced,
    /// 8×8 input, one stage of 2 filters, hidden 4
    Tiny,
}

impl ConfigPreset {
    pub fn config(self, seed: u64) -> ModelConfig {
        let base = match self {
            ConfigPreset::Default => ModelConfig::default(),
            ConfigPreset::Reduced => ModelConfig::reduced(),
            ConfigPreset::Tiny => ModelConfig::tiny(),
        };
        base.with_seed(seed)
    }

    fn name(self) -> &'static str {
        match self {
            ConfigPreset::Default => "default",
            ConfigPreset::Reduced => "reduced",
            ConfigPreset::Tiny => "tiny",
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn write_line(out: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(io_error("<output>"))
}

pub fn gen_synthetic_cmd(
    out_dir: &Path,
    per_class: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<DatasetManifest, CliError> {
    let manifest = gen_synthetic(per_class, seed, out_dir)?;
    write_line(
        out,
        &out_dir
            .join(ocscreen_core::synthetic::MANIFEST_NAME)
            .display()
            .to_string(),
    )?;
    write_line(out, &format!("digest {}", manifest.digest()))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub config: ConfigPreset,
    pub hp: HyperParams,
}

#[derive(Debug, Clone, Serialize)]
struct IterationLine {
    epoch: usize,
    iter: usize,
    loss: f64,
}

/// Last line of `train` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub model_digest: String,
    pub dataset_digest: String,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub updates: u64,
    pub eval: Option<EvalSummary>,
}

pub fn train(
    args: &TrainArgs,
    out: &mut dyn Write,
    log: &mut dyn Write,
) -> Result<(TrainSummary, TrainHistory), CliError> {
    let hp = &args.hp;
    hp.validate()?;
    require_file(&args.manifest, "manifest")?;
    let cfg = args.config.config(hp.seed);
    write_line(
        log,
        &format!(
            "batch={} epochs={} lr={} momentum={} eval_fraction={} seed={} config={}",
            hp.batch_size,
            hp.epochs,
            hp.learning_rate,
            hp.momentum,
            hp.eval_fraction,
            hp.seed,
            args.config.name()
        ),
    )?;

    let manifest = load_manifest(&args.manifest)?;
    let (train_m, eval_m) = split_dataset(&manifest, hp.eval_fraction, hp.seed)?;
    let side = cfg.input_size;
    let train_set = load_samples(&train_m, side)?;
    let eval_set = load_samples(&eval_m, side)?;
    let ipe = trainer::iterations_per_epoch(train_set.len(), hp.batch_size)?;
    write_line(
        log,
        &format!(
            "train={} eval={} iterations_per_epoch={ipe}",
            train_set.len(),
            eval_set.len()
        ),
    )?;

    let mut sink = |e: &ProgressEvent| match *e {
        ProgressEvent::Iteration { epoch, iter, loss } => {
            let line = serde_json::to_string(&IterationLine { epoch, iter, loss }).expect("plain struct");
            writeln!(out, "{line}").ok();
        }
        ProgressEvent::EpochEnd {
            epoch,
            mean_loss,
            eval_accuracy,
        } => {
            let acc = eval_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            writeln!(log, "epoch {epoch} mean_loss {mean_loss:.4} eval_accuracy {acc}").ok();
        }
    };
    let model = Model::build(cfg)?;
    let (model, history) = trainer::train(model, &train_set, &eval_set, hp, &mut sink)?;

    let metadata = TrainingMetadata {
        seed: hp.seed,
        epochs_completed: history.epochs.len(),
        dataset_digest: manifest.digest().to_string(),
    };
    let digest = save_checkpoint(&model, &metadata, &args.out)?;
    let summary = TrainSummary {
        checkpoint: args.out.clone(),
        model_digest: digest,
        dataset_digest: metadata.dataset_digest,
        train_samples: train_set.len(),
        eval_samples: eval_set.len(),
        updates: history.updates,
        eval: history.epochs.last().and_then(|e| e.eval.clone()),
    };
    write_line(out, &serde_json::to_string(&summary).expect("plain struct"))?;
    Ok((summary, history))
}

pub fn evaluate(manifest: &Path, ckpt: &Path, out: &mut dyn Write) -> Result<EvalSummary, CliError> {
    require_file(manifest, "manifest")?;
    require_file(ckpt, "checkpoint")?;
    let loaded = load_checkpoint(ckpt)?;
    let manifest = load_manifest(manifest)?;
    let samples = load_samples(&manifest, loaded.model.config().input_size)?;
    let summary = trainer::evaluate(&loaded.model, &samples)?;
    write_line(out, &serde_json::to_string(&summary).expect("plain struct"))?;
    Ok(summary)
}

pub fn validate_cmd(manifest: &Path, out: &mut dyn Write) -> Result<ValidationReport, CliError> {
    require_file(manifest, "manifest")?;
    let report = validate(&load_manifest(manifest)?);
    write_line(out, &serde_json::to_string(&report).expect("plain struct"))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub manifest: PathBuf,
    pub ckpt: PathBuf,
    pub out: PathBuf,
    pub tiers: Vec<ResolutionTier>,
    /// Report timestamp; falls back to `SOURCE_DATE_EPOCH`, then 0.
    pub timestamp: Option<u64>,
}

pub fn report_timestamp(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok())
        .unwrap_or(0)
}

/// Writes the JSON report to `args.out` and the CSV next to it.
pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<SweepReport, CliError> {
    require_file(&args.manifest, "manifest")?;
    require_file(&args.ckpt, "checkpoint")?;
    if args.tiers.is_empty() {
        return Err(CliError::Usage("at least one tier is required".into()));
    }
    let loaded = load_checkpoint(&args.ckpt)?;
    let manifest = load_manifest(&args.manifest)?;
    let ctx = SweepContext {
        checkpoint_digest: loaded.digest.clone(),
        seed: loaded.metadata.seed,
        timestamp_unix: report_timestamp(args.timestamp),
    };
    let report = run_sweep(&loaded.model, &manifest, &args.tiers, &ctx)?;

    fs::write(&args.out, report.to_json()).map_err(io_error(&args.out))?;
    let csv_path = csv_path(&args.out);
    fs::write(&csv_path, report.to_csv()).map_err(io_error(&csv_path))?;

    for t in &report.tiers {
        let map = t
            .mean_average_precision
            .map_or("n/a".to_string(), |m| format!("{m:.4}"));
        write_line(out, &format!("{} accuracy={:.4} map={map}", t.tier, t.overall_accuracy))?;
    }
    match (&report.log_fit, &report.log_fit_notice) {
        (Some(fit), _) => write_line(
            out,
            &format!("log_fit a={:.6} b={:.6} r2={:.6}", fit.slope, fit.intercept, fit.r2),
        )?,
        (None, Some(notice)) => write_line(out, notice)?,
        (None, None) => {}
    }
    Ok(report)
}

pub fn csv_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub label: ClassLabel,
    pub confidence: f32,
    pub distribution: [f32; 3],
}

pub fn predict(
    ckpt: &Path,
    image: &Path,
    tier: Option<ResolutionTier>,
    out: &mut dyn Write,
) -> Result<PredictOutput, CliError> {
    require_file(ckpt, "checkpoint")?;
    let loaded = load_checkpoint(ckpt)?;
    let bytes = fs::read(image).map_err(io_error(image))?;
    let img = imaging::decode(&bytes).map_err(|source| CliError::Image {
        path: image.to_path_buf(),
        source,
    })?;
    let c = classify(&loaded.model, &img, tier)?;
    let result = PredictOutput {
        label: c.prediction.label,
        confidence: c.prediction.confidence,
        distribution: c.prediction.distribution,
    };
    write_line(out, &serde_json::to_string(&result).expect("plain struct"))?;
    Ok(result)
}

pub fn serve(ckpt: &Path, addr: &str, cors: bool, log_requests: bool, out: &mut dyn Write) -> Result<(), CliError> {
    require_file(ckpt, "checkpoint")?;
    let loaded = load_checkpoint(ckpt)?;
    let state = AppState::pending().with_request_log(log_requests);
    let app = service::router(state.clone(), cors);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Serve(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Serve(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Serve(e.to_string()))?;
        state.install(ServedModel::from(loaded));
        write_line(out, &format!("listening on {local}"))?;
        out.flush().ok();
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(|e| CliError::Serve(e.to_string()))
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c().await.ok();
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}
