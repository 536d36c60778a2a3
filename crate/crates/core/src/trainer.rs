//! Minibatch momentum-SGD training with a seeded, stratified train/eval split.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetManifest;
use crate::imaging::{self, ImageError};
use crate::metrics::EvalSummary;
use crate::network::{ClassLabel, Model, NetworkError, ParamGrads, Prediction};
use crate::tensor::{self, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("empty epoch: {n_train} training samples cannot fill one batch of {batch_size}")]
    EmptyEpoch { n_train: usize, batch_size: usize },
    #[error("non-finite loss at epoch {epoch}, iteration {iteration}")]
    NonFiniteLoss { epoch: usize, iteration: usize },
    #[error("class {label} has {count} sample(s); at least 2 are needed to split")]
    TooFewSamples { label: ClassLabel, count: usize },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl From<tensor::TensorError> for TrainError {
    fn from(e: tensor::TensorError) -> Self {
        TrainError::Network(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    /// Batch 32, 20 epochs.
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 20,
            learning_rate: 0.01,
            momentum: 0.9,
            eval_fraction: 0.2,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidHyperParams(m.to_string()));
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatch);
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return bad("eval fraction must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

/// Full batches per epoch; the trailing partial batch is dropped.
pub fn iterations_per_epoch(n_train: usize, batch_size: usize) -> Result<usize> {
    if batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    Ok(n_train / batch_size)
}

/// Seeded, per-class stratified split. Each class contributes
/// `floor(count × eval_fraction)` entries to the eval side. Both halves keep
/// the manifest's entry order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    eval_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if manifest.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(TrainError::InvalidHyperParams(
            "eval fraction must lie strictly between 0 and 1".into(),
        ));
    }
    let counts = manifest.class_counts();
    for label in ClassLabel::ALL {
        let count = counts[label.index()];
        if count == 1 {
            return Err(TrainError::TooFewSamples { label, count });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_eval = vec![false; manifest.len()];
    for label in ClassLabel::ALL {
        let mut members: Vec<usize> = manifest
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        // the epsilon keeps e.g. 0.29 × 100 from flooring to 28
        let n_eval = (members.len() as f64 * eval_fraction + 1e-9).floor() as usize;
        for &i in &members[..n_eval] {
            is_eval[i] = true;
        }
    }
    let mut i = 0;
    let eval = manifest.filtered(|_| {
        i += 1;
        is_eval[i - 1]
    });
    let mut i = 0;
    let train = manifest.filtered(|_| {
        i += 1;
        !is_eval[i - 1]
    });
    Ok((train, eval))
}

/// A preprocessed network input with its ground-truth label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub label: ClassLabel,
}

/// Decodes every manifest entry and converts it to a `side × side` input.
pub fn load_samples(manifest: &DatasetManifest, side: usize) -> Result<Vec<Sample>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            let path = manifest.resolve(e);
            let bytes = std::fs::read(&path).map_err(|source| TrainError::Io {
                path: path.clone(),
                source,
            })?;
            let img = imaging::decode(&bytes).map_err(|source| TrainError::Image { path, source })?;
            Ok(Sample {
                input: imaging::to_input_tensor(&img, side as u32),
                label: e.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProgressEvent {
    Iteration {
        epoch: usize,
        iter: usize,
        loss: f64,
    },
    EpochEnd {
        epoch: usize,
        mean_loss: f64,
        eval_accuracy: Option<f64>,
    },
}

pub trait ProgressSink {
    fn on_event(&mut self, event: &ProgressEvent);
}

impl<F: FnMut(&ProgressEvent)> ProgressSink for F {
    fn on_event(&mut self, event: &ProgressEvent) {
        self(event)
    }
}

/// Discards all events.
pub struct Silent;

impl ProgressSink for Silent {
    fn on_event(&mut self, _: &ProgressEvent) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Absent when the eval set is empty.
    pub eval: Option<EvalSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub iterations_per_epoch: usize,
    /// Total optimizer steps taken.
    pub updates: u64,
}

pub fn predict_all(model: &Model, samples: &[Sample]) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|s| model.predict(&s.input).map_err(TrainError::from))
        .collect()
}

pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<EvalSummary> {
    let preds = predict_all(model, samples)?;
    let truths: Vec<ClassLabel> = samples.iter().map(|s| s.label).collect();
    let dists: Vec<_> = preds.iter().map(|p| p.distribution).collect();
    Ok(EvalSummary::from_predictions(&truths, &dists))
}

/// Runs `hp.epochs` epochs of momentum SGD (`v ← μv − lr·g; w ← w + v`) with
/// batch-mean cross-entropy gradients, evaluating on `eval` after each epoch.
pub fn train(
    mut model: Model,
    train_set: &[Sample],
    eval_set: &[Sample],
    hp: &HyperParams,
    sink: &mut dyn ProgressSink,
) -> Result<(Model, TrainHistory)> {
    hp.validate()?;
    let ipe = iterations_per_epoch(train_set.len(), hp.batch_size)?;
    if ipe == 0 {
        return Err(TrainError::EmptyEpoch {
            n_train: train_set.len(),
            batch_size: hp.batch_size,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut velocity = ParamGrads::zeros_like(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        iterations_per_epoch: ipe,
        ..TrainHistory::default()
    };
    let inv_batch = 1.0 / hp.batch_size as f32;

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for (it, batch) in order.chunks_exact(hp.batch_size).enumerate() {
            let iteration = it + 1;
            let mut grads = ParamGrads::zeros_like(&model);
            let mut batch_loss = 0f64;
            for &i in batch {
                let sample = &train_set[i];
                let (logits, cache) = model.forward(&sample.input)?;
                let probs = tensor::softmax(&logits);
                let (loss, grad_logits) = tensor::cross_entropy(&probs, sample.label.index())?;
                if !loss.is_finite() || logits.data().iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::NonFiniteLoss { epoch, iteration });
                }
                batch_loss += loss as f64;
                grads.add_assign(&model.backward(&cache, &grad_logits)?);
            }
            grads.scale(inv_batch);

            for ((param, vel), grad) in model
                .parameters_mut()
                .into_iter()
                .zip(&mut velocity.tensors)
                .zip(&grads.tensors)
            {
                for ((w, v), g) in param.data_mut().iter_mut().zip(vel.data_mut()).zip(grad.data()) {
                    *v = hp.momentum * *v - hp.learning_rate * g;
                    *w += *v;
                }
            }
            history.updates += 1;

            let mean = batch_loss / hp.batch_size as f64;
            epoch_loss += mean;
            sink.on_event(&ProgressEvent::Iteration {
                epoch,
                iter: iteration,
                loss: mean,
            });
        }

        let eval = if eval_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, eval_set)?)
        };
        let record = EpochRecord {
            epoch,
            mean_loss: epoch_loss / ipe as f64,
            eval,
        };
        sink.on_event(&ProgressEvent::EpochEnd {
            epoch,
            mean_loss: record.mean_loss,
            eval_accuracy: record.eval.as_ref().map(|e| e.accuracy),
        });
        history.epochs.push(record);
    }
    Ok((model, history))
}
