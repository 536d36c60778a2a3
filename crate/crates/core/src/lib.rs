//! Three-class oral-cavity image screening: a small CNN trained with momentum
//! SGD, evaluation metrics, image degradation to standard video resolution
//! tiers, and a sweep that measures how accuracy falls with resolution.

pub mod checkpoint;
pub mod dataset;
pub mod imaging;
pub mod inference;
pub mod metrics;
pub mod network;
pub mod sweep;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, LoadedCheckpoint, TrainingMetadata};
pub use dataset::{load_manifest, DatasetError, DatasetManifest, HardwareTag, ManifestEntry};
pub use imaging::{Image, ImageError, ResolutionTier};
pub use inference::{classify, Classification};
pub use metrics::{EvalSummary, LogFit, MetricsError};
pub use network::{ClassLabel, Model, ModelConfig, NetworkError, Prediction, NUM_CLASSES};
pub use sweep::{run_sweep, SweepContext, SweepError, SweepReport};
pub use synthetic::{gen_synthetic, SynthError};
pub use tensor::{Tensor, TensorError};
pub use trainer::{train, HyperParams, ProgressEvent, ProgressSink, TrainError, TrainHistory};
