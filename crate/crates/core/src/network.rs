//! The 3-class screening CNN: `conv → ReLU → max-pool` stages, a hidden
//! fully-connected layer with ReLU, and a 3-way output layer read through
//! softmax.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::{self, ConvKernelSet, PoolIndexMap, Tensor, TensorError};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Cancerous = 0,
    NonCancerous = 1,
    Negative = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [ClassLabel::Cancerous, ClassLabel::NonCancerous, ClassLabel::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Wire name used in manifests, reports and the HTTP API.
    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Cancerous => "cancerous",
            ClassLabel::NonCancerous => "non_cancerous",
            ClassLabel::Negative => "negative",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input must be [3, {side}, {side}], got {actual:?}")]
    InputShape { side: usize, actual: Vec<usize> },
    #[error("forward cache does not belong to this model state (stale or foreign cache)")]
    StaleCache,
    #[error("parameter {name}: expected shape {expected:?}, got {actual:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("expected {expected} parameter tensors, got {actual}")]
    ParameterCount { expected: usize, actual: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel_size: usize,
}

impl ConvStage {
    pub const fn new(filters: usize, kernel_size: usize) -> Self {
        Self { filters, kernel_size }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Side of the square RGB input, in pixels.
    pub input_size: usize,
    pub conv_stages: Vec<ConvStage>,
    pub hidden_units: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// 128×128 input, 16/32/64 filters of 3×3, 128 hidden units.
    fn default() -> Self {
        Self {
            input_size: 128,
            conv_stages: vec![ConvStage::new(16, 3), ConvStage::new(32, 3), ConvStage::new(64, 3)],
            hidden_units: 128,
            num_classes: NUM_CLASSES,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// 64×64 input and four narrow stages; trains on a single CPU core in
    /// well under a minute on a few hundred images.
    pub fn reduced() -> Self {
        Self {
            input_size: 64,
            conv_stages: vec![
                ConvStage::new(8, 3),
                ConvStage::new(8, 3),
                ConvStage::new(16, 3),
                ConvStage::new(16, 3),
            ],
            hidden_units: 32,
            ..Self::default()
        }
    }

    /// Smallest useful net: 8×8 input, one stage of two 3×3 filters, 4 hidden units.
    pub fn tiny() -> Self {
        Self {
            input_size: 8,
            conv_stages: vec![ConvStage::new(2, 3)],
            hidden_units: 4,
            num_classes: NUM_CLASSES,
            seed: 42,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(NetworkError::Config(m));
        if self.num_classes != NUM_CLASSES {
            return err(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes));
        }
        if self.input_size == 0 {
            return err("input_size must be positive".into());
        }
        if self.conv_stages.is_empty() {
            return err("at least one conv stage is required".into());
        }
        if self.conv_stages.len() >= usize::BITS as usize
            || !self.input_size.is_multiple_of(1usize << self.conv_stages.len())
        {
            return err(format!(
                "input_size {} is not divisible by 2^{} (one halving per conv stage)",
                self.input_size,
                self.conv_stages.len()
            ));
        }
        for (i, stage) in self.conv_stages.iter().enumerate() {
            if stage.filters == 0 {
                return err(format!("stage {i}: filters must be positive"));
            }
            if stage.kernel_size % 2 == 0 {
                return err(format!("stage {i}: kernel size {} must be odd", stage.kernel_size));
            }
        }
        if self.hidden_units == 0 {
            return err("hidden_units must be positive".into());
        }
        Ok(())
    }

    /// Side length after all pooling stages.
    pub fn final_side(&self) -> usize {
        self.input_size >> self.conv_stages.len()
    }

    pub fn flattened_len(&self) -> usize {
        let last = self.conv_stages.last().map_or(3, |s| s.filters);
        last * self.final_side() * self.final_side()
    }

    /// Name and shape of every learned tensor, in canonical order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut in_ch = 3;
        for (i, stage) in self.conv_stages.iter().enumerate() {
            let k = stage.kernel_size;
            shapes.push((format!("conv{i}.weight"), vec![stage.filters, in_ch, k, k]));
            shapes.push((format!("conv{i}.bias"), vec![stage.filters]));
            in_ch = stage.filters;
        }
        shapes.push(("hidden.weight".into(), vec![self.hidden_units, self.flattened_len()]));
        shapes.push(("hidden.bias".into(), vec![self.hidden_units]));
        shapes.push(("output.weight".into(), vec![self.num_classes, self.hidden_units]));
        shapes.push(("output.bias".into(), vec![self.num_classes]));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

/// A built network. Parameters are stored in the order given by
/// [`ModelConfig::parameter_shapes`].
#[derive(Debug)]
pub struct Model {
    config: ModelConfig,
    convs: Vec<ConvKernelSet>,
    hidden_w: Tensor,
    hidden_b: Tensor,
    out_w: Tensor,
    out_b: Tensor,
    // (id, revision) stamp forward caches so backward can reject stale ones
    id: u64,
    revision: u64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            convs: self.convs.clone(),
            hidden_w: self.hidden_w.clone(),
            hidden_b: self.hidden_b.clone(),
            out_w: self.out_w.clone(),
            out_b: self.out_b.clone(),
            id: fresh_id(),
            revision: 0,
        }
    }
}

impl Model {
    /// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases drawn from
    /// a ChaCha8 stream seeded by `config.seed`.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt() as f32;
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| {
                        let z: f32 = StandardNormal.sample(&mut rng);
                        z * std
                    })
                    .collect();
                Tensor::from_vec(&shape, data)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_parameters(config, tensors)
    }

    /// Every parameter zero; useful as a neutral baseline.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .parameter_shapes()
            .into_iter()
            .map(|(_, shape)| Tensor::zeros(&shape))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_parameters(config, tensors)
    }

    /// Reassembles a model from tensors in canonical order, checking every
    /// shape against the config.
    pub fn from_parameters(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if shapes.len() != tensors.len() {
            return Err(NetworkError::ParameterCount {
                expected: shapes.len(),
                actual: tensors.len(),
            });
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(NetworkError::ParameterShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut convs = Vec::with_capacity(config.conv_stages.len());
        for stage in &config.conv_stages {
            let (w, b) = (it.next().unwrap(), it.next().unwrap());
            convs.push(ConvKernelSet::new(w, b, 1, stage.kernel_size / 2)?);
        }
        let (hidden_w, hidden_b, out_w, out_b) = (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        );
        Ok(Self {
            config,
            convs,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
            id: fresh_id(),
            revision: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::with_capacity(2 * self.convs.len() + 4);
        for k in &self.convs {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.extend([&self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]);
        out
    }

    /// Mutable access for optimizers. Any forward cache taken before this call
    /// becomes stale.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.revision += 1;
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(2 * self.convs.len() + 4);
        for k in &mut self.convs {
            out.push(&mut k.weights);
            out.push(&mut k.bias);
        }
        out.extend([&mut self.hidden_w, &mut self.hidden_b, &mut self.out_w, &mut self.out_b]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// SHA-256 over the little-endian bytes of every parameter, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.parameters() {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex_digest(h)
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let s = self.config.input_size;
        if input.shape() != [3, s, s] {
            return Err(NetworkError::InputShape {
                side: s,
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(input)?;
        let mut stages = Vec::with_capacity(self.convs.len());
        let mut x = input.clone();
        for k in &self.convs {
            let pre = tensor::conv2d_forward(&x, k)?;
            let act = tensor::relu_forward(&pre);
            let (pooled, pool) = tensor::maxpool2_forward(&act)?;
            stages.push(StageCache { input: x, pre, pool });
            x = pooled;
        }
        let pooled_shape = x.shape().to_vec();
        let flat = x.reshape(&[self.config.flattened_len()])?;
        let hidden_pre = tensor::dense_forward(&flat, &self.hidden_w, &self.hidden_b)?;
        let hidden = tensor::relu_forward(&hidden_pre);
        let logits = tensor::dense_forward(&hidden, &self.out_w, &self.out_b)?;
        let cache = ForwardCache {
            model_id: self.id,
            revision: self.revision,
            stages,
            pooled_shape,
            flat,
            hidden_pre,
            hidden,
        };
        Ok((logits, cache))
    }

    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward(input)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<ParamGrads> {
        if cache.model_id != self.id || cache.revision != self.revision {
            return Err(NetworkError::StaleCache);
        }
        let (g_hidden, g_out_w, g_out_b) = tensor::dense_backward(&cache.hidden, &self.out_w, grad_logits)?;
        let g_hidden_pre = tensor::relu_backward(&cache.hidden_pre, &g_hidden)?;
        let (g_flat, g_hidden_w, g_hidden_b) = tensor::dense_backward(&cache.flat, &self.hidden_w, &g_hidden_pre)?;

        let mut grads: Vec<Tensor> = vec![g_out_b, g_out_w, g_hidden_b, g_hidden_w];
        let mut g = g_flat.reshape(&cache.pooled_shape)?;
        for (k, stage) in self.convs.iter().zip(&cache.stages).rev() {
            let g_act = tensor::maxpool2_backward(&stage.pool, &g)?;
            let g_pre = tensor::relu_backward(&stage.pre, &g_act)?;
            let (g_in, g_w, g_b) = tensor::conv2d_backward(&stage.input, k, &g_pre)?;
            grads.push(g_b);
            grads.push(g_w);
            g = g_in;
        }
        grads.reverse();
        Ok(ParamGrads { tensors: grads })
    }

    pub fn predict(&self, input: &Tensor) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(input)?))
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Tensor,
    pre: Tensor,
    pool: PoolIndexMap,
}

/// Activations recorded by [`Model::forward`], consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    model_id: u64,
    revision: u64,
    stages: Vec<StageCache>,
    pooled_shape: Vec<usize>,
    flat: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
}

/// One gradient tensor per parameter, in the model's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            tensors: model
                .parameters()
                .iter()
                .map(|t| Tensor::zeros(t.shape()).expect("parameter shapes are valid"))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: ClassLabel,
    pub distribution: [f32; NUM_CLASSES],
    pub confidence: f32,
}

impl Prediction {
    /// Softmax over the logits; the label is the first index holding the
    /// maximum probability.
    pub fn from_logits(logits: &Tensor) -> Self {
        let probs = tensor::softmax(logits);
        let mut distribution = [0f32; NUM_CLASSES];
        distribution.copy_from_slice(&probs.data()[..NUM_CLASSES]);
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if distribution[i] > distribution[best] {
                best = i;
            }
        }
        Self {
            label: ClassLabel::ALL[best],
            distribution,
            confidence: distribution[best],
        }
    }
}
