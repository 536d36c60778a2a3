//! Dense `f32` tensors and the hand-wired forward/backward kernels for every
//! layer type the network uses: convolution, ReLU, 2×2 max-pooling, dense
//! (fully-connected), softmax and cross-entropy.
//!
//! All kernels are pure functions of their inputs. Shape problems are
//! reported as [`TensorError`] values, never panics.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("data length {len} does not match shape {shape:?} (product {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        len: usize,
    },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: output would be empty for input {input:?} and kernel {kernel:?}")]
    EmptyOutput {
        op: &'static str,
        input: Vec<usize>,
        kernel: Vec<usize>,
    },
    #[error("maxpool2: spatial dims must be even, got {height}x{width}")]
    OddPoolInput { height: usize, width: usize },
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense array of `f32` with an explicit shape.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data[..8]", &preview)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be positive and at least one must be given".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly and holds
    /// only finite values.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let expected = check_shape(shape)?;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f32) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    /// Internal constructor for kernel outputs whose shape is known-good.
    fn raw(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected: n,
                len: self.data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    fn expect_shape(&self, op: &'static str, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.shape.len() != rank {
            return Err(TensorError::InvalidShape {
                shape: self.shape.clone(),
                reason: format!("{op} expects a rank-{rank} tensor"),
            });
        }
        Ok(())
    }
}

/// Weights `[out, in, kh, kw]`, bias `[out]`, stride and zero padding of one
/// convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernelSet {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvKernelSet {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        weights.expect_rank("conv2d kernel", 4)?;
        let out_channels = weights.shape[0];
        bias.expect_shape("conv2d bias", &[out_channels])?;
        if stride == 0 {
            return Err(TensorError::InvalidShape {
                shape: weights.shape.clone(),
                reason: "stride must be positive".into(),
            });
        }
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape[1]
    }

    pub fn kernel_dims(&self) -> (usize, usize) {
        (self.weights.shape[2], self.weights.shape[3])
    }

    /// Output `[C', H', W']` for an input `[C, H, W]`.
    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        if input.len() != 3 {
            return Err(TensorError::InvalidShape {
                shape: input.to_vec(),
                reason: "conv2d expects a [C, H, W] input".into(),
            });
        }
        if input[0] != self.in_channels() {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![self.in_channels(), input[1], input[2]],
                actual: input.to_vec(),
            });
        }
        let (kh, kw) = self.kernel_dims();
        let padded_h = input[1] + 2 * self.padding;
        let padded_w = input[2] + 2 * self.padding;
        if padded_h < kh || padded_w < kw {
            return Err(TensorError::EmptyOutput {
                op: "conv2d",
                input: input.to_vec(),
                kernel: self.weights.shape.clone(),
            });
        }
        Ok([
            self.out_channels(),
            (padded_h - kh) / self.stride + 1,
            (padded_w - kw) / self.stride + 1,
        ])
    }
}

/// For each pooled cell, the flat input index that won the window maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndexMap {
    input_shape: [usize; 3],
    indices: Vec<usize>,
}

impl PoolIndexMap {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let [c, h, w] = self.input_shape;
        [c, h / 2, w / 2]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Range of output columns `ox` whose tap `kx` lands inside the input row.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, tap: usize, pad: usize) -> (usize, usize) {
    // input position = ox*stride + tap - pad must lie in [0, in_len)
    let lo = if tap >= pad {
        0
    } else {
        (pad - tap).div_ceil(stride).min(out_len)
    };
    let limit = in_len + pad; // ox*stride + tap < limit
    let hi = if limit > tap {
        ((limit - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation of a `[C, H, W]` input with every kernel, plus bias.
pub fn conv2d_forward(input: &Tensor, k: &ConvKernelSet) -> Result<Tensor> {
    let [oc_n, oh, ow] = k.output_shape(&input.shape)?;
    let (ic_n, ih, iw) = (input.shape[0], input.shape[1], input.shape[2]);
    let (kh, kw) = k.kernel_dims();
    let (s, p) = (k.stride, k.padding);
    let w = &k.weights.data;
    let x = &input.data;

    let mut out = vec![0f32; oc_n * oh * ow];
    for oc in 0..oc_n {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(k.bias.data[oc]);
        for ic in 0..ic_n {
            let xin = &x[ic * ih * iw..(ic + 1) * ih * iw];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(oh, ih, s, ky, p);
                for kx in 0..kw {
                    let wv = w[((oc * ic_n + ic) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = valid_range(ow, iw, s, kx, p);
                    if ox_lo == ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let row_out = &mut plane[oy * ow..(oy + 1) * ow];
                        let row_in = &xin[iy * iw..(iy + 1) * iw];
                        if s == 1 {
                            let ix0 = ox_lo + kx - p;
                            let n = ox_hi - ox_lo;
                            for (o, i) in row_out[ox_lo..ox_hi].iter_mut().zip(&row_in[ix0..ix0 + n]) {
                                *o += wv * i;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                row_out[ox] += wv * row_in[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::raw(vec![oc_n, oh, ow], out))
}

/// Gradients of `conv2d_forward` with respect to input, weights and bias.
pub fn conv2d_backward(input: &Tensor, k: &ConvKernelSet, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let out_shape = k.output_shape(&input.shape)?;
    grad_out.expect_shape("conv2d_backward", &out_shape)?;
    let [oc_n, oh, ow] = out_shape;
    let (ic_n, ih, iw) = (input.shape[0], input.shape[1], input.shape[2]);
    let (kh, kw) = k.kernel_dims();
    let (s, p) = (k.stride, k.padding);
    let w = &k.weights.data;
    let x = &input.data;
    let g = &grad_out.data;

    let mut gx = vec![0f32; x.len()];
    let mut gw = vec![0f32; w.len()];
    let mut gb = vec![0f32; oc_n];

    for oc in 0..oc_n {
        let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        gb[oc] = gplane.iter().sum();
        for ic in 0..ic_n {
            let base = ic * ih * iw;
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(oh, ih, s, ky, p);
                for kx in 0..kw {
                    let widx = ((oc * ic_n + ic) * kh + ky) * kw + kx;
                    let wv = w[widx];
                    let (ox_lo, ox_hi) = valid_range(ow, iw, s, kx, p);
                    if ox_lo == ox_hi {
                        continue;
                    }
                    let mut acc = 0f32;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let row_off = base + iy * iw;
                        if s == 1 {
                            let ix0 = row_off + ox_lo + kx - p;
                            let n = ox_hi - ox_lo;
                            let gs = &grow[ox_lo..ox_hi];
                            for (gv, xv) in gs.iter().zip(&x[ix0..ix0 + n]) {
                                acc += gv * xv;
                            }
                            for (gi, gv) in gx[ix0..ix0 + n].iter_mut().zip(gs) {
                                *gi += wv * gv;
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate().take(ox_hi).skip(ox_lo) {
                                let ix = row_off + ox * s + kx - p;
                                acc += gv * x[ix];
                                gx[ix] += wv * gv;
                            }
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    Ok((
        Tensor::raw(input.shape.clone(), gx),
        Tensor::raw(k.weights.shape.clone(), gw),
        Tensor::raw(vec![oc_n], gb),
    ))
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::raw(x.shape.clone(), x.data.iter().map(|&v| v.max(0.0)).collect())
}

/// Passes `grad_out` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape("relu_backward", &x.shape)?;
    let data = x
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::raw(x.shape.clone(), data))
}

/// 2×2, stride-2 max-pooling. Ties go to the lowest flat index.
pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, PoolIndexMap)> {
    x.expect_rank("maxpool2", 3)?;
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::OddPoolInput { height: h, width: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut indices = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                // row-major scan order inside the window: strict `>` keeps the first
                let candidates = [top, top + 1, top + w, top + w + 1];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                out.push(x.data[best]);
                indices.push(best);
            }
        }
    }
    Ok((
        Tensor::raw(vec![c, oh, ow], out),
        PoolIndexMap {
            input_shape: [c, h, w],
            indices,
        },
    ))
}

pub fn maxpool2_backward(idx: &PoolIndexMap, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape("maxpool2_backward", &idx.output_shape())?;
    let [c, h, w] = idx.input_shape;
    let mut gx = vec![0f32; c * h * w];
    for (&i, &g) in idx.indices.iter().zip(&grad_out.data) {
        gx[i] += g;
    }
    Ok(Tensor::raw(idx.input_shape.to_vec(), gx))
}

/// `y = b + W·x` for `W: [m, n]`.
pub fn dense_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    weights.expect_rank("dense", 2)?;
    let (m, n) = (weights.shape[0], weights.shape[1]);
    x.expect_shape("dense input", &[n])?;
    bias.expect_shape("dense bias", &[m])?;
    let y = weights
        .data
        .chunks_exact(n)
        .zip(&bias.data)
        .map(|(row, &b)| b + row.iter().zip(&x.data).map(|(w, xv)| w * xv).sum::<f32>())
        .collect();
    Ok(Tensor::raw(vec![m], y))
}

/// Returns `(grad_x, grad_W, grad_b)`.
pub fn dense_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    weights.expect_rank("dense_backward", 2)?;
    let (m, n) = (weights.shape[0], weights.shape[1]);
    x.expect_shape("dense_backward input", &[n])?;
    grad_out.expect_shape("dense_backward grad", &[m])?;

    let mut gx = vec![0f32; n];
    let mut gw = vec![0f32; m * n];
    for ((row, grow), &g) in weights
        .data
        .chunks_exact(n)
        .zip(gw.chunks_exact_mut(n))
        .zip(&grad_out.data)
    {
        for ((gxj, &wij), (gwij, &xj)) in gx.iter_mut().zip(row).zip(grow.iter_mut().zip(&x.data)) {
            *gxj += wij * g;
            *gwij = g * xj;
        }
    }
    Ok((Tensor::raw(vec![n], gx), Tensor::raw(vec![m, n], gw), grad_out.clone()))
}

/// Overflow-safe softmax; exponentials are evaluated in `f64`.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.data.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::raw(logits.shape.clone(), exps.iter().map(|e| (e / total) as f32).collect())
}

pub const PROBABILITY_FLOOR: f32 = 1e-12;

/// Cross-entropy of a softmax output against a class index. The returned
/// gradient is with respect to the logits that produced `probs`.
pub fn cross_entropy(probs: &Tensor, target: usize) -> Result<(f32, Tensor)> {
    let k = probs.data.len();
    if target >= k {
        return Err(TensorError::TargetOutOfRange { target, classes: k });
    }
    let loss = -probs.data[target].max(PROBABILITY_FLOOR).ln();
    let mut grad = probs.data.clone();
    grad[target] -= 1.0;
    Ok((loss, Tensor::raw(probs.shape.clone(), grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    fn kernel(weights: Tensor, stride: usize, padding: usize) -> ConvKernelSet {
        let oc = weights.shape()[0];
        ConvKernelSet::new(weights, Tensor::zeros(&[oc]).unwrap(), stride, padding).unwrap()
    }

    #[test]
    fn tensor_rejects_bad_construction() {
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![0.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Tensor::from_vec(&[2], vec![0.0, f32::NAN]),
            Err(TensorError::NonFinite { index: 1 })
        ));
        assert!(Tensor::zeros(&[0, 3]).is_err());
    }

    #[test]
    fn conv_scalar_scaling() {
        let x = Tensor::filled(&[1, 3, 3], 1.0).unwrap();
        let k = kernel(t(&[1, 1, 1, 1], &[2.0]), 1, 0);
        let y = conv2d_forward(&x, &k).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_identity_kernel_with_padding() {
        let data: Vec<f32> = (0..16).map(|i| i as f32 * 0.5 - 3.0).collect();
        let x = t(&[1, 4, 4], &data);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let k = kernel(t(&[1, 1, 3, 3], &w), 1, 1);
        let y = conv2d_forward(&x, &k).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_stride_two_output_size() {
        let x = Tensor::filled(&[2, 7, 6], 1.0).unwrap();
        let k = kernel(Tensor::filled(&[3, 2, 3, 3], 1.0).unwrap(), 2, 1);
        let y = conv2d_forward(&x, &k).unwrap();
        // floor((7 + 2 - 3)/2) + 1 = 4, floor((6 + 2 - 3)/2) + 1 = 3
        assert_eq!(y.shape(), &[3, 4, 3]);
        // interior cell sees a full 2x3x3 window
        assert_eq!(y.data()[4], 18.0);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_empty_output() {
        let x = Tensor::zeros(&[2, 4, 4]).unwrap();
        let k = kernel(Tensor::zeros(&[1, 3, 3, 3]).unwrap(), 1, 0);
        assert!(matches!(conv2d_forward(&x, &k), Err(TensorError::ShapeMismatch { .. })));
        let x = Tensor::zeros(&[1, 2, 2]).unwrap();
        let k = kernel(Tensor::zeros(&[1, 1, 3, 3]).unwrap(), 1, 0);
        assert!(matches!(conv2d_forward(&x, &k), Err(TensorError::EmptyOutput { .. })));
    }

    #[test]
    fn conv_backward_zero_and_scalar() {
        let x = t(&[1, 1, 1], &[3.0]);
        let k = ConvKernelSet::new(t(&[1, 1, 1, 1], &[-2.0]), t(&[1], &[0.5]), 1, 0).unwrap();
        let (gx, gw, gb) = conv2d_backward(&x, &k, &t(&[1, 1, 1], &[1.0])).unwrap();
        assert_eq!(gx.data(), &[-2.0]);
        assert_eq!(gw.data(), &[3.0]);
        assert_eq!(gb.data(), &[1.0]);

        let x = Tensor::filled(&[2, 4, 4], 0.7).unwrap();
        let k = kernel(Tensor::filled(&[3, 2, 3, 3], 0.3).unwrap(), 1, 1);
        let (gx, gw, gb) = conv2d_backward(&x, &k, &Tensor::zeros(&[3, 4, 4]).unwrap()).unwrap();
        assert!(gx.data().iter().chain(gw.data()).chain(gb.data()).all(|&v| v == 0.0));

        assert!(conv2d_backward(&x, &k, &Tensor::zeros(&[3, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn relu_values() {
        let y = relu_forward(&t(&[3], &[-2.0, 3.5, 0.0]));
        assert_eq!(y.data(), &[0.0, 3.5, 0.0]);
        let g = relu_backward(&t(&[2], &[-1.0, 2.0]), &t(&[2], &[5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);
        let g = relu_backward(&t(&[1], &[0.0]), &t(&[1], &[7.0])).unwrap();
        assert_eq!(g.data(), &[0.0]);
        assert!(relu_backward(&t(&[1], &[0.0]), &t(&[2], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn maxpool_window_and_ties() {
        let (y, idx) = maxpool2_forward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx.indices(), &[3]);

        let (y, idx) = maxpool2_forward(&t(&[1, 2, 2], &[5.0; 4])).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(idx.indices(), &[0]);

        assert!(matches!(
            maxpool2_forward(&Tensor::zeros(&[1, 3, 4]).unwrap()),
            Err(TensorError::OddPoolInput { .. })
        ));
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        let data: Vec<f32> = (0..32).map(|i| ((i * 7) % 11) as f32).collect();
        let x = t(&[2, 4, 4], &data);
        let (_, idx) = maxpool2_forward(&x).unwrap();
        let g = maxpool2_backward(&idx, &Tensor::filled(&[2, 2, 2], 1.0).unwrap()).unwrap();
        assert_eq!(g.data().iter().sum::<f32>(), 8.0);
        for ch in 0..2 {
            for wy in 0..2 {
                for wx in 0..2 {
                    let cells = [(0, 0), (0, 1), (1, 0), (1, 1)];
                    let ones = cells
                        .iter()
                        .filter(|(dy, dx)| g.data()[ch * 16 + (2 * wy + dy) * 4 + 2 * wx + dx] == 1.0)
                        .count();
                    assert_eq!(ones, 1);
                }
            }
        }
        let g = maxpool2_backward(&idx, &Tensor::zeros(&[2, 2, 2]).unwrap()).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert!(maxpool2_backward(&idx, &Tensor::zeros(&[2, 4, 4]).unwrap()).is_err());
    }

    #[test]
    fn dense_identity_and_zero_input() {
        let x = t(&[3], &[1.0, -2.0, 0.5]);
        let eye = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dense_forward(&x, &eye, &Tensor::zeros(&[3]).unwrap()).unwrap(), x);

        let w = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[2], &[0.25, -1.0]);
        let y = dense_forward(&Tensor::zeros(&[3]).unwrap(), &w, &b).unwrap();
        assert_eq!(y, b);
        assert!(dense_forward(&t(&[2], &[1.0, 1.0]), &w, &b).is_err());
    }

    #[test]
    fn dense_backward_scalar_and_zero() {
        let (gx, gw, gb) = dense_backward(&t(&[1], &[3.0]), &t(&[1, 1], &[-2.0]), &t(&[1], &[0.5])).unwrap();
        assert_eq!(gx.data(), &[-1.0]);
        assert_eq!(gw.data(), &[1.5]);
        assert_eq!(gb.data(), &[0.5]);

        let (gx, gw, gb) = dense_backward(
            &t(&[2], &[1.0, 2.0]),
            &t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]),
            &Tensor::zeros(&[2]).unwrap(),
        )
        .unwrap();
        assert!(gx.data().iter().chain(gw.data()).chain(gb.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_symmetric_and_shift_invariant() {
        let p = softmax(&t(&[3], &[0.0, 0.0, 0.0]));
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let a = softmax(&t(&[4], &[0.3, -1.2, 2.0, 0.0]));
        let b = softmax(&t(&[4], &[100.3, 98.8, 102.0, 100.0]));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        // huge logits do not overflow
        let p = softmax(&t(&[2], &[1e30, 0.0]));
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let (loss, grad) = cross_entropy(&t(&[3], &[1.0, 0.0, 0.0]), 0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.data(), &[0.0, 0.0, 0.0]);

        let uniform = softmax(&t(&[3], &[0.0; 3]));
        for target in 0..3 {
            let (loss, _) = cross_entropy(&uniform, target).unwrap();
            assert!((loss as f64 - 3f64.ln()).abs() < 1e-6);
        }
        // floored probability keeps the loss finite
        let (loss, _) = cross_entropy(&t(&[2], &[1.0, 0.0]), 1).unwrap();
        assert!((loss - 27.631021).abs() < 1e-4);

        assert!(matches!(
            cross_entropy(&uniform, 3),
            Err(TensorError::TargetOutOfRange { target: 3, classes: 3 })
        ));
    }
}
