//! Straightforward f64 reference implementations used as test oracles. They
//! share no code with the crate: every loop is written out directly.

#![allow(dead_code)]

use ocscreen_core::network::ModelConfig;

/// Direct-loop cross-correlation. `x` is `[c, h, w]`, `w` is `[o, c, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (c, h, w_in): (usize, usize, usize),
    w: &[f64],
    bias: &[f64],
    (o, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w_in + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w_in as isize {
                                continue;
                            }
                            let xv = x[(ic * h + iy as usize) * w_in + ix as usize];
                            acc += w[((oc * c + ic) * kh + ky) * kw + kx] * xv;
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub fn maxpool2(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                out[(ch * oh + y) * ow + xx] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
            }
        }
    }
    out
}

pub fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| bi + (0..n).map(|j| w[i * n + j] * x[j]).sum::<f64>())
        .collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Logits of the model described by `cfg`, with parameters given in
/// canonical order.
pub fn model_logits(cfg: &ModelConfig, params: &[Vec<f64>], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let (mut c, mut side) = (3, cfg.input_size);
    for (i, st) in cfg.conv_stages.iter().enumerate() {
        let k = st.kernel_size;
        let (y, oh, ow) = conv2d(
            &x,
            (c, side, side),
            &params[2 * i],
            &params[2 * i + 1],
            (st.filters, k, k),
            1,
            k / 2,
        );
        assert_eq!((oh, ow), (side, side));
        x = maxpool2(&relu(&y), (st.filters, side, side));
        c = st.filters;
        side /= 2;
    }
    let s = cfg.conv_stages.len() * 2;
    let h = relu(&dense(&x, &params[s], &params[s + 1]));
    dense(&h, &params[s + 2], &params[s + 3])
}

pub fn model_loss(cfg: &ModelConfig, params: &[Vec<f64>], input: &[f64], target: usize) -> f64 {
    -log_softmax(&model_logits(cfg, params, input))[target]
}

/// Precision and recall at threshold `t`: a sample is called positive when
/// its score is `>= t`.
pub fn precision_recall_at(scores: &[f64], truths: &[bool], t: f64) -> (f64, f64) {
    let mut tp = 0;
    let mut fp = 0;
    let positives = truths.iter().filter(|&&b| b).count();
    for (s, &y) in scores.iter().zip(truths) {
        if *s >= t {
            if y {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let p = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    (p, tp as f64 / positives as f64)
}

/// All-point interpolated AP by brute force over every distinct threshold:
/// sum over recall increments of the best precision at any recall at least
/// as high.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let (p, r) = precision_recall_at(scores, truths, t);
            (r, p)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for &(r, _) in &points {
        if r > prev_r {
            let best = points
                .iter()
                .filter(|(rr, _)| *rr >= r)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            ap += (r - prev_r) * best;
            prev_r = r;
        }
    }
    ap
}

/// Per-pixel bilinear sample with half-pixel centres and edge clamping.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_pixel(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize, x: usize, y: usize, ch: usize) -> f64 {
    let sx = ((x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5).clamp(0.0, (sw - 1) as f64);
    let sy = ((y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let p = |xx: usize, yy: usize| src[(yy * sw + xx) * 3 + ch] as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Least-squares fit of `y = a·ln(x) + b`, solved via the normal equations.
pub fn log_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        sx += lx;
        sy += y;
        sxx += lx * lx;
        sxy += lx * y;
    }
    let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let b = (sy - a * sx) / n;
    let mean = sy / n;
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - a * x.ln() - b).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}
