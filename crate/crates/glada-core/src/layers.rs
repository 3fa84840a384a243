//! Forward/backward kernels for the layers used by the encoder, classifier,
//! and discriminator. Everything operates on flat f64 buffers in C order;
//! time-series tensors are `[batch][channel][time]`.

use alloc::vec;
use alloc::vec::Vec;

/// Batch-norm epsilon (denominator guard inside the square root).
pub const BN_EPS: f64 = 1e-5;

/// Momentum of the running-statistics update: `run = (1-m)*run + m*batch`.
pub const BN_MOMENTUM: f64 = 0.1;

/// Logit clamp keeping `sigmoid` strictly inside (0, 1) in f64.
const LOGIT_CLAMP: f64 = 34.0;

// ---------------------------------------------------------------------------
// 1D convolution (no bias; always followed by batch norm here)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dCfg {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dCfg {
    pub fn out_len(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel
    }
}

fn pad_zero(x: &[f64], b: usize, c: usize, len: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return x.to_vec();
    }
    let lp = len + 2 * pad;
    let mut out = vec![0.0; b * c * lp];
    for bi in 0..b {
        for ci in 0..c {
            let src = (bi * c + ci) * len;
            let dst = (bi * c + ci) * lp + pad;
            out[dst..dst + len].copy_from_slice(&x[src..src + len]);
        }
    }
    out
}

/// `w` is `[out_ch][in_ch][kernel]`; returns `[b][out_ch][out_len]`.
pub fn conv1d_forward(cfg: &Conv1dCfg, w: &[f64], x: &[f64], b: usize, len: usize) -> Vec<f64> {
    let lo = cfg.out_len(len).expect("sequence too short for convolution");
    let lp = len + 2 * cfg.padding;
    let xp = pad_zero(x, b, cfg.in_ch, len, cfg.padding);
    let mut y = vec![0.0; b * cfg.out_ch * lo];
    for bi in 0..b {
        for oc in 0..cfg.out_ch {
            let yrow = &mut y[(bi * cfg.out_ch + oc) * lo..][..lo];
            for ic in 0..cfg.in_ch {
                let wrow = &w[(oc * cfg.in_ch + ic) * cfg.kernel..][..cfg.kernel];
                let xrow = &xp[(bi * cfg.in_ch + ic) * lp..][..lp];
                for t in 0..lo {
                    let window = &xrow[t * cfg.stride..][..cfg.kernel];
                    let mut acc = 0.0;
                    for j in 0..cfg.kernel {
                        acc += wrow[j] * window[j];
                    }
                    yrow[t] += acc;
                }
            }
        }
    }
    y
}

/// Returns `(dw, dx)` for upstream gradient `dy` of shape `[b][out_ch][out_len]`.
pub fn conv1d_backward(
    cfg: &Conv1dCfg,
    w: &[f64],
    x: &[f64],
    b: usize,
    len: usize,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let lo = cfg.out_len(len).expect("sequence too short for convolution");
    let lp = len + 2 * cfg.padding;
    let xp = pad_zero(x, b, cfg.in_ch, len, cfg.padding);
    let mut dw = vec![0.0; w.len()];
    let mut dxp = vec![0.0; xp.len()];
    for bi in 0..b {
        for oc in 0..cfg.out_ch {
            let dyrow = &dy[(bi * cfg.out_ch + oc) * lo..][..lo];
            for ic in 0..cfg.in_ch {
                let wrow = &w[(oc * cfg.in_ch + ic) * cfg.kernel..][..cfg.kernel];
                let dwrow = &mut dw[(oc * cfg.in_ch + ic) * cfg.kernel..][..cfg.kernel];
                let xrow = &xp[(bi * cfg.in_ch + ic) * lp..][..lp];
                let dxrow = &mut dxp[(bi * cfg.in_ch + ic) * lp..][..lp];
                for t in 0..lo {
                    let g = dyrow[t];
                    if g == 0.0 {
                        continue;
                    }
                    let off = t * cfg.stride;
                    for j in 0..cfg.kernel {
                        dwrow[j] += g * xrow[off + j];
                        dxrow[off + j] += g * wrow[j];
                    }
                }
            }
        }
    }
    // Strip padding.
    let dx = if cfg.padding == 0 {
        dxp
    } else {
        let mut dx = vec![0.0; b * cfg.in_ch * len];
        for bi in 0..b {
            for ci in 0..cfg.in_ch {
                let src = (bi * cfg.in_ch + ci) * lp + cfg.padding;
                let dst = (bi * cfg.in_ch + ci) * len;
                dx[dst..dst + len].copy_from_slice(&dxp[src..src + len]);
            }
        }
        dx
    };
    (dw, dx)
}

// ---------------------------------------------------------------------------
// Batch normalization over [b][c][len], statistics per channel
// ---------------------------------------------------------------------------

/// Values cached by a batch-norm forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Number of positions per channel (`b * len`).
    pub count: usize,
    /// True if the cache came from a training-mode forward.
    pub train: bool,
}

/// Training mode: normalizes by batch statistics and updates the running
/// mean/var in place (unbiased variance for the running update).
pub fn bn_forward_train(
    gamma: &[f64],
    beta: &[f64],
    running_mean: &mut [f64],
    running_var: &mut [f64],
    x: &[f64],
    b: usize,
    c: usize,
    len: usize,
) -> (Vec<f64>, BnCache) {
    let count = b * len;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; c];
    for ci in 0..c {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for bi in 0..b {
            for v in &x[(bi * c + ci) * len..][..len] {
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / count as f64;
        let var = (sq / count as f64 - mean * mean).max(0.0);
        let istd = 1.0 / libm::sqrt(var + BN_EPS);
        inv_std[ci] = istd;
        let unbiased = if count > 1 { var * count as f64 / (count - 1) as f64 } else { var };
        running_mean[ci] = (1.0 - BN_MOMENTUM) * running_mean[ci] + BN_MOMENTUM * mean;
        running_var[ci] = (1.0 - BN_MOMENTUM) * running_var[ci] + BN_MOMENTUM * unbiased;
        for bi in 0..b {
            let off = (bi * c + ci) * len;
            for t in 0..len {
                let h = (x[off + t] - mean) * istd;
                xhat[off + t] = h;
                y[off + t] = gamma[ci] * h + beta[ci];
            }
        }
    }
    (y, BnCache { xhat, inv_std, count, train: true })
}

/// Eval mode: normalizes by the stored running statistics; deterministic.
pub fn bn_forward_eval(
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    x: &[f64],
    b: usize,
    c: usize,
    len: usize,
) -> (Vec<f64>, BnCache) {
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; c];
    for ci in 0..c {
        let istd = 1.0 / libm::sqrt(running_var[ci] + BN_EPS);
        inv_std[ci] = istd;
        for bi in 0..b {
            let off = (bi * c + ci) * len;
            for t in 0..len {
                let h = (x[off + t] - running_mean[ci]) * istd;
                xhat[off + t] = h;
                y[off + t] = gamma[ci] * h + beta[ci];
            }
        }
    }
    (y, BnCache { xhat, inv_std, count: b * len, train: false })
}

/// Returns `(dx, dgamma, dbeta)`. In training mode the batch statistics are
/// functions of the input, so the full coupled formula applies; in eval mode
/// the statistics are constants.
pub fn bn_backward(
    gamma: &[f64],
    cache: &BnCache,
    dy: &[f64],
    b: usize,
    c: usize,
    len: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let count = cache.count as f64;
    for ci in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for bi in 0..b {
            let off = (bi * c + ci) * len;
            for t in 0..len {
                sum_dy += dy[off + t];
                sum_dy_xhat += dy[off + t] * cache.xhat[off + t];
            }
        }
        dgamma[ci] = sum_dy_xhat;
        dbeta[ci] = sum_dy;
        let g = gamma[ci];
        let istd = cache.inv_std[ci];
        for bi in 0..b {
            let off = (bi * c + ci) * len;
            for t in 0..len {
                if cache.train {
                    dx[off + t] = g * istd / count
                        * (count * dy[off + t] - sum_dy - cache.xhat[off + t] * sum_dy_xhat);
                } else {
                    dx[off + t] = g * istd * dy[off + t];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `y` is the ReLU output; gradient passes only where the output is positive.
pub fn relu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect()
}

// ---------------------------------------------------------------------------
// Max pooling (padding counts as negative infinity, so it never wins)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolCfg {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolCfg {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Returns the pooled tensor and, per output, the flat input index that won
/// (ties go to the earliest position).
pub fn maxpool_forward(
    cfg: &PoolCfg,
    x: &[f64],
    b: usize,
    c: usize,
    len: usize,
) -> (Vec<f64>, Vec<u32>) {
    let lo = cfg.out_len(len);
    let mut y = vec![0.0; b * c * lo];
    let mut arg = vec![0u32; b * c * lo];
    for row in 0..b * c {
        let xrow = &x[row * len..][..len];
        for t in 0..lo {
            let start = (t * cfg.stride) as isize - cfg.padding as isize;
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0usize;
            for j in 0..cfg.kernel {
                let i = start + j as isize;
                if i < 0 || i >= len as isize {
                    continue;
                }
                let v = xrow[i as usize];
                if v > best {
                    best = v;
                    best_i = i as usize;
                }
            }
            y[row * lo + t] = best;
            arg[row * lo + t] = (row * len + best_i) as u32;
        }
    }
    (y, arg)
}

pub fn maxpool_backward(argmax: &[u32], dy: &[f64], input_len_total: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len_total];
    for (a, g) in argmax.iter().zip(dy) {
        dx[*a as usize] += g;
    }
    dx
}

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------

/// Samples a keep/drop mask and scales kept activations by `1/(1-rate)`.
/// The returned mask holds the multiplier applied to each element.
pub fn dropout_forward_train<R: rand::Rng>(
    x: &mut [f64],
    rate: f64,
    rng: &mut R,
) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    let mut mask = vec![0.0; x.len()];
    for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
        if rng.gen::<f64>() >= rate {
            *m = scale;
            *v *= scale;
        } else {
            *v = 0.0;
        }
    }
    mask
}

pub fn dropout_backward(mask: &[f64], dy: &[f64]) -> Vec<f64> {
    mask.iter().zip(dy).map(|(&m, &g)| m * g).collect()
}

// ---------------------------------------------------------------------------
// Global average pooling (adaptive average pool to length 1) + flatten
// ---------------------------------------------------------------------------

pub fn gap_forward(x: &[f64], b: usize, c: usize, len: usize) -> Vec<f64> {
    let mut y = vec![0.0; b * c];
    for row in 0..b * c {
        let mut s = 0.0;
        for v in &x[row * len..][..len] {
            s += v;
        }
        y[row] = s / len as f64;
    }
    y
}

pub fn gap_backward(df: &[f64], len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; df.len() * len];
    for (row, &g) in df.iter().enumerate() {
        let share = g / len as f64;
        for v in &mut dx[row * len..][..len] {
            *v = share;
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Fully connected layer
// ---------------------------------------------------------------------------

/// `w` is `[out][in]` row-major; returns `[b][out]`.
pub fn linear_forward(
    w: &[f64],
    bias: &[f64],
    x: &[f64],
    b: usize,
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; b * out_dim];
    for bi in 0..b {
        let xrow = &x[bi * in_dim..][..in_dim];
        let yrow = &mut y[bi * out_dim..][..out_dim];
        for o in 0..out_dim {
            let wrow = &w[o * in_dim..][..in_dim];
            let mut acc = bias[o];
            for i in 0..in_dim {
                acc += wrow[i] * xrow[i];
            }
            yrow[o] = acc;
        }
    }
    y
}

/// Returns `(dw, dbias, dx)`.
pub fn linear_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    b: usize,
    in_dim: usize,
    out_dim: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    let mut dx = vec![0.0; b * in_dim];
    for bi in 0..b {
        let xrow = &x[bi * in_dim..][..in_dim];
        let dyrow = &dy[bi * out_dim..][..out_dim];
        let dxrow = &mut dx[bi * in_dim..][..in_dim];
        for o in 0..out_dim {
            let g = dyrow[o];
            db[o] += g;
            let wrow = &w[o * in_dim..][..in_dim];
            let dwrow = &mut dw[o * in_dim..][..in_dim];
            for i in 0..in_dim {
                dwrow[i] += g * xrow[i];
                dxrow[i] += g * wrow[i];
            }
        }
    }
    (dw, db, dx)
}

// ---------------------------------------------------------------------------
// Softmax and logistic
// ---------------------------------------------------------------------------

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &[f64], b: usize, k: usize) -> Vec<f64> {
    let mut p = vec![0.0; logits.len()];
    for bi in 0..b {
        let row = &logits[bi * k..][..k];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let out = &mut p[bi * k..][..k];
        let mut sum = 0.0;
        for (o, &v) in out.iter_mut().zip(row) {
            let e = libm::exp(v - max);
            *o = e;
            sum += e;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    p
}

/// Logistic function with the logit clamped so the result stays strictly
/// inside (0, 1) in f64.
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + libm::exp(-z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        // kernel [1] with weight 1 reproduces the input.
        let cfg = Conv1dCfg { in_ch: 1, out_ch: 1, kernel: 1, stride: 1, padding: 0 };
        let x = vec![1.0, -2.0, 3.0, 0.5];
        let y = conv1d_forward(&cfg, &[1.0], &x, 1, 4);
        assert_eq!(y, x);
    }

    #[test]
    fn conv_known_values_with_padding() {
        // x = [1,2,3], w = [1,1], pad 1: windows [0,1],[1,2],[2,3],[3,0].
        let cfg = Conv1dCfg { in_ch: 1, out_ch: 1, kernel: 2, stride: 1, padding: 1 };
        let y = conv1d_forward(&cfg, &[1.0, 1.0], &[1.0, 2.0, 3.0], 1, 3);
        assert_eq!(y, vec![1.0, 3.0, 5.0, 3.0]);
    }

    #[test]
    fn bn_train_normalizes() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let mut rm = vec![0.0];
        let mut rv = vec![1.0];
        let (y, _) = bn_forward_train(&[1.0], &[0.0], &mut rm, &mut rv, &x, 1, 1, 4);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0 - mean * mean;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
        // Running stats moved toward the batch stats.
        assert!((rm[0] - 0.25).abs() < 1e-12); // 0.9*0 + 0.1*2.5
    }

    #[test]
    fn maxpool_matches_hand_trace() {
        // len 4, kernel 2, stride 2, pad 1 -> windows [-inf,1],[2,3],[4,-inf].
        let cfg = PoolCfg { kernel: 2, stride: 2, padding: 1 };
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let (y, arg) = maxpool_forward(&cfg, &x, 1, 1, 4);
        assert_eq!(y, vec![1.0, 3.0, 4.0]);
        assert_eq!(arg, vec![0, 2, 3]);
        let dx = maxpool_backward(&arg, &[1.0, 1.0, 1.0], 4);
        assert_eq!(dx, vec![1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&[1.0, 2.0, 3.0, -1.0, 0.0, 1.0], 2, 3);
        for bi in 0..2 {
            let s: f64 = p[bi * 3..bi * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        assert!(sigmoid(1e9) < 1.0);
        assert!(sigmoid(-1e9) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn gap_averages_and_spreads() {
        let y = gap_forward(&[1.0, 2.0, 3.0, 4.0], 1, 2, 2);
        assert_eq!(y, vec![1.5, 3.5]);
        let dx = gap_backward(&[1.0, 2.0], 2);
        assert_eq!(dx, vec![0.5, 0.5, 1.0, 1.0]);
    }
}
