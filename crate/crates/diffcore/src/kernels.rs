//! Raw forward/backward kernels over flat row-major buffers.
//!
//! Tensors of rank 3 are laid out `[batch, channels, length]`. Every
//! reduction runs in a fixed order so results are bit-reproducible.

/// `c = a · b + beta · c` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, s: (usize, usize)| (rows - 1) * s.0 + (cols - 1) * s.1;
    if k > 0 {
        assert!(last(m, k, a_strides) < a.len());
        assert!(last(k, n, b_strides) < b.len());
    }
    assert!(last(m, n, c_strides) < c.len());
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseDims {
    pub batch: usize,
    pub inputs: usize,
    pub outputs: usize,
}

/// `y[b, o] = Σ_i x[b, i] w[o, i] + bias[o]`.
pub fn dense_forward(x: &[f64], w: &[f64], bias: &[f64], d: DenseDims) -> Vec<f64> {
    let mut y = Vec::with_capacity(d.batch * d.outputs);
    for _ in 0..d.batch {
        y.extend_from_slice(bias);
    }
    gemm(d.batch, d.inputs, d.outputs, x, (d.inputs, 1), w, (1, d.inputs), 1.0, &mut y, (d.outputs, 1));
    y
}

/// Returns `(dx, dw, dbias)`.
pub fn dense_backward(x: &[f64], w: &[f64], gy: &[f64], d: DenseDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; d.batch * d.inputs];
    gemm(d.batch, d.outputs, d.inputs, gy, (d.outputs, 1), w, (d.inputs, 1), 0.0, &mut dx, (d.inputs, 1));
    let mut dw = vec![0.0; d.outputs * d.inputs];
    gemm(d.outputs, d.batch, d.inputs, gy, (1, d.outputs), x, (d.inputs, 1), 0.0, &mut dw, (d.inputs, 1));
    let mut db = vec![0.0; d.outputs];
    for row in gy.chunks_exact(d.outputs) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub length: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvDims {
    /// Output length, or `None` when the kernel does not fit the padded input.
    pub fn out_length(&self) -> Option<usize> {
        let padded = self.length + 2 * self.padding;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

/// Unfolds `x [B, Cin, L]` into `[Cin·K, B·Lout]` columns.
fn im2col(x: &[f64], d: ConvDims, lout: usize) -> Vec<f64> {
    let cols_n = d.batch * lout;
    let mut cols = vec![0.0; d.in_channels * d.kernel * cols_n];
    for ci in 0..d.in_channels {
        for k in 0..d.kernel {
            let row = &mut cols[(ci * d.kernel + k) * cols_n..(ci * d.kernel + k + 1) * cols_n];
            for b in 0..d.batch {
                let src = &x[(b * d.in_channels + ci) * d.length..(b * d.in_channels + ci + 1) * d.length];
                for l in 0..lout {
                    let pos = (l * d.stride + k) as isize - d.padding as isize;
                    if pos >= 0 && (pos as usize) < d.length {
                        row[b * lout + l] = src[pos as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Cross-correlation with zero padding: `x [B, Cin, L]`, `w [Cout, Cin, K]`.
pub fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], d: ConvDims) -> Vec<f64> {
    let lout = d.out_length().expect("conv dims validated by caller");
    let cols = im2col(x, d, lout);
    let cols_n = d.batch * lout;
    let ck = d.in_channels * d.kernel;
    let mut tmp = vec![0.0; d.out_channels * cols_n];
    gemm(d.out_channels, ck, cols_n, w, (ck, 1), &cols, (cols_n, 1), 0.0, &mut tmp, (cols_n, 1));
    let mut out = vec![0.0; d.batch * d.out_channels * lout];
    for co in 0..d.out_channels {
        for b in 0..d.batch {
            let src = &tmp[co * cols_n + b * lout..co * cols_n + (b + 1) * lout];
            let dst = &mut out[(b * d.out_channels + co) * lout..(b * d.out_channels + co + 1) * lout];
            for (o, s) in dst.iter_mut().zip(src) {
                *o = s + bias[co];
            }
        }
    }
    out
}

/// Returns `(dx, dw, dbias)`.
pub fn conv1d_backward(x: &[f64], w: &[f64], gout: &[f64], d: ConvDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lout = d.out_length().expect("conv dims validated by caller");
    let cols_n = d.batch * lout;
    let ck = d.in_channels * d.kernel;
    // Regroup the output gradient as [Cout, B·Lout].
    let mut g = vec![0.0; d.out_channels * cols_n];
    let mut db = vec![0.0; d.out_channels];
    for b in 0..d.batch {
        for co in 0..d.out_channels {
            let src = &gout[(b * d.out_channels + co) * lout..(b * d.out_channels + co + 1) * lout];
            g[co * cols_n + b * lout..co * cols_n + (b + 1) * lout].copy_from_slice(src);
        }
    }
    for (co, acc) in db.iter_mut().enumerate() {
        *acc = g[co * cols_n..(co + 1) * cols_n].iter().sum();
    }
    let cols = im2col(x, d, lout);
    let mut dw = vec![0.0; d.out_channels * ck];
    gemm(d.out_channels, cols_n, ck, &g, (cols_n, 1), &cols, (1, cols_n), 0.0, &mut dw, (ck, 1));
    let mut dcols = vec![0.0; ck * cols_n];
    gemm(ck, d.out_channels, cols_n, w, (1, ck), &g, (cols_n, 1), 0.0, &mut dcols, (cols_n, 1));
    let mut dx = vec![0.0; x.len()];
    for ci in 0..d.in_channels {
        for k in 0..d.kernel {
            let row = &dcols[(ci * d.kernel + k) * cols_n..(ci * d.kernel + k + 1) * cols_n];
            for b in 0..d.batch {
                let dst = &mut dx[(b * d.in_channels + ci) * d.length..(b * d.in_channels + ci + 1) * d.length];
                for l in 0..lout {
                    let pos = (l * d.stride + k) as isize - d.padding as isize;
                    if pos >= 0 && (pos as usize) < d.length {
                        dst[pos as usize] += row[b * lout + l];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormDims {
    pub batch: usize,
    pub channels: usize,
    pub length: usize,
    pub groups: usize,
}

impl NormDims {
    fn group_len(&self) -> usize {
        self.channels / self.groups * self.length
    }
}

/// Per-(batch, group) mean and inverse standard deviation.
fn group_stats(x: &[f64], d: NormDims, eps: f64) -> Vec<(f64, f64)> {
    let n = d.group_len();
    x.chunks_exact(n)
        .map(|g| {
            let mean = g.iter().sum::<f64>() / n as f64;
            let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            (mean, 1.0 / (var + eps).sqrt())
        })
        .collect()
}

pub fn group_norm_forward(x: &[f64], gamma: &[f64], beta: &[f64], d: NormDims, eps: f64) -> Vec<f64> {
    let stats = group_stats(x, d, eps);
    let mut out = vec![0.0; x.len()];
    for b in 0..d.batch {
        for c in 0..d.channels {
            let (mean, inv) = stats[b * d.groups + c / (d.channels / d.groups)];
            let base = (b * d.channels + c) * d.length;
            for l in 0..d.length {
                out[base + l] = (x[base + l] - mean) * inv * gamma[c] + beta[c];
            }
        }
    }
    out
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn group_norm_backward(
    x: &[f64],
    gamma: &[f64],
    gout: &[f64],
    d: NormDims,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let stats = group_stats(x, d, eps);
    let per_group = d.channels / d.groups;
    let n = d.group_len() as f64;
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; d.channels];
    let mut dbeta = vec![0.0; d.channels];
    for b in 0..d.batch {
        for g in 0..d.groups {
            let (mean, inv) = stats[b * d.groups + g];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for c in g * per_group..(g + 1) * per_group {
                let base = (b * d.channels + c) * d.length;
                for l in 0..d.length {
                    let xhat = (x[base + l] - mean) * inv;
                    let gy = gout[base + l];
                    dgamma[c] += gy * xhat;
                    dbeta[c] += gy;
                    let dxhat = gy * gamma[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
            }
            for c in g * per_group..(g + 1) * per_group {
                let base = (b * d.channels + c) * d.length;
                for l in 0..d.length {
                    let xhat = (x[base + l] - mean) * inv;
                    let dxhat = gout[base + l] * gamma[c];
                    dx[base + l] = inv / n * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `x · tanh(softplus(x))`.
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    let sigmoid = 1.0 / (1.0 + (-x).exp());
    t + x * (1.0 - t * t) * sigmoid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_naive_loop() {
        let d = DenseDims { batch: 2, inputs: 3, outputs: 2 };
        let x = [1.0, 2.0, 3.0, -1.0, 0.5, 2.0];
        let w = [0.1, 0.2, 0.3, -0.4, 0.5, 0.6];
        let bias = [0.01, -0.02];
        let y = dense_forward(&x, &w, &bias, d);
        for b in 0..2 {
            for o in 0..2 {
                let expect: f64 = (0..3).map(|i| x[b * 3 + i] * w[o * 3 + i]).sum::<f64>() + bias[o];
                assert!((y[b * 2 + o] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mish_known_values() {
        assert_eq!(mish(0.0), 0.0);
        // softplus(0) = ln 2 and tanh(ln 2) = 3/5
        assert!((mish(1e-300) / 1e-300 - 0.6).abs() < 1e-15);
        assert!((mish(1.0) - (1.0f64.exp().ln_1p()).tanh()).abs() < 1e-15);
        assert!((mish(50.0) - 50.0).abs() < 1e-12);
        assert!(mish(-50.0).abs() < 1e-15);
    }
}
