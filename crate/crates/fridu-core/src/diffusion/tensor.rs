//! Minimal NCHW f32 tensor with the layer primitives the denoiser needs.
//! Convolutions run as im2col + sgemm; every op is single-pass deterministic.

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), n * c * h * w);
        Self { n, c, h, w, data }
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.h * self.w;
        let base = (n * self.c + c) * hw;
        &self.data[base..base + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let hw = self.h * self.w;
        let base = (n * self.c + c) * hw;
        &mut self.data[base..base + hw]
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let chw = self.c * self.h * self.w;
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let chw = self.c * self.h * self.w;
        &mut self.data[n * chw..(n + 1) * chw]
    }
}

/// `C = alpha * A(m x k) * B(k x n) + beta * C`, all row-major.
pub fn sgemm_rowmajor(m: usize, k: usize, n: usize, alpha: f32, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn conv_out_side(side: usize, stride: usize) -> usize {
    // 3x3 kernel, padding 1
    (side + 2 - 3) / stride + 1
}

/// Gathers 3x3 patches of one sample into a `(c_in * 9) x (h_out * w_out)`
/// column matrix (zero padding).
fn im2col(x: &Tensor, n: usize, stride: usize, cols: &mut [f32]) {
    let (c_in, h, w) = (x.c, x.h, x.w);
    let h_out = conv_out_side(h, stride);
    let w_out = conv_out_side(w, stride);
    let ow = h_out * w_out;
    debug_assert_eq!(cols.len(), c_in * 9 * ow);
    for c in 0..c_in {
        let plane = x.plane(n, c);
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = (c * 9 + ky * 3 + kx) * ow;
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - 1;
                    let out_base = row + oy * w_out;
                    if iy < 0 || iy >= h as isize {
                        cols[out_base..out_base + w_out].fill(0.0);
                        continue;
                    }
                    let in_base = iy as usize * w;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - 1;
                        cols[out_base + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            plane[in_base + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add transpose of [`im2col`].
fn col2im(cols: &[f32], stride: usize, dx: &mut Tensor, n: usize) {
    let (c_in, h, w) = (dx.c, dx.h, dx.w);
    let h_out = conv_out_side(h, stride);
    let w_out = conv_out_side(w, stride);
    let ow = h_out * w_out;
    for c in 0..c_in {
        let plane = dx.plane_mut(n, c);
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = (c * 9 + ky * 3 + kx) * ow;
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_base = iy as usize * w;
                    let out_base = row + oy * w_out;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            plane[in_base + ix as usize] += cols[out_base + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 convolution, padding 1. Weights `[c_out][c_in][3][3]` row-major.
pub fn conv2d_forward(weight: &[f32], bias: &[f32], x: &Tensor, c_out: usize, stride: usize) -> Tensor {
    let k = x.c * 9;
    debug_assert_eq!(weight.len(), c_out * k);
    debug_assert_eq!(bias.len(), c_out);
    let h_out = conv_out_side(x.h, stride);
    let w_out = conv_out_side(x.w, stride);
    let ow = h_out * w_out;
    let mut y = Tensor::zeros(x.n, c_out, h_out, w_out);
    let mut cols = vec![0.0f32; k * ow];
    for n in 0..x.n {
        im2col(x, n, stride, &mut cols);
        sgemm_rowmajor(c_out, k, ow, 1.0, weight, &cols, 0.0, y.sample_mut(n));
        for c in 0..c_out {
            let b = bias[c];
            for v in y.plane_mut(n, c) {
                *v += b;
            }
        }
    }
    y
}

/// Gradients of [`conv2d_forward`]; accumulates into `dw`/`db`.
pub fn conv2d_backward(
    weight: &[f32],
    x: &Tensor,
    dy: &Tensor,
    stride: usize,
    dw: &mut [f32],
    db: &mut [f32],
    want_dx: bool,
) -> Option<Tensor> {
    let c_out = dy.c;
    let k = x.c * 9;
    let ow = dy.h * dy.w;
    let mut cols = vec![0.0f32; k * ow];
    let mut dcols = vec![0.0f32; k * ow];
    let mut dx = want_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
    for n in 0..x.n {
        im2col(x, n, stride, &mut cols);
        // dW += dY * cols^T : (c_out x ow) * (ow x k)
        unsafe {
            matrixmultiply::sgemm(
                c_out,
                ow,
                k,
                1.0,
                dy.sample(n).as_ptr(),
                ow as isize,
                1,
                cols.as_ptr(),
                1,
                ow as isize, // cols^T via swapped strides
                1.0,
                dw.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        for c in 0..c_out {
            db[c] += dy.plane(n, c).iter().sum::<f32>();
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = W^T * dY : (k x c_out) * (c_out x ow)
            unsafe {
                matrixmultiply::sgemm(
                    k,
                    c_out,
                    ow,
                    1.0,
                    weight.as_ptr(),
                    1,
                    k as isize, // W^T via swapped strides
                    dy.sample(n).as_ptr(),
                    ow as isize,
                    1,
                    0.0,
                    dcols.as_mut_ptr(),
                    ow as isize,
                    1,
                );
            }
            col2im(&dcols, stride, dx, n);
        }
    }
    dx
}

/// Per-(sample, group) normalization with learned channel affine.
pub struct GroupNormCache {
    pub mean: Vec<f32>,    // n * groups
    pub inv_std: Vec<f32>, // n * groups
}

pub fn groupnorm_forward(gamma: &[f32], beta: &[f32], x: &Tensor, groups: usize, eps: f32) -> (Tensor, GroupNormCache) {
    assert_eq!(x.c % groups, 0, "channels {} not divisible by groups {groups}", x.c);
    let cpg = x.c / groups;
    let hw = x.h * x.w;
    let group_len = cpg * hw;
    let mut y = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut mean = vec![0.0f32; x.n * groups];
    let mut inv_std = vec![0.0f32; x.n * groups];
    for n in 0..x.n {
        for g in 0..groups {
            let mut acc = 0.0f64;
            for c in 0..cpg {
                for &v in x.plane(n, g * cpg + c) {
                    acc += v as f64;
                }
            }
            let mu = (acc / group_len as f64) as f32;
            let mut var = 0.0f64;
            for c in 0..cpg {
                for &v in x.plane(n, g * cpg + c) {
                    let d = v - mu;
                    var += (d * d) as f64;
                }
            }
            let istd = 1.0 / ((var / group_len as f64) as f32 + eps).sqrt();
            mean[n * groups + g] = mu;
            inv_std[n * groups + g] = istd;
            for c in 0..cpg {
                let ch = g * cpg + c;
                let (ga, be) = (gamma[ch], beta[ch]);
                let xp = x.plane(n, ch);
                let yp = y.plane_mut(n, ch);
                for (yo, &xi) in yp.iter_mut().zip(xp) {
                    *yo = (xi - mu) * istd * ga + be;
                }
            }
        }
    }
    (y, GroupNormCache { mean, inv_std })
}

pub fn groupnorm_backward(
    gamma: &[f32],
    x: &Tensor,
    cache: &GroupNormCache,
    dy: &Tensor,
    groups: usize,
    dgamma: &mut [f32],
    dbeta: &mut [f32],
) -> Tensor {
    let cpg = x.c / groups;
    let hw = x.h * x.w;
    let m = (cpg * hw) as f32;
    let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
    for n in 0..x.n {
        for g in 0..groups {
            let mu = cache.mean[n * groups + g];
            let istd = cache.inv_std[n * groups + g];
            // accumulate the two reduction terms over the group
            let mut sum_dxhat = 0.0f64;
            let mut sum_dxhat_xhat = 0.0f64;
            for c in 0..cpg {
                let ch = g * cpg + c;
                let ga = gamma[ch];
                let xp = x.plane(n, ch);
                let dyp = dy.plane(n, ch);
                let mut dg = 0.0f64;
                let mut db = 0.0f64;
                for (&xi, &dyi) in xp.iter().zip(dyp) {
                    let xhat = (xi - mu) * istd;
                    let dxhat = dyi * ga;
                    sum_dxhat += dxhat as f64;
                    sum_dxhat_xhat += (dxhat * xhat) as f64;
                    dg += (dyi * xhat) as f64;
                    db += dyi as f64;
                }
                dgamma[ch] += dg as f32;
                dbeta[ch] += db as f32;
            }
            let mean_dxhat = (sum_dxhat / m as f64) as f32;
            let mean_dxhat_xhat = (sum_dxhat_xhat / m as f64) as f32;
            for c in 0..cpg {
                let ch = g * cpg + c;
                let ga = gamma[ch];
                let xp = x.plane(n, ch);
                let dyp = dy.plane(n, ch);
                let dxp = dx.plane_mut(n, ch);
                for ((dxo, &xi), &dyi) in dxp.iter_mut().zip(xp).zip(dyp) {
                    let xhat = (xi - mu) * istd;
                    let dxhat = dyi * ga;
                    *dxo = istd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
        }
    }
    dx
}

pub fn silu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in &mut y.data {
        let s = 1.0 / (1.0 + (-*v).exp());
        *v *= s;
    }
    y
}

pub fn silu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &xi) in dx.data.iter_mut().zip(&x.data) {
        let s = 1.0 / (1.0 + (-xi).exp());
        *d *= s * (1.0 + xi * (1.0 - s));
    }
    dx
}

/// Scalar silu used by the embedding path.
pub fn silu_scalar(v: f32) -> f32 {
    v / (1.0 + (-v).exp())
}

pub fn silu_scalar_grad(v: f32) -> f32 {
    let s = 1.0 / (1.0 + (-v).exp());
    s * (1.0 + v * (1.0 - s))
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2_forward(x: &Tensor) -> Tensor {
    let mut y = Tensor::zeros(x.n, x.c, x.h * 2, x.w * 2);
    for n in 0..x.n {
        for c in 0..x.c {
            let xp = x.plane(n, c);
            let w2 = x.w * 2;
            let yp = y.plane_mut(n, c);
            for i in 0..x.h {
                for j in 0..x.w {
                    let v = xp[i * x.w + j];
                    let base = 2 * i * w2 + 2 * j;
                    yp[base] = v;
                    yp[base + 1] = v;
                    yp[base + w2] = v;
                    yp[base + w2 + 1] = v;
                }
            }
        }
    }
    y
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for n in 0..dy.n {
        for c in 0..dy.c {
            let dyp = dy.plane(n, c);
            let w2 = dy.w;
            let dxp = dx.plane_mut(n, c);
            for i in 0..h {
                for j in 0..w {
                    let base = 2 * i * w2 + 2 * j;
                    dxp[i * w + j] = dyp[base] + dyp[base + 1] + dyp[base + w2] + dyp[base + w2 + 1];
                }
            }
        }
    }
    dx
}

/// Channel concatenation `[a | b]`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w));
    let mut y = Tensor::zeros(a.n, a.c + b.c, a.h, a.w);
    for n in 0..a.n {
        for c in 0..a.c {
            y.plane_mut(n, c).copy_from_slice(a.plane(n, c));
        }
        for c in 0..b.c {
            y.plane_mut(n, a.c + c).copy_from_slice(b.plane(n, c));
        }
    }
    y
}

/// Splits a gradient back into the two concatenated parts.
pub fn split_channels(dy: &Tensor, c_a: usize) -> (Tensor, Tensor) {
    let c_b = dy.c - c_a;
    let mut da = Tensor::zeros(dy.n, c_a, dy.h, dy.w);
    let mut db = Tensor::zeros(dy.n, c_b, dy.h, dy.w);
    for n in 0..dy.n {
        for c in 0..c_a {
            da.plane_mut(n, c).copy_from_slice(dy.plane(n, c));
        }
        for c in 0..c_b {
            db.plane_mut(n, c).copy_from_slice(dy.plane(n, c_a + c));
        }
    }
    (da, db)
}
