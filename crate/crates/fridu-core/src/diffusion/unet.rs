//! Small U-Net denoiser: two resolution levels with residual blocks,
//! noise-level embedding injected as per-block adaptive scale/shift, skip
//! connections by channel concatenation. Forward caches everything needed
//! for the hand-rolled backward pass.

use super::tensor::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture record. Channel counts per level are
/// `model_channels * channel_mult[level]`; level 0 runs at full resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub model_channels: usize,
    pub channel_mult: Vec<usize>,
    pub num_blocks: usize,
    pub channel_mult_emb: f64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 4, // noisy map + condition map + 2 coordinate channels
            out_channels: 1,
            model_channels: 16,
            channel_mult: vec![2, 4],
            num_blocks: 2,
            channel_mult_emb: 0.1,
        }
    }
}

impl UNetConfig {
    pub fn emb_channels(&self) -> usize {
        ((self.model_channels as f64 * self.channel_mult_emb).round() as usize).max(1)
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.model_channels * self.channel_mult[level]
    }

    /// Smallest spatial side the network accepts (one halving per extra level).
    pub fn min_side(&self) -> usize {
        1 << (self.channel_mult.len() - 1)
    }
}

fn groups_for(channels: usize) -> usize {
    let mut g = 8.min(channels);
    while channels % g != 0 {
        g -= 1;
    }
    g
}

const GN_EPS: f32 = 1e-5;
/// Number of Fourier frequencies in the noise embedding (2x features).
const FOURIER_FREQS: usize = 8;

pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    fn new(value: Vec<f32>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct Conv {
    c_out: usize,
    stride: usize,
    w: Param,
    b: Param,
    cache_x: Option<Tensor>,
}

impl Conv {
    fn new(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, stride: usize, zero_init: bool) -> Self {
        let fan_in = (c_in * 9) as f32;
        let std = 1.0 / fan_in.sqrt();
        let w: Vec<f32> = (0..c_out * c_in * 9)
            .map(|_| if zero_init { 0.0 } else { normal(rng) * std })
            .collect();
        Self {
            c_out,
            stride,
            w: Param::new(w),
            b: Param::new(vec![0.0; c_out]),
            cache_x: None,
        }
    }

    fn fwd(&mut self, x: &Tensor) -> Tensor {
        let y = conv2d_forward(&self.w.value, &self.b.value, x, self.c_out, self.stride);
        self.cache_x = Some(x.clone());
        y
    }

    fn bwd(&mut self, dy: &Tensor, want_dx: bool) -> Option<Tensor> {
        let x = self.cache_x.take().expect("conv backward without forward");
        conv2d_backward(&self.w.value, &x, dy, self.stride, &mut self.w.grad, &mut self.b.grad, want_dx)
    }
}

/// Pointwise (1x1) convolution used for residual shortcuts.
struct Conv1x1 {
    c_in: usize,
    c_out: usize,
    w: Param,
    b: Param,
    cache_x: Option<Tensor>,
}

impl Conv1x1 {
    fn new(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> Self {
        let std = 1.0 / (c_in as f32).sqrt();
        let w: Vec<f32> = (0..c_out * c_in).map(|_| normal(rng) * std).collect();
        Self {
            c_in,
            c_out,
            w: Param::new(w),
            b: Param::new(vec![0.0; c_out]),
            cache_x: None,
        }
    }

    fn fwd(&mut self, x: &Tensor) -> Tensor {
        let hw = x.h * x.w;
        let mut y = Tensor::zeros(x.n, self.c_out, x.h, x.w);
        for n in 0..x.n {
            sgemm_rowmajor(self.c_out, self.c_in, hw, 1.0, &self.w.value, x.sample(n), 0.0, y.sample_mut(n));
            for c in 0..self.c_out {
                let b = self.b.value[c];
                for v in y.plane_mut(n, c) {
                    *v += b;
                }
            }
        }
        self.cache_x = Some(x.clone());
        y
    }

    fn bwd(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("conv1x1 backward without forward");
        let hw = x.h * x.w;
        let mut dx = Tensor::zeros(x.n, self.c_in, x.h, x.w);
        for n in 0..x.n {
            // dW += dY * X^T
            unsafe {
                matrixmultiply::sgemm(
                    self.c_out,
                    hw,
                    self.c_in,
                    1.0,
                    dy.sample(n).as_ptr(),
                    hw as isize,
                    1,
                    x.sample(n).as_ptr(),
                    1,
                    hw as isize,
                    1.0,
                    self.w.grad.as_mut_ptr(),
                    self.c_in as isize,
                    1,
                );
            }
            for c in 0..self.c_out {
                self.b.grad[c] += dy.plane(n, c).iter().sum::<f32>();
            }
            // dX = W^T * dY
            unsafe {
                matrixmultiply::sgemm(
                    self.c_in,
                    self.c_out,
                    hw,
                    1.0,
                    self.w.value.as_ptr(),
                    1,
                    self.c_in as isize,
                    dy.sample(n).as_ptr(),
                    hw as isize,
                    1,
                    0.0,
                    dx.sample_mut(n).as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
        }
        dx
    }
}

struct GroupNorm {
    groups: usize,
    gamma: Param,
    beta: Param,
    cache: Option<(Tensor, GroupNormCache)>,
}

impl GroupNorm {
    fn new(channels: usize) -> Self {
        Self {
            groups: groups_for(channels),
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            cache: None,
        }
    }

    fn fwd(&mut self, x: &Tensor) -> Tensor {
        let (y, cache) = groupnorm_forward(&self.gamma.value, &self.beta.value, x, self.groups, GN_EPS);
        self.cache = Some((x.clone(), cache));
        y
    }

    fn bwd(&mut self, dy: &Tensor) -> Tensor {
        let (x, cache) = self.cache.take().expect("groupnorm backward without forward");
        groupnorm_backward(
            &self.gamma.value,
            &x,
            &cache,
            dy,
            self.groups,
            &mut self.gamma.grad,
            &mut self.beta.grad,
        )
    }
}

/// Dense layer on per-sample vectors, stored row-major `(n x dim)`.
struct Linear {
    dim_in: usize,
    dim_out: usize,
    w: Param,
    b: Param,
    cache_x: Option<Vec<f32>>,
}

impl Linear {
    fn new(rng: &mut ChaCha8Rng, dim_in: usize, dim_out: usize) -> Self {
        let std = 1.0 / (dim_in as f32).sqrt();
        let w: Vec<f32> = (0..dim_out * dim_in).map(|_| normal(rng) * std).collect();
        Self {
            dim_in,
            dim_out,
            w: Param::new(w),
            b: Param::new(vec![0.0; dim_out]),
            cache_x: None,
        }
    }

    fn fwd(&mut self, x: &[f32], n: usize) -> Vec<f32> {
        debug_assert_eq!(x.len(), n * self.dim_in);
        let mut y = vec![0.0f32; n * self.dim_out];
        for s in 0..n {
            for o in 0..self.dim_out {
                let mut acc = self.b.value[o];
                for i in 0..self.dim_in {
                    acc += self.w.value[o * self.dim_in + i] * x[s * self.dim_in + i];
                }
                y[s * self.dim_out + o] = acc;
            }
        }
        self.cache_x = Some(x.to_vec());
        y
    }

    fn bwd(&mut self, dy: &[f32], n: usize) -> Vec<f32> {
        let x = self.cache_x.take().expect("linear backward without forward");
        let mut dx = vec![0.0f32; n * self.dim_in];
        for s in 0..n {
            for o in 0..self.dim_out {
                let g = dy[s * self.dim_out + o];
                self.b.grad[o] += g;
                for i in 0..self.dim_in {
                    self.w.grad[o * self.dim_in + i] += g * x[s * self.dim_in + i];
                    dx[s * self.dim_in + i] += g * self.w.value[o * self.dim_in + i];
                }
            }
        }
        dx
    }
}

/// Residual block with adaptive scale/shift from the noise embedding:
/// `x -> gn1 -> silu -> conv1 -> gn2 -> (1+s)*h + b -> silu -> conv2 (+ skip)`.
struct ResBlock {
    c_out: usize,
    gn1: GroupNorm,
    conv1: Conv,
    emb_lin: Linear,
    gn2: GroupNorm,
    conv2: Conv,
    skip: Option<Conv1x1>,
    cache: Option<ResCache>,
    /// Gradient w.r.t. the shared embedding, picked up by the network pass.
    pending_demb: Option<Vec<f32>>,
}

struct ResCache {
    gn1_out: Tensor,
    gn2_out: Tensor,
    affine_out: Tensor,
    scale: Vec<f32>, // n * c_out
}

impl ResBlock {
    fn new(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, emb: usize) -> Self {
        Self {
            c_out,
            gn1: GroupNorm::new(c_in),
            conv1: Conv::new(rng, c_in, c_out, 1, false),
            emb_lin: Linear::new(rng, emb, 2 * c_out),
            gn2: GroupNorm::new(c_out),
            conv2: Conv::new(rng, c_out, c_out, 1, false),
            skip: (c_in != c_out).then(|| Conv1x1::new(rng, c_in, c_out)),
            cache: None,
            pending_demb: None,
        }
    }

    fn fwd(&mut self, x: &Tensor, emb: &[f32], n: usize) -> Tensor {
        let gn1_out = self.gn1.fwd(x);
        let h = self.conv1.fwd(&silu_forward(&gn1_out));
        let gn2_out = self.gn2.fwd(&h);
        let ss = self.emb_lin.fwd(emb, n); // n x 2*c_out: scale then shift
        let mut affine = gn2_out.clone();
        let mut scale_cache = vec![0.0f32; n * self.c_out];
        for s in 0..n {
            for c in 0..self.c_out {
                let sc = ss[s * 2 * self.c_out + c];
                let sh = ss[s * 2 * self.c_out + self.c_out + c];
                scale_cache[s * self.c_out + c] = sc;
                for v in affine.plane_mut(s, c) {
                    *v = *v * (1.0 + sc) + sh;
                }
            }
        }
        let mut out = self.conv2.fwd(&silu_forward(&affine));
        let shortcut = match self.skip.as_mut() {
            Some(conv) => conv.fwd(x),
            None => x.clone(),
        };
        for (o, s) in out.data.iter_mut().zip(&shortcut.data) {
            *o += s;
        }
        self.cache = Some(ResCache {
            gn1_out,
            gn2_out,
            affine_out: affine,
            scale: scale_cache,
        });
        out
    }

    fn bwd(&mut self, dy: &Tensor, n: usize) -> Tensor {
        let cache = self.cache.take().expect("resblock backward without forward");
        // main branch
        let d_silu2 = self.conv2.bwd(dy, true).unwrap();
        let d_affine = silu_backward(&cache.affine_out, &d_silu2);
        // affine: y = gn2_out * (1 + scale) + shift
        let mut d_gn2 = d_affine.clone();
        let mut d_ss = vec![0.0f32; n * 2 * self.c_out];
        for s in 0..n {
            for c in 0..self.c_out {
                let sc = cache.scale[s * self.c_out + c];
                let gplane = cache.gn2_out.plane(s, c);
                let dplane = d_affine.plane(s, c);
                let mut dsc = 0.0f32;
                let mut dsh = 0.0f32;
                for (&g, &d) in gplane.iter().zip(dplane) {
                    dsc += d * g;
                    dsh += d;
                }
                d_ss[s * 2 * self.c_out + c] = dsc;
                d_ss[s * 2 * self.c_out + self.c_out + c] = dsh;
                for v in d_gn2.plane_mut(s, c) {
                    *v *= 1.0 + sc;
                }
            }
        }
        self.pending_demb = Some(self.emb_lin.bwd(&d_ss, n));
        let d_conv1_out = self.gn2.bwd(&d_gn2);
        let d_silu1 = self.conv1.bwd(&d_conv1_out, true).unwrap();
        let d_gn1 = silu_backward(&cache.gn1_out, &d_silu1);
        let mut dx = self.gn1.bwd(&d_gn1);
        // shortcut branch
        match self.skip.as_mut() {
            Some(conv) => {
                let ds = conv.bwd(dy);
                for (a, b) in dx.data.iter_mut().zip(&ds.data) {
                    *a += b;
                }
            }
            None => {
                for (a, b) in dx.data.iter_mut().zip(&dy.data) {
                    *a += b;
                }
            }
        }
        dx
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f32 {
    use rand_distr::{Distribution, StandardNormal};
    let v: f64 = StandardNormal.sample(rng);
    v as f32
}

// ---------------------------------------------------------------------------
// network
// ---------------------------------------------------------------------------

enum EncItem {
    Res(ResBlock),
    Down(Conv),
}

enum DecItem {
    /// Residual block consuming one skip; records the skip's channel count.
    Res(ResBlock, usize),
    Up(Conv),
}

/// The conditional denoiser network `F`. Input channels carry
/// `[preconditioned noisy map | condition map | row coords | col coords]`.
pub struct DenoiserNetwork {
    pub config: UNetConfig,
    map_lin0: Linear,
    map_lin1: Linear,
    conv_in: Conv,
    enc: Vec<EncItem>,
    mid1: ResBlock,
    mid2: ResBlock,
    dec: Vec<DecItem>,
    out_gn: GroupNorm,
    out_conv: Conv,
    // backward bookkeeping
    fwd_state: Option<FwdState>,
}

struct FwdState {
    n: usize,
    emb_raw: Vec<f32>,     // fourier features, n x 2F
    emb_mid: Vec<f32>,     // lin0 output (pre-silu), n x E
    emb_mid2: Vec<f32>,    // lin1 output (pre-silu), n x E
    out_gn_out: Tensor,    // silu input of the output head
    skip_channels: Vec<usize>,
}

impl DenoiserNetwork {
    pub fn new(config: UNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = config.emb_channels();
        let levels = config.channel_mult.len();
        assert!(levels >= 1, "need at least one resolution level");

        let map_lin0 = Linear::new(&mut rng, 2 * FOURIER_FREQS, emb);
        let map_lin1 = Linear::new(&mut rng, emb, emb);
        let c0 = config.level_channels(0);
        let conv_in = Conv::new(&mut rng, config.in_channels, c0, 1, false);

        let mut enc = Vec::new();
        let mut ch = c0;
        for level in 0..levels {
            if level > 0 {
                enc.push(EncItem::Down(Conv::new(&mut rng, ch, ch, 2, false)));
            }
            let c_level = config.level_channels(level);
            for _ in 0..config.num_blocks {
                enc.push(EncItem::Res(ResBlock::new(&mut rng, ch, c_level, emb)));
                ch = c_level;
            }
        }
        let mid1 = ResBlock::new(&mut rng, ch, ch, emb);
        let mid2 = ResBlock::new(&mut rng, ch, ch, emb);

        // encoder skip channel layout, for the decoder construction:
        // conv_in output, then each encoder item's output
        let mut skip_ch = vec![c0];
        {
            let mut c = c0;
            for level in 0..levels {
                if level > 0 {
                    skip_ch.push(c);
                }
                for _ in 0..config.num_blocks {
                    c = config.level_channels(level);
                    skip_ch.push(c);
                }
            }
        }

        let mut dec = Vec::new();
        let mut pos = skip_ch.len();
        let mut h_ch = ch;
        for level in (0..levels).rev() {
            let c_level = config.level_channels(level);
            let blocks = config.num_blocks + 1;
            for _ in 0..blocks {
                pos -= 1;
                let s_ch = skip_ch[pos];
                dec.push(DecItem::Res(ResBlock::new(&mut rng, h_ch + s_ch, c_level, emb), s_ch));
                h_ch = c_level;
            }
            if level > 0 {
                let c_next = config.level_channels(level - 1);
                dec.push(DecItem::Up(Conv::new(&mut rng, h_ch, c_next, 1, false)));
                h_ch = c_next;
            }
        }
        debug_assert_eq!(pos, 0, "every skip consumed exactly once");

        let out_gn = GroupNorm::new(h_ch);
        let out_conv = Conv::new(&mut rng, h_ch, config.out_channels, 1, true); // zero-init head

        Self {
            config,
            map_lin0,
            map_lin1,
            conv_in,
            enc,
            mid1,
            mid2,
            dec,
            out_gn,
            out_conv,
            fwd_state: None,
        }
    }

    /// Raw network forward `F(input, c_noise)`. Spatial shape is preserved
    /// for any input side divisible by `config.min_side()`.
    pub fn forward(&mut self, input: &Tensor, c_noise: &[f32]) -> Tensor {
        let n = input.n;
        assert_eq!(c_noise.len(), n);
        assert_eq!(input.c, self.config.in_channels);
        assert_eq!(
            input.h % self.config.min_side(),
            0,
            "input side {} not divisible by {}",
            input.h,
            self.config.min_side()
        );

        // noise embedding trunk
        let emb_raw = fourier_features(c_noise);
        let emb_mid = self.map_lin0.fwd(&emb_raw, n);
        let emb_act: Vec<f32> = emb_mid.iter().map(|&v| silu_scalar(v)).collect();
        let emb_mid2 = self.map_lin1.fwd(&emb_act, n);
        let emb: Vec<f32> = emb_mid2.iter().map(|&v| silu_scalar(v)).collect();

        let mut skips: Vec<Tensor> = Vec::new();
        let mut skip_channels = Vec::new();
        let mut h = self.conv_in.fwd(input);
        skips.push(h.clone());
        skip_channels.push(h.c);
        for item in self.enc.iter_mut() {
            h = match item {
                EncItem::Res(block) => block.fwd(&h, &emb, n),
                EncItem::Down(conv) => conv.fwd(&h),
            };
            skips.push(h.clone());
            skip_channels.push(h.c);
        }
        h = self.mid1.fwd(&h, &emb, n);
        h = self.mid2.fwd(&h, &emb, n);
        for item in self.dec.iter_mut() {
            h = match item {
                DecItem::Res(block, _) => {
                    let skip = skips.pop().expect("skip available");
                    block.fwd(&concat_channels(&h, &skip), &emb, n)
                }
                DecItem::Up(conv) => conv.fwd(&upsample2_forward(&h)),
            };
        }
        debug_assert!(skips.is_empty());
        let gn_out = self.out_gn.fwd(&h);
        let y = self.out_conv.fwd(&silu_forward(&gn_out));

        self.fwd_state = Some(FwdState {
            n,
            emb_raw,
            emb_mid,
            emb_mid2,
            out_gn_out: gn_out,
            skip_channels,
        });
        y
    }

    /// Backpropagates `d(loss)/d(output)`, accumulating parameter gradients.
    pub fn backward(&mut self, dy: &Tensor) {
        let state = self.fwd_state.take().expect("backward without forward");
        let n = state.n;
        let mut demb_total = vec![0.0f32; n * self.config.emb_channels()];
        let add_demb = |buf: &mut Vec<f32>, block: &mut ResBlock| {
            if let Some(d) = block.pending_demb.take() {
                for (a, b) in buf.iter_mut().zip(&d) {
                    *a += b;
                }
            }
        };

        let d_silu = self.out_conv.bwd(dy, true).unwrap();
        let d_gn = silu_backward(&state.out_gn_out, &d_silu);
        let mut d = self.out_gn.bwd(&d_gn);

        // decoder in reverse; collect skip gradients per skip index
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; state.skip_channels.len()];
        let mut next_skip = 0usize; // skips were popped from the END in forward
        let total_skips = state.skip_channels.len();
        for item in self.dec.iter_mut().rev() {
            match item {
                DecItem::Res(block, s_ch) => {
                    let dcat = block.bwd(&d, n);
                    add_demb(&mut demb_total, block);
                    let h_ch = dcat.c - *s_ch;
                    let (dh, dskip) = split_channels(&dcat, h_ch);
                    let idx = total_skips - 1 - next_skip;
                    skip_grads[idx] = Some(dskip);
                    next_skip += 1;
                    d = dh;
                }
                DecItem::Up(conv) => {
                    let d_up = conv.bwd(&d, true).unwrap();
                    d = upsample2_backward(&d_up);
                }
            }
        }

        d = {
            let d2 = self.mid2.bwd(&d, n);
            add_demb(&mut demb_total, &mut self.mid2);
            let d1 = self.mid1.bwd(&d2, n);
            add_demb(&mut demb_total, &mut self.mid1);
            d1
        };

        // encoder in reverse: chain gradient plus this output's skip gradient
        let mut skip_idx = state.skip_channels.len() - 1;
        for item in self.enc.iter_mut().rev() {
            if let Some(sg) = skip_grads[skip_idx].take() {
                for (a, b) in d.data.iter_mut().zip(&sg.data) {
                    *a += b;
                }
            }
            skip_idx -= 1;
            d = match item {
                EncItem::Res(block) => {
                    let dx = block.bwd(&d, n);
                    add_demb(&mut demb_total, block);
                    dx
                }
                EncItem::Down(conv) => conv.bwd(&d, true).unwrap(),
            };
        }
        if let Some(sg) = skip_grads[0].take() {
            for (a, b) in d.data.iter_mut().zip(&sg.data) {
                *a += b;
            }
        }
        let _ = self.conv_in.bwd(&d, false);

        // embedding trunk backward
        let demb_mid2: Vec<f32> = demb_total
            .iter()
            .zip(&state.emb_mid2)
            .map(|(&g, &v)| g * silu_scalar_grad(v))
            .collect();
        let demb_act = self.map_lin1.bwd(&demb_mid2, n);
        let demb_mid: Vec<f32> = demb_act
            .iter()
            .zip(&state.emb_mid)
            .map(|(&g, &v)| g * silu_scalar_grad(v))
            .collect();
        let _ = self.map_lin0.bwd(&demb_mid, n);
        let _ = state.emb_raw;
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.grad.fill(0.0));
    }

    /// Walks all parameters in a fixed order; the order defines the
    /// checkpoint tensor layout and the optimizer state alignment.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        fn conv(f: &mut dyn FnMut(&str, &mut Param), path: &str, c: &mut Conv) {
            f(&format!("{path}.w"), &mut c.w);
            f(&format!("{path}.b"), &mut c.b);
        }
        fn conv1(f: &mut dyn FnMut(&str, &mut Param), path: &str, c: &mut Conv1x1) {
            f(&format!("{path}.w"), &mut c.w);
            f(&format!("{path}.b"), &mut c.b);
        }
        fn gn(f: &mut dyn FnMut(&str, &mut Param), path: &str, g: &mut GroupNorm) {
            f(&format!("{path}.gamma"), &mut g.gamma);
            f(&format!("{path}.beta"), &mut g.beta);
        }
        fn lin(f: &mut dyn FnMut(&str, &mut Param), path: &str, l: &mut Linear) {
            f(&format!("{path}.w"), &mut l.w);
            f(&format!("{path}.b"), &mut l.b);
        }
        fn res(f: &mut dyn FnMut(&str, &mut Param), path: &str, r: &mut ResBlock) {
            gn(f, &format!("{path}.gn1"), &mut r.gn1);
            conv(f, &format!("{path}.conv1"), &mut r.conv1);
            lin(f, &format!("{path}.emb"), &mut r.emb_lin);
            gn(f, &format!("{path}.gn2"), &mut r.gn2);
            conv(f, &format!("{path}.conv2"), &mut r.conv2);
            if let Some(s) = r.skip.as_mut() {
                conv1(f, &format!("{path}.skip"), s);
            }
        }

        lin(f, "map0", &mut self.map_lin0);
        lin(f, "map1", &mut self.map_lin1);
        conv(f, "conv_in", &mut self.conv_in);
        for (i, item) in self.enc.iter_mut().enumerate() {
            match item {
                EncItem::Res(r) => res(f, &format!("enc.{i}"), r),
                EncItem::Down(c) => conv(f, &format!("enc.{i}.down"), c),
            }
        }
        res(f, "mid1", &mut self.mid1);
        res(f, "mid2", &mut self.mid2);
        for (i, item) in self.dec.iter_mut().enumerate() {
            match item {
                DecItem::Res(r, _) => res(f, &format!("dec.{i}"), r),
                DecItem::Up(c) => conv(f, &format!("dec.{i}.up"), c),
            }
        }
        gn(f, "out_gn", &mut self.out_gn);
        conv(f, "out_conv", &mut self.out_conv);
    }

    pub fn param_count(&mut self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, p| total += p.value.len());
        total
    }
}

fn fourier_features(c_noise: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; c_noise.len() * 2 * FOURIER_FREQS];
    for (s, &t) in c_noise.iter().enumerate() {
        for k in 0..FOURIER_FREQS {
            let freq = (1u32 << k) as f32;
            out[s * 2 * FOURIER_FREQS + k] = (t * freq).cos();
            out[s * 2 * FOURIER_FREQS + FOURIER_FREQS + k] = (t * freq).sin();
        }
    }
    out
}
