//! Denoiser training: per-step deterministic sampling, Adam, and an EMA of
//! the weights used for inference.

use super::patch::{sample_patch_at, PatchResolution};
use super::tensor::Tensor;
use super::unet::{DenoiserNetwork, UNetConfig};
use super::{DatasetScale, EDMConfig, TrainingExample};
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub lr: f64,
    pub ema_decay: f64,
    pub seed: u64,
    /// Steps between probe-loss evaluations (0 disables probes).
    pub probe_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            total_steps: 2000,
            lr: 1e-3,
            ema_decay: 0.999,
            seed: 0,
            probe_interval: 50,
        }
    }
}

/// Splitmix64-expanded deterministic stream: every consumer of randomness is
/// keyed by `(seed, stream, index)` so resumed runs replay identically.
pub fn derive_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = splitmix(seed ^ splitmix(stream.wrapping_add(1)));
    state ^= splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D));
    let mut bytes = [0u8; 32];
    let mut x = state;
    for chunk in bytes.chunks_mut(8) {
        x = splitmix(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

const STREAM_BATCH: u64 = 1;
const STREAM_PROBE: u64 = 2;

/// Network plus optimizer and EMA state; the unit that checkpoints persist.
pub struct Trainer {
    pub net: DenoiserNetwork,
    pub edm: EDMConfig,
    pub cfg: TrainConfig,
    pub scale: DatasetScale,
    pub step: u64,
    pub ema: Vec<Vec<f32>>,
    pub adam_m: Vec<Vec<f32>>,
    pub adam_v: Vec<Vec<f32>>,
}

impl Trainer {
    pub fn new(unet_cfg: UNetConfig, edm: EDMConfig, cfg: TrainConfig, scale: DatasetScale) -> Self {
        let mut net = DenoiserNetwork::new(unet_cfg, cfg.seed);
        let mut ema = Vec::new();
        let mut zeros = Vec::new();
        net.visit_params(&mut |_, p| {
            ema.push(p.value.clone());
            zeros.push(vec![0.0f32; p.value.len()]);
        });
        let adam_m = zeros.clone();
        let adam_v = zeros;
        Self {
            net,
            edm,
            cfg,
            scale,
            step: 0,
            ema,
            adam_m,
            adam_v,
        }
    }

    /// One optimization step over a freshly sampled batch. All randomness is
    /// a pure function of `(seed, step)`.
    pub fn train_step(&mut self, examples: &[TrainingExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rng = derive_rng(self.cfg.seed, STREAM_BATCH, self.step);
        let resolution = PatchResolution::draw(&mut rng);
        let batch = self.cfg.batch_size;

        let mut patches = Vec::with_capacity(batch);
        for _ in 0..batch {
            let idx = rng.gen_range(0..examples.len());
            let sigma = self.edm.sample_sigma(&mut rng);
            patches.push(sample_patch_at(&examples[idx], sigma, &mut rng, resolution)?);
        }
        let loss = self.step_on_patches(&patches)?;
        self.step += 1;
        Ok(loss)
    }

    fn step_on_patches(&mut self, patches: &[super::patch::PatchSample]) -> Result<f64> {
        let p = patches[0].coords.side();
        let batch = patches.len();
        let mut input = Tensor::zeros(batch, 4, p, p);
        let mut c_noise = vec![0.0f32; batch];
        for (s, patch) in patches.iter().enumerate() {
            let one = super::assemble_input(&self.edm, &patch.noisy, &patch.cond, &patch.coords, patch.sigma);
            input.sample_mut(s).copy_from_slice(one.sample(0));
            c_noise[s] = self.edm.c_noise(patch.sigma) as f32;
        }

        let f_out = self.net.forward(&input, &c_noise);

        // loss = mean_{batch, pixels} lambda(sigma) * (D - target)^2 with
        // D = c_skip * noisy + c_out * F
        let denom = (batch * p * p) as f64;
        let mut loss = 0.0f64;
        let mut d_f = Tensor::zeros(batch, 1, p, p);
        for (s, patch) in patches.iter().enumerate() {
            let c_skip = self.edm.c_skip(patch.sigma);
            let c_out = self.edm.c_out(patch.sigma);
            let weight = self.edm.loss_weight(patch.sigma);
            for r in 0..p {
                for c in 0..p {
                    let px = r * p + c;
                    let d = c_skip * patch.noisy[(r, c)] + c_out * f_out.sample(s)[px] as f64;
                    let diff = d - patch.target[(r, c)];
                    loss += weight * diff * diff / denom;
                    d_f.sample_mut(s)[px] = (weight * 2.0 * diff * c_out / denom) as f32;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss became {loss} at step {}", self.step)));
        }

        self.net.zero_grads();
        self.net.backward(&d_f);
        self.adam_update();
        self.ema_update();
        Ok(loss)
    }

    fn adam_update(&mut self) {
        let t = (self.step + 1) as f64;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);
        let lr = self.cfg.lr;
        let mut idx = 0;
        let m_all = &mut self.adam_m;
        let v_all = &mut self.adam_v;
        self.net.visit_params(&mut |_, p| {
            let m = &mut m_all[idx];
            let v = &mut v_all[idx];
            for ((w, &g), (mi, vi)) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                let g = g as f64;
                let m_new = b1 * (*mi as f64) + (1.0 - b1) * g;
                let v_new = b2 * (*vi as f64) + (1.0 - b2) * g * g;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let update = lr * (m_new / bias1) / ((v_new / bias2).sqrt() + eps);
                *w -= update as f32;
            }
            idx += 1;
        });
    }

    fn ema_update(&mut self) {
        let decay = self.cfg.ema_decay as f32;
        let mut idx = 0;
        let ema_all = &mut self.ema;
        self.net.visit_params(&mut |_, p| {
            for (e, &w) in ema_all[idx].iter_mut().zip(p.value.iter()) {
                *e = decay * *e + (1.0 - decay) * w;
            }
            idx += 1;
        });
    }

    /// Loss on a fixed probe batch (full-resolution crops, fixed noise
    /// levels); forward-only, never advances the step counter.
    pub fn probe_loss(&mut self, examples: &[TrainingExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rng = derive_rng(self.cfg.seed, STREAM_PROBE, 0);
        let probe_size = 4.min(examples.len() * 2).max(2);
        let zs = [-1.5f64, -0.5, 0.5, 1.5];
        let mut patches = Vec::new();
        for i in 0..probe_size {
            let idx = rng.gen_range(0..examples.len());
            let sigma = (self.edm.p_mean + self.edm.p_std * zs[i % zs.len()]).exp();
            patches.push(sample_patch_at(&examples[idx], sigma, &mut rng, PatchResolution::Full)?);
        }

        let p = patches[0].coords.side();
        let batch = patches.len();
        let mut input = Tensor::zeros(batch, 4, p, p);
        let mut c_noise = vec![0.0f32; batch];
        for (s, patch) in patches.iter().enumerate() {
            let one = super::assemble_input(&self.edm, &patch.noisy, &patch.cond, &patch.coords, patch.sigma);
            input.sample_mut(s).copy_from_slice(one.sample(0));
            c_noise[s] = self.edm.c_noise(patch.sigma) as f32;
        }
        let f_out = self.net.forward(&input, &c_noise);
        let denom = (batch * p * p) as f64;
        let mut loss = 0.0f64;
        for (s, patch) in patches.iter().enumerate() {
            let c_skip = self.edm.c_skip(patch.sigma);
            let c_out = self.edm.c_out(patch.sigma);
            let weight = self.edm.loss_weight(patch.sigma);
            for r in 0..p {
                for c in 0..p {
                    let d = c_skip * patch.noisy[(r, c)] + c_out * f_out.sample(s)[r * p + c] as f64;
                    let diff = d - patch.target[(r, c)];
                    loss += weight * diff * diff / denom;
                }
            }
        }
        Ok(loss)
    }

    /// Runs up to `cfg.total_steps`, reporting probe losses. Returns the
    /// probe-loss history as `(step, loss)` pairs.
    pub fn run(
        &mut self,
        examples: &[TrainingExample],
        mut on_probe: impl FnMut(u64, f64),
    ) -> Result<Vec<(u64, f64)>> {
        let mut history = Vec::new();
        let probe_every = self.cfg.probe_interval;
        if probe_every > 0 && self.step == 0 {
            let l = self.probe_loss(examples)?;
            history.push((0, l));
            on_probe(0, l);
        }
        while self.step < self.cfg.total_steps {
            self.train_step(examples)?;
            if probe_every > 0 && self.step % probe_every == 0 {
                let l = self.probe_loss(examples)?;
                history.push((self.step, l));
                on_probe(self.step, l);
            }
        }
        Ok(history)
    }

    /// A copy of the network carrying the EMA weights; the one used for
    /// sampling.
    pub fn ema_network(&mut self) -> DenoiserNetwork {
        let mut net = DenoiserNetwork::new(self.net.config.clone(), 0);
        let ema = &self.ema;
        let mut idx = 0;
        net.visit_params(&mut |_, p| {
            p.value.copy_from_slice(&ema[idx]);
            idx += 1;
        });
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{dataset_scale, randn_matrix};

    fn tiny_setup(side: usize, steps: u64) -> (Vec<TrainingExample>, Trainer) {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let gt = randn_matrix(&mut rng, side, side);
        let init = &gt + randn_matrix(&mut rng, side, side) * 0.3;
        let scale = dataset_scale(std::slice::from_ref(&gt), 0.5).unwrap();
        let examples = vec![TrainingExample::new_scaled("pair", &init, &gt, &scale).unwrap()];
        let unet = UNetConfig {
            model_channels: 8,
            channel_mult: vec![1, 2],
            num_blocks: 1,
            ..Default::default()
        };
        let edm = EDMConfig {
            image_size: side,
            ..Default::default()
        };
        let cfg = TrainConfig {
            batch_size: 4,
            total_steps: steps,
            lr: 2e-3,
            ema_decay: 0.99,
            seed: 7,
            probe_interval: 0,
        };
        let trainer = Trainer::new(unet, edm, cfg, scale);
        (examples, trainer)
    }

    #[test]
    fn single_example_overfit_drops_probe_loss_tenfold() {
        let (examples, mut trainer) = tiny_setup(16, 0);
        let before = trainer.probe_loss(&examples).unwrap();
        for _ in 0..400 {
            trainer.train_step(&examples).unwrap();
        }
        let after = trainer.probe_loss(&examples).unwrap();
        assert!(
            after * 10.0 <= before,
            "probe loss {before} -> {after}, less than 10x improvement"
        );
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let (examples, mut a) = tiny_setup(16, 0);
        let (_, mut b) = tiny_setup(16, 0);
        let mut losses_a = Vec::new();
        for _ in 0..12 {
            losses_a.push(a.train_step(&examples).unwrap());
        }
        // b runs 5 steps, "pauses", then continues: losses must match a's
        let mut losses_b = Vec::new();
        for _ in 0..5 {
            losses_b.push(b.train_step(&examples).unwrap());
        }
        for _ in 5..12 {
            losses_b.push(b.train_step(&examples).unwrap());
        }
        assert_eq!(losses_a, losses_b);
        // and the weights agree bitwise
        let mut wa = Vec::new();
        a.net.visit_params(&mut |_, p| wa.push(p.value.clone()));
        let mut wb = Vec::new();
        b.net.visit_params(&mut |_, p| wb.push(p.value.clone()));
        assert_eq!(wa, wb);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (_, mut trainer) = tiny_setup(16, 0);
        assert!(matches!(trainer.train_step(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn ema_network_differs_from_live_until_converged() {
        let (examples, mut trainer) = tiny_setup(16, 0);
        for _ in 0..5 {
            trainer.train_step(&examples).unwrap();
        }
        let mut live = Vec::new();
        trainer.net.visit_params(&mut |_, p| live.push(p.value.clone()));
        let mut ema_net = trainer.ema_network();
        let mut ema = Vec::new();
        ema_net.visit_params(&mut |_, p| ema.push(p.value.clone()));
        assert_ne!(live, ema);
    }
}
