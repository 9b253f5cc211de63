//! Conditional EDM denoiser over functional-map "images": noise model,
//! value scaling, preconditioning, patch-based training, and checkpoints.

pub mod checkpoint;
pub mod patch;
pub mod tensor;
pub mod train;
pub mod unet;

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use patch::{sample_patch, PatchResolution, PatchSample};
pub use tensor::Tensor;
pub use unet::{DenoiserNetwork, UNetConfig};

/// Noise-model and value-scale parameters of the EDM formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EDMConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Schedule exponent rho.
    pub rho: f64,
    /// Center of the log-normal training noise distribution.
    pub p_mean: f64,
    /// Spread of the log-normal training noise distribution.
    pub p_std: f64,
    pub sigma_data: f64,
    /// Square map side the model is trained at.
    pub image_size: usize,
}

impl Default for EDMConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            p_mean: -1.2,
            p_std: 1.2,
            sigma_data: 0.5,
            image_size: 128,
        }
    }
}

impl EDMConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.p_std <= 0.0 || self.sigma_data <= 0.0 || self.rho <= 0.0 {
            return Err(Error::Config("p_std, sigma_data, rho must be positive".into()));
        }
        Ok(())
    }

    /// Preconditioning coefficients of the denoiser
    /// `D(x; s) = c_skip * x + c_out * F(c_in * x, ..., c_noise)`.
    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sigma * self.sigma_data / (sigma * sigma + sd2).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        1.0 / (sigma * sigma + sd2).sqrt()
    }

    pub fn c_noise(&self, sigma: f64) -> f64 {
        sigma.ln() / 4.0
    }

    /// Loss weight `(sigma^2 + sigma_data^2) / (sigma * sigma_data)^2`; ties
    /// to the preconditioning through `loss_weight * c_out^2 = 1`.
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        (sigma * sigma + sd2) / (sigma * self.sigma_data).powi(2)
    }

    /// Draws `sigma` with `log sigma ~ N(p_mean, p_std^2)`.
    pub fn sample_sigma(&self, rng: &mut ChaCha8Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let z: f64 = StandardNormal.sample(rng);
        (self.p_mean + self.p_std * z).exp()
    }
}

/// Global value mapping between functional-map matrices and network-domain
/// images: divide by `s_data / sigma_data` so map entries have standard
/// deviation `sigma_data`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetScale {
    /// Standard deviation of all ground-truth map entries.
    pub s_data: f64,
    pub sigma_data: f64,
}

impl DatasetScale {
    pub fn factor(&self) -> f64 {
        self.s_data / self.sigma_data
    }

    pub fn scale(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        c / self.factor()
    }

    pub fn unscale(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        c * self.factor()
    }
}

/// Pooled standard deviation of all target-map entries.
pub fn dataset_scale(gt_maps: &[DMatrix<f64>], sigma_data: f64) -> Result<DatasetScale> {
    if gt_maps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut count = 0usize;
    let mut mean = 0.0f64;
    for m in gt_maps {
        for &v in m.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite("ground-truth map entry".into()));
            }
            mean += v;
            count += 1;
        }
    }
    mean /= count as f64;
    let mut var = 0.0f64;
    for m in gt_maps {
        for &v in m.iter() {
            var += (v - mean) * (v - mean);
        }
    }
    let std = (var / count as f64).sqrt();
    if std <= 1e-12 * (1.0 + mean.abs()) {
        return Err(Error::ScaleDegenerate(format!(
            "all {count} target entries are (nearly) identical; std = {std:.3e}"
        )));
    }
    Ok(DatasetScale { s_data: std, sigma_data })
}

/// One training pair; both matrices are stored pre-scaled to the network
/// value domain.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub pair_id: String,
    pub c_init: DMatrix<f64>,
    pub c_gt: DMatrix<f64>,
}

impl TrainingExample {
    /// Scales and validates one raw pair. Non-square maps are rejected.
    pub fn new_scaled(
        pair_id: impl Into<String>,
        c_init_raw: &DMatrix<f64>,
        c_gt_raw: &DMatrix<f64>,
        scale: &DatasetScale,
    ) -> Result<Self> {
        if c_init_raw.shape() != c_gt_raw.shape() {
            return Err(Error::Dimension(format!(
                "initial {:?} and target {:?} map shapes differ",
                c_init_raw.shape(),
                c_gt_raw.shape()
            )));
        }
        if c_gt_raw.nrows() != c_gt_raw.ncols() {
            return Err(Error::Dimension(format!(
                "only square functional maps are supported, got {:?}",
                c_gt_raw.shape()
            )));
        }
        if c_init_raw.iter().chain(c_gt_raw.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training map entry".into()));
        }
        Ok(Self {
            pair_id: pair_id.into(),
            c_init: scale.scale(c_init_raw),
            c_gt: scale.scale(c_gt_raw),
        })
    }

    pub fn side(&self) -> usize {
        self.c_gt.nrows()
    }
}

/// Forward corruption `C^N = C + sigma * eps` with caller-supplied noise.
pub fn corrupt(c_gt: &DMatrix<f64>, sigma: f64, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_gt.shape() != eps.shape() {
        return Err(Error::Dimension(format!(
            "noise shape {:?} vs map shape {:?}",
            eps.shape(),
            c_gt.shape()
        )));
    }
    Ok(c_gt + eps * sigma)
}

/// Standard normal matrix.
pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Preconditioned denoiser evaluation
/// `D(x; sigma) = c_skip * x + c_out * F(c_in * x, cond, coords, c_noise)`.
/// All matrices live in the scaled (network) value domain.
pub fn denoise(
    net: &mut DenoiserNetwork,
    cfg: &EDMConfig,
    noisy: &DMatrix<f64>,
    cond: &DMatrix<f64>,
    coords: &patch::CoordChannels,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    if sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if noisy.shape() != cond.shape() || noisy.nrows() != noisy.ncols() {
        return Err(Error::Dimension(format!(
            "noisy {:?} and cond {:?} must be square and equal",
            noisy.shape(),
            cond.shape()
        )));
    }
    let p = noisy.nrows();
    if coords.side() != p {
        return Err(Error::Dimension(format!(
            "coordinate channels side {} vs map side {p}",
            coords.side()
        )));
    }
    let input = assemble_input(cfg, noisy, cond, coords, sigma);
    let y = net.forward(&input, &[cfg.c_noise(sigma) as f32]);
    let c_skip = cfg.c_skip(sigma);
    let c_out = cfg.c_out(sigma);
    let mut out = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in 0..p {
            out[(r, c)] = c_skip * noisy[(r, c)] + c_out * y.data[r * p + c] as f64;
        }
    }
    Ok(out)
}

/// Packs `[c_in * noisy | cond | row coords | col coords]` as NCHW with
/// matrix rows as image rows.
pub(crate) fn assemble_input(
    cfg: &EDMConfig,
    noisy: &DMatrix<f64>,
    cond: &DMatrix<f64>,
    coords: &patch::CoordChannels,
    sigma: f64,
) -> Tensor {
    let p = noisy.nrows();
    let c_in = cfg.c_in(sigma);
    let mut input = Tensor::zeros(1, 4, p, p);
    for r in 0..p {
        for c in 0..p {
            let px = r * p + c;
            input.data[px] = (c_in * noisy[(r, c)]) as f32;
            input.data[p * p + px] = cond[(r, c)] as f32;
            input.data[2 * p * p + px] = coords.rows[px];
            input.data[3 * p * p + px] = coords.cols[px];
        }
    }
    input
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sigma_distribution_statistics() {
        let cfg = EDMConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = cfg.sample_sigma(&mut rng);
            assert!(s > 0.0);
            acc += s.ln();
        }
        let mean_log = acc / n as f64;
        let tol = 3.0 * cfg.p_std / (n as f64).sqrt();
        assert!((mean_log - cfg.p_mean).abs() < tol, "mean log sigma {mean_log}");
    }

    #[test]
    fn sigma_degenerate_spread() {
        let cfg = EDMConfig {
            p_std: 1e-300,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s = cfg.sample_sigma(&mut rng);
            assert!((s - cfg.p_mean.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupt_edge_cases_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = randn_matrix(&mut rng, 6, 6);
        let zero = DMatrix::zeros(6, 6);
        assert_eq!(corrupt(&c, 0.0, &randn_matrix(&mut rng, 6, 6)).unwrap(), c);
        assert_eq!(corrupt(&c, 2.5, &zero).unwrap(), c);
        assert!(corrupt(&c, 1.0, &DMatrix::zeros(5, 6)).is_err());

        let sigma = 1.7;
        let trials = 4000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let eps = randn_matrix(&mut rng, 6, 6);
            let noisy = corrupt(&c, sigma, &eps).unwrap();
            let diff = &noisy - &c;
            acc += diff.iter().map(|v| v * v).sum::<f64>() / 36.0;
        }
        let var = acc / trials as f64;
        assert!((var - sigma * sigma).abs() / (sigma * sigma) < 0.05, "variance {var}");
    }

    #[test]
    fn loss_weight_identities() {
        let cfg = EDMConfig::default();
        // lambda(sigma_data) = 2 / sigma_data^2
        let at_sd = cfg.loss_weight(cfg.sigma_data);
        assert!((at_sd - 2.0 / (cfg.sigma_data * cfg.sigma_data)).abs() < 1e-12);
        // lambda grows without bound as sigma -> 0
        assert!(cfg.loss_weight(1e-9) > 1e12);
        // EDM normalization: lambda * c_out^2 = 1 across the range
        for i in 0..10 {
            let sigma = 10f64.powf(-3.0 + i as f64 * 0.6);
            let id = cfg.loss_weight(sigma) * cfg.c_out(sigma).powi(2);
            assert!((id - 1.0).abs() < 1e-12, "identity at sigma {sigma}: {id}");
        }
    }

    #[test]
    fn c_skip_limits() {
        let cfg = EDMConfig::default();
        assert!((cfg.c_skip(1e-9) - 1.0).abs() < 1e-12);
        assert!(cfg.c_skip(80.0) < 1e-4);
    }

    #[test]
    fn dataset_scale_statistics_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // entries ~ N(0, 4) -> scale ~ 2
        let maps: Vec<DMatrix<f64>> = (0..8).map(|_| randn_matrix(&mut rng, 32, 32) * 2.0).collect();
        let scale = dataset_scale(&maps, 0.5).unwrap();
        assert!((scale.s_data - 2.0).abs() < 0.05, "s_data {}", scale.s_data);
        let scaled = scale.scale(&maps[0]);
        let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
        let std = (scaled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / scaled.len() as f64).sqrt();
        assert!((std - 0.5).abs() < 0.02, "post-scale std {std}");
        let back = scale.unscale(&scaled);
        for (a, b) in back.iter().zip(maps[0].iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_scale_degenerate_and_empty() {
        assert!(matches!(dataset_scale(&[], 0.5), Err(Error::EmptyDataset)));
        let constant = vec![DMatrix::from_element(4, 4, 3.0); 2];
        assert!(matches!(
            dataset_scale(&constant, 0.5),
            Err(Error::ScaleDegenerate(_))
        ));
    }

    #[test]
    fn training_example_rejects_non_square() {
        let scale = DatasetScale { s_data: 1.0, sigma_data: 0.5 };
        let rect = DMatrix::<f64>::zeros(4, 5);
        assert!(matches!(
            TrainingExample::new_scaled("p", &rect, &rect, &scale),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn denoise_zero_head_is_skip_path() {
        let cfg = EDMConfig {
            image_size: 16,
            ..Default::default()
        };
        let mut net = DenoiserNetwork::new(UNetConfig::default(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noisy = randn_matrix(&mut rng, 16, 16);
        let cond = randn_matrix(&mut rng, 16, 16);
        let coords = patch::CoordChannels::full(16);
        for sigma in [0.05, 0.5, 5.0] {
            let out = denoise(&mut net, &cfg, &noisy, &cond, &coords, sigma).unwrap();
            let c_skip = cfg.c_skip(sigma);
            for (o, x) in out.iter().zip(noisy.iter()) {
                assert!((o - c_skip * x).abs() < 1e-9);
            }
        }
        // sigma -> 0+: c_skip -> 1, output -> x
        let out = denoise(&mut net, &cfg, &noisy, &cond, &coords, 1e-8).unwrap();
        for (o, x) in out.iter().zip(noisy.iter()) {
            assert!((o - x).abs() < 1e-9);
        }
    }

    #[test]
    fn denoise_shape_preserved_at_all_patch_sizes() {
        let cfg = EDMConfig {
            image_size: 32,
            ..Default::default()
        };
        let mut net = DenoiserNetwork::new(UNetConfig::default(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in [8usize, 16, 32] {
            let noisy = randn_matrix(&mut rng, p, p);
            let cond = randn_matrix(&mut rng, p, p);
            let coords = patch::CoordChannels::full(p);
            let out = denoise(&mut net, &cfg, &noisy, &cond, &coords, 1.0).unwrap();
            assert_eq!(out.shape(), (p, p));
        }
    }
}
