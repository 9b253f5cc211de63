//! Patch-based training samples: random crops of the (noisy, condition)
//! pair at three resolutions, with global position maps so the network
//! knows where each patch sits in the full functional map.

use super::{corrupt, randn_matrix, TrainingExample};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The three training patch resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchResolution {
    Full,
    Half,
    Quarter,
}

impl PatchResolution {
    pub fn divisor(self) -> usize {
        match self {
            Self::Full => 1,
            Self::Half => 2,
            Self::Quarter => 4,
        }
    }

    /// Mixing ratio (0.5, 0.25, 0.25): full-size exposure dominates because
    /// inference always runs full-size.
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        let u: f64 = rng.gen();
        if u < 0.5 {
            Self::Full
        } else if u < 0.75 {
            Self::Half
        } else {
            Self::Quarter
        }
    }
}

/// Global position maps of a patch: each pixel's (row, col) within the full
/// map, linearly stretched to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CoordChannels {
    pub side: usize,
    pub rows: Vec<f32>,
    pub cols: Vec<f32>,
}

impl CoordChannels {
    pub fn new(image_size: usize, patch: usize, row_off: usize, col_off: usize) -> Self {
        let denom = (image_size - 1).max(1) as f32;
        let mut rows = vec![0.0f32; patch * patch];
        let mut cols = vec![0.0f32; patch * patch];
        for r in 0..patch {
            for c in 0..patch {
                rows[r * patch + c] = -1.0 + 2.0 * (row_off + r) as f32 / denom;
                cols[r * patch + c] = -1.0 + 2.0 * (col_off + c) as f32 / denom;
            }
        }
        Self { side: patch, rows, cols }
    }

    /// Coordinates of the full map (inference covers the whole image).
    pub fn full(image_size: usize) -> Self {
        Self::new(image_size, image_size, 0, 0)
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

/// One ready-to-train patch.
#[derive(Debug, Clone)]
pub struct PatchSample {
    pub noisy: DMatrix<f64>,
    pub cond: DMatrix<f64>,
    pub coords: CoordChannels,
    pub sigma: f64,
    pub target: DMatrix<f64>,
    pub resolution: PatchResolution,
    pub row_off: usize,
    pub col_off: usize,
}

/// Draws a resolution per the mixing ratio, a crop offset uniform over valid
/// positions, corrupts the target crop at `sigma`, and attaches position
/// maps.
pub fn sample_patch(example: &TrainingExample, sigma: f64, rng: &mut ChaCha8Rng) -> Result<PatchSample> {
    let resolution = PatchResolution::draw(rng);
    sample_patch_at(example, sigma, rng, resolution)
}

/// Same with the resolution fixed by the caller (used to keep one batch at a
/// single patch size).
pub fn sample_patch_at(
    example: &TrainingExample,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    resolution: PatchResolution,
) -> Result<PatchSample> {
    let size = example.side();
    if size % 4 != 0 {
        return Err(Error::Config(format!("image size {size} must be divisible by 4 for patch training")));
    }
    let patch = size / resolution.divisor();
    let row_off = rng.gen_range(0..=(size - patch));
    let col_off = rng.gen_range(0..=(size - patch));
    let target = example.c_gt.view((row_off, col_off), (patch, patch)).into_owned();
    let cond = example.c_init.view((row_off, col_off), (patch, patch)).into_owned();
    let eps = randn_matrix(rng, patch, patch);
    let noisy = corrupt(&target, sigma, &eps)?;
    Ok(PatchSample {
        noisy,
        cond,
        coords: CoordChannels::new(size, patch, row_off, col_off),
        sigma,
        target,
        resolution,
        row_off,
        col_off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DatasetScale;
    use rand::SeedableRng;

    fn example(side: usize, seed: u64) -> TrainingExample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = DatasetScale { s_data: 1.0, sigma_data: 1.0 };
        TrainingExample::new_scaled(
            "p",
            &randn_matrix(&mut rng, side, side),
            &randn_matrix(&mut rng, side, side),
            &scale,
        )
        .unwrap()
    }

    #[test]
    fn full_resolution_spans_unit_square() {
        let ex = example(32, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_patch_at(&ex, 0.5, &mut rng, PatchResolution::Full).unwrap();
        assert_eq!((p.row_off, p.col_off), (0, 0));
        assert_eq!(p.coords.rows[0], -1.0);
        assert_eq!(*p.coords.rows.last().unwrap(), 1.0);
        assert_eq!(p.coords.cols[0], -1.0);
        assert_eq!(*p.coords.cols.last().unwrap(), 1.0);
    }

    #[test]
    fn quarter_patch_coords_at_top_left() {
        // a 32-pixel patch of a 128 map at offset (0,0) spans
        // [-1, -1 + 2*31/127]
        let ex = example(128, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        loop {
            let p = sample_patch_at(&ex, 0.5, &mut rng, PatchResolution::Quarter).unwrap();
            if (p.row_off, p.col_off) != (0, 0) {
                continue;
            }
            assert_eq!(p.coords.side(), 32);
            assert_eq!(p.coords.rows[0], -1.0);
            let expect = -1.0 + 2.0 * 31.0 / 127.0;
            let got = *p.coords.rows.last().unwrap();
            assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
            break;
        }
    }

    #[test]
    fn crop_offsets_are_uniform() {
        // chi-square over the 17x17 valid offsets of a half patch in a 32 map
        let ex = example(32, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cells = 17 * 17;
        let draws = 20_000usize;
        let mut counts = vec![0usize; cells];
        for _ in 0..draws {
            let p = sample_patch_at(&ex, 0.1, &mut rng, PatchResolution::Half).unwrap();
            counts[p.row_off * 17 + p.col_off] += 1;
        }
        let expected = draws as f64 / cells as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // dof = 288; 3-sigma bound ~ dof + 3*sqrt(2*dof)
        let dof = (cells - 1) as f64;
        assert!(chi2 < dof + 4.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn patch_mixes_match_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            match PatchResolution::draw(&mut rng) {
                PatchResolution::Full => counts[0] += 1,
                PatchResolution::Half => counts[1] += 1,
                PatchResolution::Quarter => counts[2] += 1,
            }
        }
        assert!((counts[0] as f64 / 20_000.0 - 0.5).abs() < 0.02);
        assert!((counts[1] as f64 / 20_000.0 - 0.25).abs() < 0.02);
        assert!((counts[2] as f64 / 20_000.0 - 0.25).abs() < 0.02);
    }

    #[test]
    fn noisy_patch_is_corrupted_target() {
        let ex = example(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = sample_patch_at(&ex, 0.0, &mut rng, PatchResolution::Half).unwrap();
        assert_eq!(p.noisy, p.target);
        // and the crop views line up with the source matrices
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(p.target[(r, c)], ex.c_gt[(p.row_off + r, p.col_off + c)]);
                assert_eq!(p.cond[(r, c)], ex.c_init[(p.row_off + r, p.col_off + c)]);
            }
        }
    }

    #[test]
    fn indivisible_size_rejected() {
        let ex = example(30, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(matches!(
            sample_patch(&ex, 0.5, &mut rng),
            Err(Error::Config(_))
        ));
    }
}
