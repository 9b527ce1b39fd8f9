//! Quality metrics used for final reporting: PSNR, SSIM, image-level BPP and
//! absolute-error heat maps.

use std::path::Path;
use std::sync::LazyLock;

use crate::dct::QuantizedBlock8;
use crate::error::{Error, Result};
use crate::image_io::{encode_pgm, write_atomic, ImagePlane};
use crate::rd;

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
pub const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

/// `10 log10(255^2 / mse)`, or `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

pub fn psnr(original: &ImagePlane, reconstructed: &ImagePlane) -> Result<f64> {
    Ok(psnr_from_mse(rd::mse(original, reconstructed)?))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn ssim_kernel() -> &'static [f64; SSIM_WINDOW] {
    static KERNEL: LazyLock<[f64; SSIM_WINDOW]> = LazyLock::new(|| {
        let half = (SSIM_WINDOW / 2) as f64;
        let mut k = [0.0; SSIM_WINDOW];
        for (i, v) in k.iter_mut().enumerate() {
            let d = i as f64 - half;
            *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
        let sum: f64 = k.iter().sum();
        k.map(|v| v / sum)
    });
    &KERNEL
}

/// Mean SSIM over every valid 11x11 Gaussian-weighted window (stride 1).
pub fn ssim(original: &ImagePlane, reconstructed: &ImagePlane) -> Result<f64> {
    original.same_dims(reconstructed)?;
    let (w, h) = (original.width(), original.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall { width: w, height: h, min: SSIM_WINDOW });
    }
    let k = ssim_kernel();
    let (x, y) = (original.data(), reconstructed.data());
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;

    // horizontal pass: [mu_x, mu_y, E[x^2], E[y^2], E[xy]] for each row
    let mut horiz = vec![[0.0f64; 5]; h * ow];
    for r in 0..h {
        let row = r * w;
        for c in 0..ow {
            let mut acc = [0.0; 5];
            for (t, &g) in k.iter().enumerate() {
                let a = x[row + c + t];
                let b = y[row + c + t];
                acc[0] += g * a;
                acc[1] += g * b;
                acc[2] += g * a * a;
                acc[3] += g * b * b;
                acc[4] += g * a * b;
            }
            horiz[r * ow + c] = acc;
        }
    }

    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let mut m = [0.0; 5];
            for (t, &g) in k.iter().enumerate() {
                let src = &horiz[(r + t) * ow + c];
                for (dst, s) in m.iter_mut().zip(src) {
                    *dst += g * s;
                }
            }
            total += ssim_from_moments(m[0], m[1], m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1]);
        }
    }
    Ok((total / (ow * oh) as f64).clamp(-1.0, 1.0))
}

#[inline]
pub(crate) fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Entropy-estimated size in bits divided by the pixel count.
pub fn image_bpp(blocks: &[QuantizedBlock8], width: usize, height: usize) -> Result<f64> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyInput("zero-sized image"));
    }
    Ok(rd::estimated_size_bits(blocks)? / (width * height) as f64)
}

/// Per-pixel absolute error.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl HeatMap {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// 8-bit rendering: with `normalize` the largest error maps to 255,
    /// otherwise raw errors are clamped.
    pub fn to_bytes(&self, normalize: bool) -> Vec<u8> {
        let peak = self.max();
        let scale = if normalize && peak > 0.0 { PEAK / peak } else { 1.0 };
        self.values.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect()
    }
}

pub fn error_heatmap(original: &ImagePlane, reconstructed: &ImagePlane) -> Result<HeatMap> {
    original.same_dims(reconstructed)?;
    let values = original.data().iter().zip(reconstructed.data()).map(|(a, b)| (a - b).abs()).collect();
    Ok(HeatMap { width: original.width(), height: original.height(), values })
}

pub fn export_heatmap(map: &HeatMap, path: impl AsRef<Path>, normalize: bool) -> Result<()> {
    let bytes = encode_pgm(map.width, map.height, &map.to_bytes(normalize));
    write_atomic(path.as_ref(), &bytes)
}

/// File name suffix for an exported heat map.
pub fn heatmap_suffix(normalize: bool) -> &'static str {
    if normalize {
        ".heat.norm.pgm"
    } else {
        ".heat.pgm"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::load_grayscale;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, |_, _| rng.random_range(0.0..=255.0)).unwrap()
    }

    /// Direct per-window evaluation with explicit two-pass moments.
    fn ssim_oracle(a: &ImagePlane, b: &ImagePlane) -> f64 {
        let k = ssim_kernel();
        let (w, h) = (a.width(), a.height());
        let mut sum = 0.0;
        let mut n = 0;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let wt = |i: usize, j: usize| k[i] * k[j];
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        mx += wt(i, j) * a.get(x0 + j, y0 + i);
                        my += wt(i, j) * b.get(x0 + j, y0 + i);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let dx = a.get(x0 + j, y0 + i) - mx;
                        let dy = b.get(x0 + j, y0 + i) - my;
                        vx += wt(i, j) * dx * dx;
                        vy += wt(i, j) * dy * dy;
                        cxy += wt(i, j) * dx * dy;
                    }
                }
                sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                n += 1;
            }
        }
        sum / n as f64
    }

    #[test]
    fn psnr_cases() {
        let a = ImagePlane::filled(4, 4, 10.0).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &ImagePlane::filled(4, 4, 11.0).unwrap()).unwrap() - 48.1308).abs() < 1e-3);
        assert!(psnr_from_mse(PEAK * PEAK).abs() < 1e-12);
        assert!(psnr(&a, &ImagePlane::filled(2, 2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn psnr_is_symmetric_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ImagePlane::from_fn(16, 16, |_, _| rng.random_range(20.0..200.0)).unwrap();
        let b = ImagePlane::from_fn(16, 16, |_, _| rng.random_range(20.0..200.0)).unwrap();
        let shift = |p: &ImagePlane| ImagePlane::from_fn(16, 16, |x, y| p.get(x, y) + 30.0).unwrap();
        let base = psnr(&a, &b).unwrap();
        assert_eq!(base, psnr(&b, &a).unwrap());
        assert!((psnr(&shift(&a), &shift(&b)).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn ssim_kernel_is_normalized() {
        let k = ssim_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }

    #[test]
    fn ssim_identity_constant_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_plane(&mut rng, 20, 15);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);

        let c100 = ImagePlane::filled(16, 16, 100.0).unwrap();
        let c150 = ImagePlane::filled(16, 16, 150.0).unwrap();
        let expected = (30000.0 + 6.5025) / (32500.0 + 6.5025);
        let got = ssim(&c100, &c150).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9231).abs() < 1e-4);
        assert!((ssim_oracle(&c100, &c150) - expected).abs() < 1e-12);

        let small = ImagePlane::filled(10, 20, 1.0).unwrap();
        assert!(matches!(ssim(&small, &small), Err(Error::TooSmall { .. })));
        assert!(matches!(ssim(&a, &c100), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn ssim_matches_window_oracle_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let a = random_plane(&mut rng, 32, 32);
            let b = ImagePlane::from_fn(32, 32, |x, y| a.get(x, y) + rng.random_range(-40.0..40.0)).unwrap();
            let s = ssim(&a, &b).unwrap();
            assert!((s - ssim_oracle(&a, &b)).abs() < 1e-9);
            assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn bpp_identities() {
        let zeros = vec![QuantizedBlock8([[0; 8]; 8]); 3];
        assert_eq!(image_bpp(&zeros, 24, 8).unwrap(), 0.0);
        let mut b = [[0; 8]; 8];
        for k in 0..64 {
            b[k / 8][k % 8] = k as i32 - 20;
        }
        let distinct = vec![QuantizedBlock8(b)];
        assert!((image_bpp(&distinct, 8, 8).unwrap() - 6.0).abs() < 1e-12);
        assert!((image_bpp(&distinct, 7, 5).unwrap() - rd::bpp_estimate(&distinct, 7, 5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn heatmaps() {
        let a = ImagePlane::new(2, 1, vec![0.0, 10.0]).unwrap();
        let b = ImagePlane::new(2, 1, vec![3.0, 10.0]).unwrap();
        assert_eq!(error_heatmap(&a, &a).unwrap().values, vec![0.0, 0.0]);
        let m = error_heatmap(&a, &b).unwrap();
        assert_eq!(m.values, vec![3.0, 0.0]);
        assert_eq!(m, error_heatmap(&b, &a).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("z{}", heatmap_suffix(true)));
        let zero = HeatMap { width: 2, height: 1, values: vec![0.0, 0.0] };
        export_heatmap(&zero, &path, true).unwrap();
        assert_eq!(load_grayscale(&path).unwrap().data(), &[0.0, 0.0]);

        let m = HeatMap { width: 3, height: 1, values: vec![12.5, 5.0, 0.0] };
        export_heatmap(&m, &path, true).unwrap();
        assert_eq!(load_grayscale(&path).unwrap().data(), &[255.0, 102.0, 0.0]);

        let m = HeatMap { width: 2, height: 1, values: vec![300.0, 7.4] };
        export_heatmap(&m, &path, false).unwrap();
        assert_eq!(load_grayscale(&path).unwrap().data(), &[255.0, 7.0]);
    }
}
