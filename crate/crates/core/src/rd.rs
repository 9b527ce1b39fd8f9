//! Distortion, entropy-estimated rate, and the combined cost `J = MSE + lambda * BPP`.

use std::collections::BTreeMap;

use crate::dct::{codec_roundtrip_with, QuantizedBlock8, Roundtrip};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::image_io::ImagePlane;
use crate::metrics;
use crate::quant::QuantTable;

pub const DEFAULT_LAMBDA: f64 = 50.0;

/// Mean squared error between two planes of equal size.
pub fn mse(original: &ImagePlane, reconstructed: &ImagePlane) -> Result<f64> {
    original.same_dims(reconstructed)?;
    let sum: f64 = original.data().iter().zip(reconstructed.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / original.pixel_count() as f64)
}

/// Symbol counts in ascending symbol order.
fn symbol_counts(blocks: &[QuantizedBlock8]) -> Vec<u64> {
    let (mut lo, mut hi) = (i32::MAX, i32::MIN);
    for v in blocks.iter().flat_map(|b| b.iter()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi as i64 - lo as i64 + 1;
    if span <= 1 << 16 {
        let mut dense = vec![0u64; span as usize];
        for v in blocks.iter().flat_map(|b| b.iter()) {
            dense[(v - lo) as usize] += 1;
        }
        dense.retain(|&c| c > 0);
        dense
    } else {
        let mut sparse = BTreeMap::new();
        for v in blocks.iter().flat_map(|b| b.iter()) {
            *sparse.entry(v).or_insert(0u64) += 1;
        }
        sparse.into_values().collect()
    }
}

/// First-order entropy, in bits per symbol, of all quantized coefficients
/// pooled across positions and blocks.
pub fn symbol_entropy(blocks: &[QuantizedBlock8]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("no quantized blocks"));
    }
    let total = (blocks.len() * 64) as f64;
    let h = symbol_counts(blocks)
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    // a single symbol yields -1 * log2(1) = -0.0
    Ok(h.max(0.0))
}

/// Estimated compressed size in bits: entropy times coefficient count.
pub fn estimated_size_bits(blocks: &[QuantizedBlock8]) -> Result<f64> {
    Ok(symbol_entropy(blocks)? * (blocks.len() * 64) as f64)
}

/// Bits per original pixel. Padding blocks count toward the coefficient
/// total while the denominator uses the unpadded size.
pub fn bpp_estimate(blocks: &[QuantizedBlock8], original_width: usize, original_height: usize) -> Result<f64> {
    if original_width == 0 || original_height == 0 {
        return Err(Error::EmptyInput("zero-sized image"));
    }
    Ok(estimated_size_bits(blocks)? / (original_width * original_height) as f64)
}

/// The terms the optimizer needs, without the more expensive quality metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdTerms {
    pub mse: f64,
    pub bpp: f64,
    pub cost_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdReport {
    pub mse: f64,
    /// `f64::INFINITY` when the reconstruction is exact.
    pub psnr: f64,
    /// `None` when either side is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub bpp: f64,
    pub cost_j: f64,
    pub lambda: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda {lambda} must be finite and >= 0")));
    }
    Ok(())
}

fn terms_from(original: &ImagePlane, rt: &Roundtrip, lambda: f64) -> Result<RdTerms> {
    let mse = mse(original, &rt.reconstructed)?;
    let bpp = bpp_estimate(&rt.quantized, original.width(), original.height())?;
    Ok(RdTerms { mse, bpp, cost_j: mse + lambda * bpp })
}

/// Encodes on the calling thread and returns `(MSE, BPP, J)`.
pub fn rd_terms(original: &ImagePlane, table: &QuantTable, lambda: f64) -> Result<RdTerms> {
    check_lambda(lambda)?;
    let rt = codec_roundtrip_with(original, table, Parallelism::Sequential);
    terms_from(original, &rt, lambda)
}

/// Full report alongside the reconstruction.
pub fn rd_evaluate(
    original: &ImagePlane,
    table: &QuantTable,
    lambda: f64,
    mode: Parallelism,
) -> Result<(RdReport, Roundtrip)> {
    check_lambda(lambda)?;
    let rt = codec_roundtrip_with(original, table, mode);
    let t = terms_from(original, &rt, lambda)?;
    let ssim = match metrics::ssim(original, &rt.reconstructed) {
        Ok(v) => Some(v),
        Err(Error::TooSmall { .. }) => None,
        Err(e) => return Err(e),
    };
    let report =
        RdReport { mse: t.mse, psnr: metrics::psnr_from_mse(t.mse), ssim, bpp: t.bpp, cost_j: t.cost_j, lambda };
    Ok((report, rt))
}

pub fn rd_cost(original: &ImagePlane, table: &QuantTable, lambda: f64) -> Result<(f64, RdReport)> {
    let (report, _) = rd_evaluate(original, table, lambda, Parallelism::Sequential)?;
    Ok((report.cost_j, report))
}
