//! 8x8 block transform core: level shift, orthonormal DCT-II and its inverse,
//! quantization and dequantization, and the full encode/decode round trip.

use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::image_io::{clamp_sample, crop_to_original, pad_to_blocks, ImagePlane, PaddedPlane};
use crate::quant::QuantTable;

pub const BLOCK: usize = 8;
pub const LEVEL_SHIFT: f64 = 128.0;

/// 8x8 real block indexed `[row][col]`: spatial samples or DCT coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block8(pub [[f64; BLOCK]; BLOCK]);

/// 8x8 quantized coefficient symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedBlock8(pub [[i32; BLOCK]; BLOCK]);

impl Block8 {
    pub const ZERO: Block8 = Block8([[0.0; BLOCK]; BLOCK]);

    pub fn filled(v: f64) -> Self {
        Block8([[v; BLOCK]; BLOCK])
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().flatten().copied()
    }

    pub fn max_abs_diff(&self, other: &Block8) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl QuantizedBlock8 {
    pub fn iter(&self) -> impl Iterator<Item = i32> + '_ {
        self.0.iter().flatten().copied()
    }
}

/// Orthonormal scaling: sqrt(1/8) for the DC basis, sqrt(2/8) otherwise.
#[inline]
pub fn alpha(u: usize) -> f64 {
    if u == 0 {
        (1.0 / 8.0f64).sqrt()
    } else {
        (2.0 / 8.0f64).sqrt()
    }
}

/// `BASIS[u][x] = alpha(u) * cos(pi * (2x + 1) * u / 16)`.
static BASIS: LazyLock<[[f64; BLOCK]; BLOCK]> = LazyLock::new(|| {
    let mut m = [[0.0; BLOCK]; BLOCK];
    for (u, row) in m.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha(u) * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / 16.0).cos();
        }
    }
    m
});

/// Forward 2D DCT as two separable passes: `C = A * B * A^T`.
pub fn dct2(block: &Block8) -> Block8 {
    let a = &*BASIS;
    let b = &block.0;
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for col in 0..BLOCK {
            let mut s = 0.0;
            for row in 0..BLOCK {
                s += a[u][row] * b[row][col];
            }
            tmp[u][col] = s;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for col in 0..BLOCK {
                s += tmp[u][col] * a[v][col];
            }
            out[u][v] = s;
        }
    }
    Block8(out)
}

/// Inverse 2D DCT: `B = A^T * C * A`.
pub fn idct2(coeffs: &Block8) -> Block8 {
    let a = &*BASIS;
    let c = &coeffs.0;
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for row in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for u in 0..BLOCK {
                s += a[u][row] * c[u][v];
            }
            tmp[row][v] = s;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for row in 0..BLOCK {
        for col in 0..BLOCK {
            let mut s = 0.0;
            for v in 0..BLOCK {
                s += tmp[row][v] * a[v][col];
            }
            out[row][col] = s;
        }
    }
    Block8(out)
}

/// `Z = round(C / Q)`, half away from zero.
pub fn quantize(coeffs: &Block8, table: &QuantTable) -> QuantizedBlock8 {
    let q = table.entries();
    let mut z = [[0i32; BLOCK]; BLOCK];
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            z[i][j] = (coeffs.0[i][j] / q[i][j] as f64).round() as i32;
        }
    }
    QuantizedBlock8(z)
}

/// `C_hat = Z * Q`.
pub fn dequantize(z: &QuantizedBlock8, table: &QuantTable) -> Block8 {
    let q = table.entries();
    let mut c = [[0.0; BLOCK]; BLOCK];
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            c[i][j] = z.0[i][j] as f64 * q[i][j] as f64;
        }
    }
    Block8(c)
}

/// Cuts the padded plane into level-shifted blocks, row-major block order.
pub fn split_blocks(padded: &PaddedPlane) -> Vec<Block8> {
    let plane = padded.plane();
    let (bw, bh) = (padded.blocks_wide(), padded.blocks_high());
    let mut blocks = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut b = [[0.0; BLOCK]; BLOCK];
            for (r, row) in b.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = plane.get(bx * BLOCK + c, by * BLOCK + r) - LEVEL_SHIFT;
                }
            }
            blocks.push(Block8(b));
        }
    }
    blocks
}

/// Reassembles blocks into a `width x height` plane, undoing the level shift
/// and clamping to `[0, 255]`.
pub fn merge_blocks(blocks: &[Block8], width: usize, height: usize) -> Result<PaddedPlane> {
    if width == 0 || height == 0 || !width.is_multiple_of(BLOCK) || !height.is_multiple_of(BLOCK) {
        return Err(Error::InvalidPlane(format!("{width}x{height} is not block aligned")));
    }
    let (bw, bh) = (width / BLOCK, height / BLOCK);
    if blocks.len() != bw * bh {
        return Err(Error::BlockCountMismatch { expected: bw * bh, got: blocks.len() });
    }
    let mut data = vec![0.0; width * height];
    for (idx, block) in blocks.iter().enumerate() {
        let (bx, by) = (idx % bw, idx / bw);
        for (r, row) in block.0.iter().enumerate() {
            let base = (by * BLOCK + r) * width + bx * BLOCK;
            for (c, v) in row.iter().enumerate() {
                data[base + c] = clamp_sample(v + LEVEL_SHIFT);
            }
        }
    }
    PaddedPlane::new(ImagePlane::from_raw(width, height, data), width, height)
}

/// Output of a full encode/decode pass.
#[derive(Debug, Clone)]
pub struct Roundtrip {
    pub reconstructed: ImagePlane,
    pub quantized: Vec<QuantizedBlock8>,
}

/// pad, split, DCT, quantize, dequantize, IDCT, merge, crop.
pub fn codec_roundtrip(plane: &ImagePlane, table: &QuantTable) -> Roundtrip {
    codec_roundtrip_with(plane, table, Parallelism::default())
}

pub fn codec_roundtrip_with(plane: &ImagePlane, table: &QuantTable, mode: Parallelism) -> Roundtrip {
    let padded = pad_to_blocks(plane);
    let blocks = split_blocks(&padded);
    let coded: Vec<(QuantizedBlock8, Block8)> = exec::map(mode, &blocks, |b| {
        let z = quantize(&dct2(b), table);
        let rec = idct2(&dequantize(&z, table));
        (z, rec)
    });
    let (quantized, rec_blocks): (Vec<_>, Vec<_>) = coded.into_iter().unzip();
    let (pw, ph) = (padded.plane().width(), padded.plane().height());
    let merged = merge_blocks(&rec_blocks, pw, ph).expect("block geometry comes from pad_to_blocks");
    let merged = PaddedPlane::new(merged.into_plane(), padded.original_width(), padded.original_height())
        .expect("original dims come from pad_to_blocks");
    Roundtrip { reconstructed: crop_to_original(&merged), quantized }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal quadruple-loop evaluation of the transform definition.
    #[allow(clippy::needless_range_loop)]
    fn dct_oracle(b: &Block8) -> Block8 {
        use std::f64::consts::PI;
        let mut out = [[0.0; 8]; 8];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for x in 0..8 {
                    for y in 0..8 {
                        s += b.0[x][y]
                            * (PI * (2 * x + 1) as f64 * u as f64 / 16.0).cos()
                            * (PI * (2 * y + 1) as f64 * v as f64 / 16.0).cos();
                    }
                }
                out[u][v] = alpha(u) * alpha(v) * s;
            }
        }
        Block8(out)
    }

    fn random_block(rng: &mut impl Rng) -> Block8 {
        let mut b = [[0.0; 8]; 8];
        for v in b.iter_mut().flatten() {
            *v = rng.random_range(-128.0..=127.0);
        }
        Block8(b)
    }

    fn table(v: u16) -> QuantTable {
        QuantTable::uniform(v).unwrap()
    }

    #[test]
    fn dct_simple_cases() {
        assert_eq!(dct2(&Block8::ZERO), Block8::ZERO);
        let c = dct2(&Block8::filled(3.0));
        assert!((c.0[0][0] - 24.0).abs() < 1e-12);
        for (k, v) in c.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "AC {k} = {v}");
        }
        assert_eq!(idct2(&Block8::ZERO), Block8::ZERO);
        let mut dc = Block8::ZERO;
        dc.0[0][0] = 8.0;
        assert!(idct2(&dc).max_abs_diff(&Block8::filled(1.0)) < 1e-12);
    }

    #[test]
    fn dct_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let b = random_block(&mut rng);
            assert!(dct2(&b).max_abs_diff(&dct_oracle(&b)) < 1e-10);
        }
    }

    #[test]
    fn quantize_cases() {
        let z = quantize(&Block8::filled(16.0), &table(16));
        assert!(z.iter().all(|v| v == 1));
        let mut c = Block8::ZERO;
        c.0[2][3] = -23.4;
        c.0[0][1] = -25.0; // exact half rounds away from zero
        let z = quantize(&c, &table(10));
        assert_eq!(z.0[2][3], -2);
        assert_eq!(z.0[0][1], -3);
        let c = Block8([[1.5, -1.5, 0.49, -0.5, 2.7, 0.0, 9.5, -9.4]; 8]);
        let z = quantize(&c, &table(1));
        assert_eq!(z.0[0], [2, -2, 0, -1, 3, 0, 10, -9]);
    }

    #[test]
    fn dequantize_cases() {
        let d = dequantize(&QuantizedBlock8([[1; 8]; 8]), &table(16));
        assert_eq!(d, Block8::filled(16.0));
        let d = dequantize(&QuantizedBlock8([[0; 8]; 8]), &table(16));
        assert_eq!(d, Block8::ZERO);
    }

    #[test]
    fn split_and_merge() {
        let p = pad_to_blocks(&ImagePlane::filled(8, 8, 128.0).unwrap());
        assert_eq!(split_blocks(&p), vec![Block8::ZERO]);
        let p = pad_to_blocks(&ImagePlane::filled(8, 8, 255.0).unwrap());
        assert_eq!(split_blocks(&p), vec![Block8::filled(127.0)]);

        let p = pad_to_blocks(&ImagePlane::from_fn(16, 8, |x, _| if x < 8 { 10.0 } else { 200.0 }).unwrap());
        let blocks = split_blocks(&p);
        assert_eq!(blocks, vec![Block8::filled(-118.0), Block8::filled(72.0)]);
        assert_eq!(merge_blocks(&blocks, 16, 8).unwrap(), p);

        let m = merge_blocks(&[Block8::ZERO], 8, 8).unwrap();
        assert_eq!(m.plane(), &ImagePlane::filled(8, 8, 128.0).unwrap());
        let m = merge_blocks(&[Block8::filled(200.0)], 8, 8).unwrap();
        assert_eq!(m.plane(), &ImagePlane::filled(8, 8, 255.0).unwrap());
        assert!(matches!(merge_blocks(&[Block8::ZERO], 16, 8), Err(Error::BlockCountMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn roundtrip_identity_table_and_constant_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ImagePlane::from_fn(21, 13, |_, _| rng.random_range(0.0..=255.0)).unwrap();
        let rt = codec_roundtrip(&p, &table(1));
        // Coefficient rounding errors are at most 0.5 each; the orthonormal
        // inverse keeps their L2 norm, so the RMS pixel error is at most 0.5,
        // and a pixel's error is at most 0.5 times its basis row's L1 norm.
        let basis_l1 = (0..8)
            .map(|x| {
                (0..8)
                    .map(|u| (alpha(u) * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / 16.0).cos()).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let linf = 0.5 * basis_l1 * basis_l1;
        let mut sq = 0.0;
        for (a, b) in p.data().iter().zip(rt.reconstructed.data()) {
            assert!((a - b).abs() <= linf + 1e-9);
            sq += (a - b) * (a - b);
        }
        assert!((sq / p.pixel_count() as f64).sqrt() <= 0.5);
        assert_eq!(rt.quantized.len(), 3 * 2);

        let flat = ImagePlane::filled(24, 16, 128.0).unwrap();
        let rt = codec_roundtrip(&flat, &QuantTable::baseline());
        assert_eq!(rt.reconstructed, flat);
        assert!(rt.quantized.iter().all(|z| z.iter().all(|v| v == 0)));
    }

    #[test]
    fn roundtrip_modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ImagePlane::from_fn(64, 40, |_, _| rng.random_range(0.0..=255.0)).unwrap();
        let a = codec_roundtrip_with(&p, &QuantTable::baseline(), Parallelism::Sequential);
        let b = codec_roundtrip_with(&p, &QuantTable::baseline(), Parallelism::Rayon);
        assert_eq!(a.reconstructed, b.reconstructed);
        assert_eq!(a.quantized, b.quantized);
    }

    #[test]
    fn doubled_table_collapses_symbols_on_random_blocks() {
        let base = QuantTable::baseline();
        let coarse = QuantTable::from_entries(base.entries().map(|r| r.map(|v| (v * 2).min(255)))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let c = dct2(&random_block(&mut rng));
            assert!(distinct(&quantize(&c, &coarse)) <= distinct(&quantize(&c, &base)));
        }
    }

    fn arb_block() -> impl Strategy<Value = Block8> {
        proptest::array::uniform8(proptest::array::uniform8(-128.0f64..=127.0)).prop_map(Block8)
    }

    fn distinct(z: &QuantizedBlock8) -> usize {
        z.iter().collect::<std::collections::HashSet<_>>().len()
    }

    proptest! {
        #[test]
        fn dct_preserves_norm_and_inverts(b in arb_block()) {
            let c = dct2(&b);
            prop_assert!((c.frobenius_norm() - b.frobenius_norm()).abs() < 1e-9);
            prop_assert!(idct2(&c).max_abs_diff(&b) < 1e-9);
        }

        #[test]
        fn quantization_error_is_bounded(b in arb_block(), q in 1u16..=255) {
            let t = table(q);
            let c = dct2(&b);
            let back = dequantize(&quantize(&c, &t), &t);
            prop_assert!(back.max_abs_diff(&c) <= q as f64 / 2.0 + 1e-9);
        }
    }
}
