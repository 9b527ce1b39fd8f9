//! Luminance planes and the raster I/O around them.
//!
//! Reads PGM/PPM (ASCII and binary, maxval up to 255) and PNG, converts color
//! input to full-range BT.601 luma, and writes 8-bit binary PGM.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Default long edge of the working copy used while optimizing.
pub const DEFAULT_PROXY_LONG_EDGE: usize = 256;

/// One grayscale plane, row-major, samples in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPlane(format!("zero dimension {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidPlane(format!("{} samples for a {width}x{height} plane", data.len())));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0) {
            return Err(Error::InvalidPlane(format!("sample {bad} outside [0, 255]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds a plane by evaluating `f(x, y)`; results are clamped to `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_sample(f(x, y)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Samples rounded half away from zero and clamped to one byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_byte(v)).collect()
    }

    pub(crate) fn same_dims(&self, other: &ImagePlane) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }
}

/// A plane padded on the right and bottom to a multiple of 8 in each dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedPlane {
    plane: ImagePlane,
    original_width: usize,
    original_height: usize,
}

impl PaddedPlane {
    pub fn new(plane: ImagePlane, original_width: usize, original_height: usize) -> Result<Self> {
        let (w, h) = (plane.width(), plane.height());
        if w % 8 != 0 || h % 8 != 0 {
            return Err(Error::InvalidPlane(format!("padded plane {w}x{h} is not block aligned")));
        }
        if original_width == 0
            || original_height == 0
            || original_width > w
            || original_height > h
            || w - original_width >= 8
            || h - original_height >= 8
        {
            return Err(Error::InvalidPlane(format!(
                "original {original_width}x{original_height} inconsistent with padded {w}x{h}"
            )));
        }
        Ok(Self { plane, original_width, original_height })
    }

    pub fn plane(&self) -> &ImagePlane {
        &self.plane
    }

    pub fn into_plane(self) -> ImagePlane {
        self.plane
    }

    pub fn original_width(&self) -> usize {
        self.original_width
    }

    pub fn original_height(&self) -> usize {
        self.original_height
    }

    pub fn blocks_wide(&self) -> usize {
        self.plane.width() / 8
    }

    pub fn blocks_high(&self) -> usize {
        self.plane.height() / 8
    }
}

#[inline]
pub(crate) fn clamp_sample(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 255.0)
    }
}

#[inline]
fn to_byte(v: f64) -> u8 {
    clamp_sample(v.round()) as u8
}

/// Full-range BT.601 luma.
#[inline]
pub fn rgb_to_luma(r: f64, g: f64, b: f64) -> f64 {
    clamp_sample(0.299 * r + 0.587 * g + 0.114 * b)
}

/// Loads a PGM, PPM or PNG file as a luminance plane.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => return Err(Error::Io(e)),
    };
    decode_grayscale(&bytes)
}

/// Decodes an in-memory raster; the format is sniffed from the magic bytes.
pub fn decode_grayscale(bytes: &[u8]) -> Result<ImagePlane> {
    if bytes.len() >= 2 && bytes[0] == b'P' {
        return match bytes[1] {
            b'2' | b'3' | b'5' | b'6' => decode_pnm(bytes),
            other => Err(Error::UnsupportedFormat(format!("PNM variant P{}", other as char))),
        };
    }
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return decode_png(bytes);
    }
    Err(Error::UnsupportedFormat("unrecognized file signature".into()))
}

struct PnmCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PnmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::CorruptImage(format!("expected integer at byte {start}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptImage("integer overflow in header".into()))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<ImagePlane> {
    let kind = bytes[1];
    let mut cur = PnmCursor { data: bytes, pos: 2 };
    let width = cur.next_uint()? as usize;
    let height = cur.next_uint()? as usize;
    let maxval = cur.next_uint()?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptImage(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(Error::CorruptImage("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval} (16-bit samples)")));
    }
    let channels = if matches!(kind, b'3' | b'6') { 3 } else { 1 };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptImage("dimensions overflow".into()))?;

    let raw: Vec<u32> = if matches!(kind, b'5' | b'6') {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::CorruptImage("missing raster separator".into()));
        }
        let end = start + count;
        if bytes.len() < end {
            return Err(Error::CorruptImage(format!(
                "truncated raster: {} of {count} bytes",
                bytes.len().saturating_sub(start)
            )));
        }
        bytes[start..end].iter().map(|&b| b as u32).collect()
    } else {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            v.push(cur.next_uint()?);
        }
        v
    };
    if let Some(bad) = raw.iter().find(|&&v| v > maxval) {
        return Err(Error::CorruptImage(format!("sample {bad} exceeds maxval {maxval}")));
    }

    let scale = 255.0 / maxval as f64;
    let data: Vec<f64> = if channels == 1 {
        raw.iter().map(|&v| v as f64 * scale).collect()
    } else {
        raw.chunks_exact(3)
            .map(|p| rgb_to_luma(p[0] as f64 * scale, p[1] as f64 * scale, p[2] as f64 * scale))
            .collect()
    };
    ImagePlane::new(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<ImagePlane> {
    use image::{ColorType, DynamicImage, ImageFormat};

    let img =
        image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::CorruptImage(e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img.color() {
        ColorType::L8 | ColorType::La8 => img.to_luma8().into_raw().into_iter().map(f64::from).collect(),
        ColorType::Rgb8 | ColorType::Rgba8 => {
            let rgb = match img {
                DynamicImage::ImageRgb8(buf) => buf,
                other => other.to_rgb8(),
            };
            rgb.pixels().map(|p| rgb_to_luma(p[0] as f64, p[1] as f64, p[2] as f64)).collect()
        }
        other => return Err(Error::UnsupportedFormat(format!("PNG color type {other:?}"))),
    };
    ImagePlane::new(width, height, data)
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn bilinear_resize(plane: &ImagePlane, new_width: usize, new_height: usize) -> ImagePlane {
    assert!(new_width > 0 && new_height > 0, "resize target must be non-empty");
    let (w, h) = (plane.width(), plane.height());
    let sx = w as f64 / new_width as f64;
    let sy = h as f64 / new_height as f64;
    // (left index, right index, right weight) per output coordinate
    let taps = |n: usize, scale: f64, len: usize| -> Vec<(usize, usize, f64)> {
        (0..n)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(len - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let xt = taps(new_width, sx, w);
    let yt = taps(new_height, sy, h);
    let mut data = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &yt {
        for &(x0, x1, fx) in &xt {
            let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
            let bottom = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
            data.push(clamp_sample(top * (1.0 - fy) + bottom * fy));
        }
    }
    ImagePlane::from_raw(new_width, new_height, data)
}

/// Downscales so the longer side equals `target_long_edge`; never upscales.
pub fn resize_to_proxy(plane: &ImagePlane, target_long_edge: usize) -> ImagePlane {
    let target = target_long_edge.max(8);
    let (w, h) = (plane.width(), plane.height());
    let long = w.max(h);
    if long <= target {
        return plane.clone();
    }
    let scale = target as f64 / long as f64;
    let (nw, nh) = if w >= h {
        (target, ((h as f64 * scale).round() as usize).max(1))
    } else {
        (((w as f64 * scale).round() as usize).max(1), target)
    };
    bilinear_resize(plane, nw, nh)
}

/// Edge-replicates the right and bottom borders up to the next multiple of 8.
pub fn pad_to_blocks(plane: &ImagePlane) -> PaddedPlane {
    let (w, h) = (plane.width(), plane.height());
    let pw = w.div_ceil(8) * 8;
    let ph = h.div_ceil(8) * 8;
    let padded = if pw == w && ph == h {
        plane.clone()
    } else {
        let mut data = Vec::with_capacity(pw * ph);
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                data.push(plane.get(x.min(w - 1), sy));
            }
        }
        ImagePlane::from_raw(pw, ph, data)
    };
    PaddedPlane { plane: padded, original_width: w, original_height: h }
}

/// Returns the top-left original-size region.
pub fn crop_to_original(padded: &PaddedPlane) -> ImagePlane {
    let (ow, oh) = (padded.original_width, padded.original_height);
    let src = &padded.plane;
    if ow == src.width() && oh == src.height() {
        return src.clone();
    }
    let mut data = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let row = y * src.width();
        data.extend_from_slice(&src.data()[row..row + ow]);
    }
    ImagePlane::from_raw(ow, oh, data)
}

/// Encodes 8-bit samples as binary PGM (P5).
pub fn encode_pgm(width: usize, height: usize, bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

/// Writes the plane as 8-bit binary PGM.
pub fn write_grayscale(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pgm(plane.width(), plane.height(), &plane.to_bytes());
    write_atomic(path.as_ref(), &bytes)
}

/// Writes to a sibling temporary file, then renames over the destination.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(Error::Io)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}
