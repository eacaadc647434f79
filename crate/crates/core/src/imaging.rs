//! Grayscale rasters, decoding and box-filter pyramids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::read_file;

/// Row-major 8-bit luma image.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Binary PGM (P5) encoding with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// ITU-R BT.601 luma, rounded to the nearest integer.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

/// Loads a binary PGM or an 8-bit gray/RGB PNG as luma.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    decode_image(&bytes, path)
}

pub(crate) fn decode_image(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes, path)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes, path)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected binary PGM (P5) or PNG".into(),
        })
    }
}

/// Parses a binary PGM. Samples are copied verbatim when maxval is 255 and
/// rescaled to 0..=255 otherwise.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let unsupported = |reason: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(unsupported("truncated PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(unsupported("malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| unsupported("PGM header value out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(unsupported("missing whitespace after PGM maxval"));
    }
    pos += 1;
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension {
            path: path.to_path_buf(),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(unsupported("only 8-bit PGM (maxval 1..=255) is supported"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| unsupported("PGM dimensions overflow"))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| unsupported("truncated PGM raster"))?;
    let data = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((v.min(maxval as u8) as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    GrayImage::new(width, height, data)
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    use image::DynamicImage;

    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(
        |e| Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    )?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension {
            path: path.to_path_buf(),
        });
    }
    let data = match decoded {
        DynamicImage::ImageLuma8(img) => img.into_raw(),
        DynamicImage::ImageLumaA8(img) => img.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(img) => img.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(img) => img.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("unsupported PNG color type {:?}", other.color()),
            })
        }
    };
    GrayImage::new(w, h, data)
}

/// Multi-scale stack of box-filtered, subsampled images.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
    pub scale_factor: f64,
}

impl Pyramid {
    /// Multiplier from level-`i` coordinates to source-image coordinates.
    pub fn level_scale(&self, level: usize) -> f64 {
        self.scale_factor.powi(level as i32)
    }
}

/// Smallest side a pyramid level may have.
pub const MIN_LEVEL_SIDE: usize = 8;

/// Builds up to `n_levels` levels, each `floor(previous / scale_factor)` in
/// both dimensions. Stops early once a level would drop below 8 pixels.
pub fn build_pyramid(img: &GrayImage, n_levels: usize, scale_factor: f64) -> Result<Pyramid> {
    if n_levels == 0 {
        return Err(Error::InvalidParameter("n_levels must be at least 1".into()));
    }
    if !scale_factor.is_finite() || scale_factor <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "scale_factor must be finite and > 1, got {scale_factor}"
        )));
    }
    let mut levels = vec![img.clone()];
    while levels.len() < n_levels {
        let prev = levels.last().unwrap();
        let w = (prev.width as f64 / scale_factor).floor() as usize;
        let h = (prev.height as f64 / scale_factor).floor() as usize;
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        levels.push(box_downsample(prev, w, h, scale_factor));
    }
    Ok(Pyramid {
        levels,
        scale_factor,
    })
}

/// Source interval covered by output index `i` at the given ratio.
fn source_span(i: usize, ratio: f64, limit: usize) -> (usize, usize) {
    let lo = ((i as f64 * ratio).floor() as usize).min(limit - 1);
    let hi = (((i + 1) as f64 * ratio).floor() as usize).clamp(lo + 1, limit);
    (lo, hi)
}

fn box_downsample(src: &GrayImage, w: usize, h: usize, ratio: f64) -> GrayImage {
    let xs: Vec<_> = (0..w).map(|x| source_span(x, ratio, src.width)).collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = source_span(y, ratio, src.height);
        for &(x0, x1) in &xs {
            let mut sum = 0u32;
            for sy in y0..y1 {
                sum += src.row(sy)[x0..x1].iter().map(|&v| v as u32).sum::<u32>();
            }
            let count = ((y1 - y0) * (x1 - x0)) as u32;
            data.push(((sum + count / 2) / count) as u8);
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Summed-area table with a zero border row and column.
pub(crate) struct IntegralImage {
    stride: usize,
    sums: Vec<u32>,
}

impl IntegralImage {
    pub(crate) fn new(img: &GrayImage) -> Self {
        let stride = img.width + 1;
        let mut sums = vec![0u32; stride * (img.height + 1)];
        for y in 0..img.height {
            let mut row_sum = 0u32;
            for x in 0..img.width {
                row_sum += img.get(x, y) as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage { stride, sums }
    }

    /// Sum over the inclusive box centered at (x, y) with the given radius.
    /// The caller guarantees the box lies inside the image.
    #[inline]
    pub(crate) fn box_sum(&self, x: usize, y: usize, radius: usize) -> u32 {
        let (x0, y0, x1, y1) = (x - radius, y - radius, x + radius + 1, y + radius + 1);
        let s = &self.sums;
        s[y1 * self.stride + x1] + s[y0 * self.stride + x0]
            - s[y0 * self.stride + x1]
            - s[y1 * self.stride + x0]
    }
}

/// Single-channel f32 raster used for scale-space work.
#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub(crate) fn from_gray(img: &GrayImage, scale: f32) -> Self {
        Plane {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v as f32 * scale).collect(),
        }
    }

    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample; coordinates must lie in [0, w-1] x [0, h-1].
    #[inline]
    pub(crate) fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let i = y0 * self.width + x0;
        let top = self.data[i] + fx * (self.data[i + 1] - self.data[i]);
        let bottom = self.data[i + self.width]
            + fx * (self.data[i + self.width + 1] - self.data[i + self.width]);
        top + fy * (bottom - top)
    }

    /// Separable Gaussian blur with clamped borders.
    pub(crate) fn gaussian_blur(&self, sigma: f32) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = ((sigma * 3.0).ceil() as isize).max(1);
        let kernel: Vec<f32> = {
            let raw: Vec<f32> = (-radius..=radius)
                .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
                .collect();
            let total: f32 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        };
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            let row = &self.data[(y * w) as usize..((y + 1) * w) as usize];
            for x in 0..w {
                let mut acc = 0f32;
                for (k, kv) in kernel.iter().enumerate() {
                    let sx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += kv * row[sx as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for (k, kv) in kernel.iter().enumerate() {
                    let sy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[(sy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Plane {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    /// Keeps every second pixel.
    pub(crate) fn decimate(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}
