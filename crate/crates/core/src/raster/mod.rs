//! Raster images, geometric transforms and quality metrics.
//!
//! Everything here is a pure function over owned or borrowed [`Image`]s.
//! Channel arithmetic always rounds half-up and clamps to `0..=255`.

pub(crate) mod dct;
mod jpeg;
mod ppm;

pub use dct::{dct8, idct8, Block8};
pub use jpeg::{jpeg_attack, scaled_luma_table, LUMA_QUANT_TABLE};
pub use ppm::{read_ppm, write_ppm};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("bad magic number, expected P6 or P5")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("pixel payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("image dimensions must be at least 1x1 (got {0}x{1})")]
    EmptyImage(usize, usize),
    #[error("pixel buffer has {found} entries, expected {expected}")]
    PixelCount { expected: usize, found: usize },
    #[error("scaling produces a zero output dimension")]
    ZeroOutputDimension,
    #[error("scale factor must be finite and positive")]
    BadScaleFactor,
    #[error("rectangle {0:?} is not inside a {1}x{2} image")]
    OutOfBounds(Rect, usize, usize),
    #[error("JPEG quality {0} outside 1..=100")]
    QualityOutOfRange(u32),
    #[error("images differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Pixel rectangle, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }
}

/// Row-major RGB image with optional per-pixel coverage.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
    alpha: Option<Vec<u8>>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("has_alpha", &self.alpha.is_some())
            .finish()
    }
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage(width, height));
        }
        Ok(Image {
            width,
            height,
            pixels: vec![color; width * height],
            alpha: None,
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage(width, height));
        }
        if pixels.len() != width * height {
            return Err(RasterError::PixelCount {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            pixels,
            alpha: None,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Rgb,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage(width, height));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Image {
            width,
            height,
            pixels,
            alpha: None,
        })
    }

    pub fn with_alpha(mut self, alpha: Vec<u8>) -> Result<Self, RasterError> {
        if alpha.len() != self.pixels.len() {
            return Err(RasterError::PixelCount {
                expected: self.pixels.len(),
                found: alpha.len(),
            });
        }
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn without_alpha(mut self) -> Self {
        self.alpha = None;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn alpha(&self) -> Option<&[u8]> {
        self.alpha.as_deref()
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    /// Coverage at `(x, y)`; fully opaque when the image carries no alpha.
    pub fn alpha_at(&self, x: usize, y: usize) -> u8 {
        match &self.alpha {
            Some(a) => a[y * self.width + x],
            None => 255,
        }
    }

    /// BT.601 luma plane, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| luma_of(p)).collect()
    }

    /// Adds a per-pixel luma offset equally to R, G and B.
    pub fn add_luma_delta(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.pixels.len());
        for (p, &d) in self.pixels.iter_mut().zip(delta) {
            for c in p.iter_mut() {
                *c = clamp_channel(f64::from(*c) + d);
            }
        }
    }
}

pub fn luma_of(p: Rgb) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

/// Round half-up.
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

pub fn clamp_channel(v: f64) -> u8 {
    round_half_up(v).clamp(0.0, 255.0) as u8
}

/// Bilinear resample by `factor`; output size is `round(dim * factor)`.
pub fn scale(img: &Image, factor: f64) -> Result<Image, RasterError> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(RasterError::BadScaleFactor);
    }
    let out_w = round_half_up(img.width as f64 * factor) as usize;
    let out_h = round_half_up(img.height as f64 * factor) as usize;
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::ZeroOutputDimension);
    }

    let taps = |dst: usize, src_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) / factor - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, img.width)).collect();
    let ys: Vec<_> = (0..out_h).map(|y| taps(y, img.height)).collect();

    let mut pixels = Vec::with_capacity(out_w * out_h);
    let mut alpha = img.alpha.as_ref().map(|_| Vec::with_capacity(out_w * out_h));
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let lerp2 = |f: &dyn Fn(usize, usize) -> f64| {
                let top = f(x0, y0) * (1.0 - tx) + f(x1, y0) * tx;
                let bottom = f(x0, y1) * (1.0 - tx) + f(x1, y1) * tx;
                top * (1.0 - ty) + bottom * ty
            };
            let mut px = [0u8; 3];
            for (c, out) in px.iter_mut().enumerate() {
                *out = clamp_channel(lerp2(&|x, y| f64::from(img.get(x, y)[c])));
            }
            pixels.push(px);
            if let (Some(dst), Some(src)) = (alpha.as_mut(), img.alpha.as_ref()) {
                dst.push(clamp_channel(lerp2(&|x, y| f64::from(src[y * img.width + x]))));
            }
        }
    }
    Ok(Image {
        width: out_w,
        height: out_h,
        pixels,
        alpha,
    })
}

pub fn crop(img: &Image, r: Rect) -> Result<Image, RasterError> {
    if r.w == 0 || r.h == 0 || r.x + r.w > img.width || r.y + r.h > img.height {
        return Err(RasterError::OutOfBounds(r, img.width, img.height));
    }
    let mut pixels = Vec::with_capacity(r.w * r.h);
    let mut alpha = img.alpha.as_ref().map(|_| Vec::with_capacity(r.w * r.h));
    for y in r.y..r.y + r.h {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row + r.x..row + r.x + r.w]);
        if let (Some(dst), Some(src)) = (alpha.as_mut(), img.alpha.as_ref()) {
            dst.extend_from_slice(&src[row + r.x..row + r.x + r.w]);
        }
    }
    Ok(Image {
        width: r.w,
        height: r.h,
        pixels,
        alpha,
    })
}

/// Peak signal-to-noise ratio over all RGB samples. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, RasterError> {
    if a.width != b.width || a.height != b.height {
        return Err(RasterError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let sum_sq: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(&u, &v)| (f64::from(u) - f64::from(v)).powi(2)))
        .sum();
    let mse = sum_sq / (a.pixels.len() * 3) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}
