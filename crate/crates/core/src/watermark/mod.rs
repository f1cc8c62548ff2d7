//! Blind spread-spectrum watermark in mid-band 8x8 DCT coefficients of luma.
//!
//! Blocks are grouped into 8x8-block tiles. The block at tile position
//! `(tx, ty)` carries payload bit `k = 8*ty + tx`, spread over the 12 band
//! coefficients by a keyed ±1 chip vector for that bit. Every tile repeats
//! the full payload, so a crop only shifts which tile position a block sits
//! at; the detector searches that shift along with the pixel grid phase.

mod payload;

pub use payload::{build_payload, crc16, recovery_rate, WatermarkPayload, PAYLOAD_BITS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::dct::BASIS;
use crate::raster::{scale, Image, RasterError};
use crate::rng::{mix3, SplitMix64};

pub const MIN_SIDE: usize = 64;
const TILE: usize = 8;
/// Detection needs the mean per-bit normalized correlation to clear this
/// before a CRC pass counts. Unmarked content sits near 0.8.
pub const SYNC_GATE: f64 = 1.5;

/// `(v, u)` with `2 <= u + v <= 4`, `v` vertical frequency.
pub const BAND: [(usize, usize); 12] = [
    (0, 2),
    (1, 1),
    (2, 0),
    (0, 3),
    (1, 2),
    (2, 1),
    (3, 0),
    (0, 4),
    (1, 3),
    (2, 2),
    (3, 1),
    (4, 0),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WatermarkError {
    #[error("image {0}x{1} is smaller than {MIN_SIDE}x{MIN_SIDE}")]
    ImageTooSmall(usize, usize),
    #[error("identifier '{0}' is empty")]
    EmptyIdentifier(&'static str),
    #[error("expected {PAYLOAD_BITS} bits, got {0}")]
    LengthMismatch(usize),
    #[error("invalid watermark config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkConfig {
    pub lambda: f64,
    pub key: u64,
    pub candidate_scales: Vec<f64>,
}

pub const DEFAULT_KEY: u64 = 0xA3E6_15C0_7D2B_9F41;

impl Default for WatermarkConfig {
    fn default() -> Self {
        WatermarkConfig {
            lambda: 4.0,
            key: DEFAULT_KEY,
            candidate_scales: vec![1.0, 2.0],
        }
    }
}

impl WatermarkConfig {
    pub fn validate(&self) -> Result<(), WatermarkError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(WatermarkError::InvalidConfig(format!("lambda {} must be positive", self.lambda)));
        }
        if self.candidate_scales.is_empty() {
            return Err(WatermarkError::InvalidConfig("no candidate scales".into()));
        }
        if let Some(s) = self.candidate_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(WatermarkError::InvalidConfig(format!("bad candidate scale {s}")));
        }
        Ok(())
    }
}

/// Chip vectors, one per payload bit.
pub fn chips(key: u64) -> [[f64; 12]; PAYLOAD_BITS] {
    std::array::from_fn(|k| {
        let mut rng = SplitMix64::new(mix3(key, k as u64, 0));
        std::array::from_fn(|_| f64::from(rng.sign()))
    })
}

fn check_size(w: usize, h: usize) -> Result<(), WatermarkError> {
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(WatermarkError::ImageTooSmall(w, h));
    }
    Ok(())
}

/// Adds `lambda * s_k * p_kj` to band coefficient `j` of every full block.
pub fn embed(img: &Image, payload: &WatermarkPayload, cfg: &WatermarkConfig) -> Result<Image, WatermarkError> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    check_size(w, h)?;
    let m = &*BASIS;
    let chips = chips(cfg.key);
    // spatial luma pattern per bit, sign included
    let patterns: Vec<[f64; 64]> = (0..PAYLOAD_BITS)
        .map(|k| {
            let s = if payload.bit(k) { 1.0 } else { -1.0 };
            let mut p = [0.0; 64];
            for (j, &(v, u)) in BAND.iter().enumerate() {
                let a = cfg.lambda * s * chips[k][j];
                for y in 0..8 {
                    for x in 0..8 {
                        p[y * 8 + x] += a * m[v][y] * m[u][x];
                    }
                }
            }
            p
        })
        .collect();

    let mut delta = vec![0.0; w * h];
    for by in 0..h / 8 {
        for bx in 0..w / 8 {
            let pat = &patterns[(by % TILE) * TILE + bx % TILE];
            for y in 0..8 {
                let row = (by * 8 + y) * w + bx * 8;
                delta[row..row + 8].copy_from_slice(&pat[y * 8..y * 8 + 8]);
            }
        }
    }
    let mut out = img.clone();
    out.add_luma_delta(&delta);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    #[serde(with = "hex_bits")]
    pub payload_bits: u64,
    /// CRC verified and the correlation cleared [`SYNC_GATE`].
    pub crc_ok: bool,
    pub recovery_rate: Option<f64>,
    /// Block-grid offset of the content, pixels: `(dx, dy)`.
    pub sync: (usize, usize),
    /// Tile position of the first full block, in blocks: `(tx, ty)`.
    pub tile_shift: (usize, usize),
    pub scale_used: f64,
    /// Mean normalized correlation magnitude per bit.
    pub confidence: f64,
}

impl DetectionResult {
    pub fn payload(&self) -> WatermarkPayload {
        WatermarkPayload::from_bits(self.payload_bits)
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..PAYLOAD_BITS).map(|k| (self.payload_bits >> (63 - k)) & 1 == 1).collect()
    }
}

mod hex_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// Band coefficients of the 8x8 luma block at `(x0, y0)`.
fn band_coefficients(luma: &[f64], w: usize, x0: usize, y0: usize, out: &mut [f64; 12]) {
    let m = &*BASIS;
    // horizontal pass for u = 0..=4 only
    let mut t = [[0.0f64; 5]; 8];
    for (y, trow) in t.iter_mut().enumerate() {
        let row = &luma[(y0 + y) * w + x0..(y0 + y) * w + x0 + 8];
        for (u, tv) in trow.iter_mut().enumerate() {
            *tv = row.iter().zip(&m[u]).map(|(a, b)| a * b).sum();
        }
    }
    for (j, &(v, u)) in BAND.iter().enumerate() {
        out[j] = (0..8).map(|y| m[v][y] * t[y][u]).sum();
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    score: f64,
    bits: u64,
    skip: (usize, usize),
    tile: (usize, usize),
}

/// Best grid phase and tile shift on one luma plane, by mean |z|.
fn search(luma: &[f64], w: usize, h: usize, chips: &[[f64; 12]; PAYLOAD_BITS]) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    let mut coeffs = [0.0; 12];
    for sy in 0..8 {
        for sx in 0..8 {
            let (nbx, nby) = ((w.saturating_sub(sx)) / 8, (h.saturating_sub(sy)) / 8);
            if nbx < TILE || nby < TILE {
                continue;
            }
            // correlation is linear, so sum coefficients per tile position first
            let mut sums = [[0.0f64; 12]; TILE * TILE];
            for by in 0..nby {
                for bx in 0..nbx {
                    band_coefficients(luma, w, sx + bx * 8, sy + by * 8, &mut coeffs);
                    let acc = &mut sums[(by % TILE) * TILE + bx % TILE];
                    for j in 0..12 {
                        acc[j] += coeffs[j];
                    }
                }
            }
            let norms: Vec<f64> = sums.iter().map(|s| s.iter().map(|c| c * c).sum::<f64>().sqrt()).collect();
            for ty in 0..TILE {
                for tx in 0..TILE {
                    let mut total = 0.0;
                    let mut bits = 0u64;
                    for (k, chip) in chips.iter().enumerate() {
                        let (ky, kx) = (k / TILE, k % TILE);
                        let pos = ((ky + TILE - ty) % TILE) * TILE + (kx + TILE - tx) % TILE;
                        let r: f64 = sums[pos].iter().zip(chip).map(|(d, p)| d * p).sum();
                        if norms[pos] > 0.0 {
                            total += (r / norms[pos]).abs();
                        }
                        if r > 0.0 {
                            bits |= 1 << (63 - k);
                        }
                    }
                    // r / norm is sqrt(12) times a cosine: roughly unit variance
                    // when the chips are unrelated to the content
                    let score = total / PAYLOAD_BITS as f64;
                    if best.as_ref().map_or(true, |b| score > b.score) {
                        best = Some(Candidate {
                            score,
                            bits,
                            skip: (sx, sy),
                            tile: (tx, ty),
                        });
                    }
                }
            }
        }
    }
    best
}

/// Blind detection. Scales are tried in order; at each, the grid phase and
/// tile shift with the strongest correlation are decoded and accepted when
/// they clear [`SYNC_GATE`] and the CRC. Otherwise the strongest candidate
/// overall is returned with `crc_ok = false`.
pub fn detect(
    img: &Image,
    cfg: &WatermarkConfig,
    reference: Option<&WatermarkPayload>,
) -> Result<DetectionResult, WatermarkError> {
    cfg.validate()?;
    let chips = chips(cfg.key);
    let mut fallback: Option<(Candidate, f64)> = None;
    let mut any_scale = false;
    for &s in &cfg.candidate_scales {
        let scaled;
        let view = if s == 1.0 {
            img
        } else {
            match scale(img, s) {
                Ok(i) => {
                    scaled = i;
                    &scaled
                }
                Err(_) => continue,
            }
        };
        let (w, h) = (view.width(), view.height());
        if w < MIN_SIDE || h < MIN_SIDE {
            continue;
        }
        any_scale = true;
        let Some(c) = search(&view.luma(), w, h, &chips) else {
            continue;
        };
        let passed = c.score >= SYNC_GATE && WatermarkPayload::from_bits(c.bits).crc_ok();
        if passed {
            return Ok(finish(c, s, true, reference));
        }
        if fallback.as_ref().map_or(true, |(b, _)| c.score > b.score) {
            fallback = Some((c, s));
        }
    }
    if !any_scale {
        return Err(WatermarkError::ImageTooSmall(img.width(), img.height()));
    }
    let (c, s) = fallback.expect("at least one scale searched");
    Ok(finish(c, s, false, reference))
}

fn finish(c: Candidate, scale_used: f64, crc_ok: bool, reference: Option<&WatermarkPayload>) -> DetectionResult {
    let mut r = DetectionResult {
        payload_bits: c.bits,
        crc_ok,
        recovery_rate: None,
        sync: ((8 - c.skip.0) % 8, (8 - c.skip.1) % 8),
        tile_shift: c.tile,
        scale_used,
        confidence: c.score,
    };
    if let Some(p) = reference {
        r.recovery_rate = recovery_rate(p, &r.bits()).ok();
    }
    r
}
