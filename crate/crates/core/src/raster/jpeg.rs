//! Luma-only JPEG quantization round trip, used as the compression attack.

use super::{dct8, idct8, round_half_up, Block8, Image, RasterError};

/// ITU-T T.81 Annex K luminance quantization table, row-major.
pub const LUMA_QUANT_TABLE: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

/// The Annex K table scaled to `quality` with the libjpeg convention.
pub fn scaled_luma_table(quality: u32) -> Result<[[u16; 8]; 8], RasterError> {
    if !(1..=100).contains(&quality) {
        return Err(RasterError::QualityOutOfRange(quality));
    }
    let s = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let mut t = [[0u16; 8]; 8];
    for (row, base) in t.iter_mut().zip(&LUMA_QUANT_TABLE) {
        for (v, &b) in row.iter_mut().zip(base) {
            *v = ((u32::from(b) * s + 50) / 100).clamp(1, 255) as u16;
        }
    }
    Ok(t)
}

/// Quantizes the luma of every 8x8 block against the scaled table and
/// writes the luma change back equally to R, G and B. Edge blocks are padded
/// by replication; the padding is discarded.
pub fn jpeg_attack(img: &Image, quality: u32) -> Result<Image, RasterError> {
    let table = scaled_luma_table(quality)?;
    let (w, h) = (img.width(), img.height());
    let luma = img.luma();
    let mut delta = vec![0.0; w * h];

    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block: Block8 = [[0.0; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                let sy = (by + y).min(h - 1);
                for (x, v) in row.iter_mut().enumerate() {
                    let sx = (bx + x).min(w - 1);
                    *v = luma[sy * w + sx] - 128.0;
                }
            }
            let mut coeffs = dct8(&block);
            for (crow, trow) in coeffs.iter_mut().zip(&table) {
                for (c, &q) in crow.iter_mut().zip(trow) {
                    let q = f64::from(q);
                    *c = round_half_up(*c / q) * q;
                }
            }
            let rec = idct8(&coeffs);
            for (y, row) in rec.iter().enumerate().take(h - by) {
                for (x, &v) in row.iter().enumerate().take(w - bx) {
                    let i = (by + y) * w + bx + x;
                    delta[i] = v + 128.0 - luma[i];
                }
            }
        }
    }

    let mut out = img.clone();
    out.add_luma_delta(&delta);
    Ok(out)
}
