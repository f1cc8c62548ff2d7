//! Orthonormal 8x8 DCT-II and its inverse.
//!
//! Blocks are indexed `[row][col]`. For coefficients, row is the vertical
//! frequency and col the horizontal one, matching the JPEG table layout.

use std::sync::LazyLock;

pub type Block8 = [[f64; 8]; 8];

/// `BASIS[u][x] = a(u) * cos((2x + 1) u pi / 16)`, with `a(0) = sqrt(1/8)`, `a(u>0) = 1/2`.
pub(crate) static BASIS: LazyLock<[[f64; 8]; 8]> = LazyLock::new(|| {
    let mut m = [[0.0; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = a * (((2 * x + 1) as f64) * (u as f64) * std::f64::consts::PI / 16.0).cos();
        }
    }
    m
});

pub fn dct8(b: &Block8) -> Block8 {
    let m = &*BASIS;
    // rows first: t[y][u] = sum_x b[y][x] m[u][x]
    let mut t = [[0.0; 8]; 8];
    for y in 0..8 {
        for u in 0..8 {
            t[y][u] = (0..8).map(|x| b[y][x] * m[u][x]).sum();
        }
    }
    let mut c = [[0.0; 8]; 8];
    for v in 0..8 {
        for u in 0..8 {
            c[v][u] = (0..8).map(|y| t[y][u] * m[v][y]).sum();
        }
    }
    c
}

pub fn idct8(c: &Block8) -> Block8 {
    let m = &*BASIS;
    let mut t = [[0.0; 8]; 8];
    for v in 0..8 {
        for x in 0..8 {
            t[v][x] = (0..8).map(|u| c[v][u] * m[u][x]).sum();
        }
    }
    let mut b = [[0.0; 8]; 8];
    for y in 0..8 {
        for x in 0..8 {
            b[y][x] = (0..8).map(|v| t[v][x] * m[v][y]).sum();
        }
    }
    b
}
