//! Per-pixel quadratic polynomial expansion.
//!
//! Each neighborhood is fitted, by Gaussian-weighted least squares, to
//! `f(p) ≈ pᵀA p + bᵀp + c` with `p = (dx, dy)` the offset from the pixel
//! centre. The basis `{1, x, y, x², y², xy}` and the Gaussian weights are
//! separable, so the six inner products come from two separable correlation
//! passes; the constant Gram matrix is inverted once.

use super::plane::Plane;
use crate::error::{Error, Result};

/// Quadratic model coefficients for every pixel of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionCoefficients {
    pub width: usize,
    pub height: usize,
    /// `A[0][0]`, `A[0][1]` (= `A[1][0]`), `A[1][1]` planes.
    pub a00: Vec<f32>,
    pub a01: Vec<f32>,
    pub a11: Vec<f32>,
    pub b0: Vec<f32>,
    pub b1: Vec<f32>,
    pub c: Vec<f32>,
}

impl ExpansionCoefficients {
    pub fn a(&self, x: usize, y: usize) -> [[f32; 2]; 2] {
        let i = y * self.width + x;
        [[self.a00[i], self.a01[i]], [self.a01[i], self.a11[i]]]
    }

    pub fn b(&self, x: usize, y: usize) -> [f32; 2] {
        let i = y * self.width + x;
        [self.b0[i], self.b1[i]]
    }

    pub fn c(&self, x: usize, y: usize) -> f32 {
        self.c[y * self.width + x]
    }

    pub(crate) fn is_finite(&self) -> bool {
        [&self.a00, &self.a01, &self.a11, &self.b0, &self.b1, &self.c]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Normalized 1-D Gaussian over `-radius..=radius`; its outer product with
/// itself sums to 1.
pub(crate) fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

fn invert6(m: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut a = m;
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular polynomial Gram matrix");
        for j in 0..6 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..6 {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..6 {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    inv
}

pub(crate) fn expand_plane(img: &Plane, window_radius: usize, sigma: f64) -> Result<ExpansionCoefficients> {
    let side = 2 * window_radius + 1;
    if img.width < side || img.height < side {
        return Err(Error::dim(
            "polynomial_expansion",
            if img.width < side { "width" } else { "height" },
            format!(">= {side}"),
            img.width.min(img.height),
        ));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("expansion sigma must be positive, got {sigma}")));
    }
    let g = gaussian_kernel(window_radius, sigma);
    let r = window_radius as i64;
    let offs: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
    let g1: Vec<f64> = g.iter().zip(&offs).map(|(w, x)| w * x).collect();
    let g2: Vec<f64> = g.iter().zip(&offs).map(|(w, x)| w * x * x).collect();
    let mu2: f64 = g2.iter().sum();
    let mu4: f64 = g.iter().zip(&offs).map(|(w, x)| w * x.powi(4)).sum();

    // Gram matrix for basis [1, x, y, x², y², xy].
    let gram = [
        [1.0, 0.0, 0.0, mu2, mu2, 0.0],
        [0.0, mu2, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, mu2, 0.0, 0.0, 0.0],
        [mu2, 0.0, 0.0, mu4, mu2 * mu2, 0.0],
        [mu2, 0.0, 0.0, mu2 * mu2, mu4, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, mu2 * mu2],
    ];
    let ginv = invert6(gram);

    let (w, h) = (img.width, img.height);
    let n = w * h;
    // Horizontal pass: moments of order 0, 1, 2 along x.
    let mut h0 = vec![0.0f64; n];
    let mut h1 = vec![0.0f64; n];
    let mut h2 = vec![0.0f64; n];
    for y in 0..h {
        for x in 0..w {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for k in 0..side {
                let v = img.at_reflect(x as i64 + k as i64 - r, y as i64) as f64;
                s0 += g[k] * v;
                s1 += g1[k] * v;
                s2 += g2[k] * v;
            }
            let i = y * w + x;
            h0[i] = s0;
            h1[i] = s1;
            h2[i] = s2;
        }
    }
    let reflect = |i: i64, n: usize| -> usize { super::plane::reflect_index(i, n) };
    let mut out = ExpansionCoefficients {
        width: w,
        height: h,
        a00: vec![0.0; n],
        a01: vec![0.0; n],
        a11: vec![0.0; n],
        b0: vec![0.0; n],
        b1: vec![0.0; n],
        c: vec![0.0; n],
    };
    for y in 0..h {
        for x in 0..w {
            let mut m = [0.0f64; 6];
            for (k, dy) in (-r..=r).enumerate() {
                let row = reflect(y as i64 + dy, h) * w + x;
                let (a0, a1, a2) = (h0[row], h1[row], h2[row]);
                m[0] += g[k] * a0;
                m[1] += g[k] * a1;
                m[2] += g1[k] * a0;
                m[3] += g[k] * a2;
                m[4] += g2[k] * a0;
                m[5] += g1[k] * a1;
            }
            let mut rr = [0.0f64; 6];
            for (i, row) in ginv.iter().enumerate() {
                rr[i] = row.iter().zip(&m).map(|(a, b)| a * b).sum();
            }
            let i = y * w + x;
            out.c[i] = rr[0] as f32;
            out.b0[i] = rr[1] as f32;
            out.b1[i] = rr[2] as f32;
            out.a00[i] = rr[3] as f32;
            out.a11[i] = rr[4] as f32;
            out.a01[i] = (rr[5] / 2.0) as f32;
        }
    }
    if !out.is_finite() {
        return Err(Error::numeric("polynomial_expansion", "non-finite coefficient"));
    }
    Ok(out)
}
