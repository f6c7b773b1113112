use super::expansion::ExpansionCoefficients;
use super::plane::{reflect_index, sample_clamped};
use super::FlowField;
use crate::error::{Error, Result};

/// Flow estimate plus the number of pixels whose aggregated system was
/// singular and therefore kept the prior displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementEstimate {
    pub field: FlowField,
    pub singular_pixels: usize,
}

/// Separable box sum with reflect-101 borders.
fn box_filter(src: &[f32], w: usize, h: usize, radius: usize) -> Vec<f32> {
    let r = radius as i64;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = 0.0f32;
            for dx in -r..=r {
                s += row[reflect_index(x as i64 + dx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for dy in -r..=r {
            let sy = reflect_index(y as i64 + dy, h);
            let (dst, srow) = (&mut out[y * w..(y + 1) * w], &tmp[sy * w..(sy + 1) * w]);
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += s;
            }
        }
    }
    out
}

/// One refinement step of displacement estimation from two polynomial
/// expansions.
///
/// With `x̃ = x + prior(x)`, each pixel contributes the system
/// `A d = Δb` where `A = (A₁(x) + A₂(x̃)) / 2` and
/// `Δb = −½ (b₂(x̃) − b₁(x)) + A·prior(x)`. The normal equations `AᵀA`, `AᵀΔb`
/// are summed over a `(2·radius+1)²` box and solved per pixel. A singular
/// aggregate leaves the prior unchanged and is counted.
pub fn displacement_from_expansions(
    coeffs_a: &ExpansionCoefficients,
    coeffs_b: &ExpansionCoefficients,
    prior: &FlowField,
    aggregation_radius: usize,
) -> Result<DisplacementEstimate> {
    let (w, h) = (coeffs_a.width, coeffs_a.height);
    if coeffs_b.width != w {
        return Err(Error::dim("displacement_from_expansions", "width", w, coeffs_b.width));
    }
    if coeffs_b.height != h {
        return Err(Error::dim("displacement_from_expansions", "height", h, coeffs_b.height));
    }
    if prior.width != w || prior.height != h {
        return Err(Error::dim(
            "displacement_from_expansions prior",
            "size",
            format!("{w}x{h}"),
            format!("{}x{}", prior.width, prior.height),
        ));
    }
    let n = w * h;
    let mut g00 = vec![0.0f32; n];
    let mut g01 = vec![0.0f32; n];
    let mut g11 = vec![0.0f32; n];
    let mut h0 = vec![0.0f32; n];
    let mut h1 = vec![0.0f32; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = (prior.u[i], prior.v[i]);
            let (sx, sy) = (x as f32 + du, y as f32 + dv);
            let s = |p: &[f32]| sample_clamped(p, w, h, sx, sy);
            let a00 = 0.5 * (coeffs_a.a00[i] + s(&coeffs_b.a00));
            let a01 = 0.5 * (coeffs_a.a01[i] + s(&coeffs_b.a01));
            let a11 = 0.5 * (coeffs_a.a11[i] + s(&coeffs_b.a11));
            let db0 = -0.5 * (s(&coeffs_b.b0) - coeffs_a.b0[i]) + a00 * du + a01 * dv;
            let db1 = -0.5 * (s(&coeffs_b.b1) - coeffs_a.b1[i]) + a01 * du + a11 * dv;
            // A is symmetric, so AᵀA = A².
            g00[i] = a00 * a00 + a01 * a01;
            g01[i] = a01 * (a00 + a11);
            g11[i] = a01 * a01 + a11 * a11;
            h0[i] = a00 * db0 + a01 * db1;
            h1[i] = a01 * db0 + a11 * db1;
        }
    }
    let g00 = box_filter(&g00, w, h, aggregation_radius);
    let g01 = box_filter(&g01, w, h, aggregation_radius);
    let g11 = box_filter(&g11, w, h, aggregation_radius);
    let h0 = box_filter(&h0, w, h, aggregation_radius);
    let h1 = box_filter(&h1, w, h, aggregation_radius);

    let mut field = FlowField::zeros(w, h);
    let mut singular = 0;
    for i in 0..n {
        let (a, b, c) = (g00[i] as f64, g01[i] as f64, g11[i] as f64);
        let det = a * c - b * b;
        let tr = a + c;
        if !(tr > 1e-12 && det > 1e-6 * tr * tr) {
            field.u[i] = prior.u[i];
            field.v[i] = prior.v[i];
            singular += 1;
            continue;
        }
        let (r0, r1) = (h0[i] as f64, h1[i] as f64);
        field.u[i] = ((c * r0 - b * r1) / det) as f32;
        field.v[i] = ((a * r1 - b * r0) / det) as f32;
    }
    Ok(DisplacementEstimate {
        field,
        singular_pixels: singular,
    })
}
