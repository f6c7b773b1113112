use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Single-channel image in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Reflect-101 border index (`-1 → 1`, `n → n-2`).
pub(crate) fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as i64;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

impl Plane {
    /// Accepts `H×W` or `1×H×W` tensors.
    pub fn from_tensor(t: &Tensor<f32>, ctx: &str) -> Result<Self> {
        let (h, w) = match t.shape() {
            [h, w] => (*h, *w),
            [1, h, w] => (*h, *w),
            [c, _, _] => return Err(Error::dim(ctx, "0 (channels)", 1, c)),
            s => return Err(Error::dim(ctx, "rank", "2 or 3", s.len())),
        };
        Ok(Plane {
            width: w,
            height: h,
            data: t.data().to_vec(),
        })
    }

    #[inline]
    pub fn at_reflect(&self, x: i64, y: i64) -> f32 {
        self.data[reflect_index(y, self.height) * self.width + reflect_index(x, self.width)]
    }

    /// Gaussian blur (binomial 1-4-6-4-1) then decimation by two.
    pub fn downsample(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = (0..5)
                    .map(|k| K[k] * self.at_reflect(x as i64 + k as i64 - 2, y as i64))
                    .sum();
            }
        }
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        let mut data = vec![0.0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                let sy = 2 * y;
                data[y * nw + x] = (0..5)
                    .map(|k| K[k] * tmp[reflect_index(sy as i64 + k as i64 - 2, h) * w + 2 * x])
                    .sum();
            }
        }
        Plane {
            width: nw,
            height: nh,
            data,
        }
    }
}

/// Bilinear sample of a plane at a real position, clamping to the border.
#[inline]
pub(crate) fn sample_clamped(data: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let xf = x.clamp(0.0, (width - 1) as f32);
    let yf = y.clamp(0.0, (height - 1) as f32);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xf - x0 as f32;
    let fy = yf - y0 as f32;
    let top = data[y0 * width + x0] * (1.0 - fx) + data[y0 * width + x1] * fx;
    let bot = data[y1 * width + x0] * (1.0 - fx) + data[y1 * width + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_101() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn downsample_preserves_constant() {
        let p = Plane {
            width: 7,
            height: 6,
            data: vec![3.5; 42],
        };
        let d = p.downsample();
        assert_eq!((d.width, d.height), (4, 3));
        assert!(d.data.iter().all(|&v| (v - 3.5).abs() < 1e-6));
    }
}
