//! Square, vehicle-centred regions of interest.
//!
//! Coordinates are continuous pixel coordinates: pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)`, so its centre is `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Vehicle outline in one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub frame: usize,
    pub vertices: Vec<(f64, f64)>,
}

impl Contour {
    /// Needs at least 3 finite vertices. Vertices may lie outside the image.
    pub fn new(frame: usize, vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "contour at frame {frame} has {} vertices, need at least 3",
                vertices.len()
            )));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Geometry(format!("contour at frame {frame} has a non-finite vertex")));
        }
        Ok(Contour { frame, vertices })
    }

    /// Axis-aligned rectangle as a 4-vertex contour.
    pub fn rectangle(frame: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Contour::new(frame, vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub scale: u32,
    pub output_size: usize,
}

impl RoiSpec {
    pub fn new(scale: u32, output_size: usize) -> Result<Self> {
        let s = RoiSpec { scale, output_size };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.scale) {
            return Err(Error::Config(format!("ROI scale must be 1..=4, got {}", self.scale)));
        }
        if self.output_size == 0 {
            return Err(Error::Config("ROI output size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for RoiSpec {
    fn default() -> Self {
        RoiSpec {
            scale: 2,
            output_size: 112,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub center: (f64, f64),
    pub side: f64,
}

impl RoiBox {
    /// Integer crop placement: `(x0, y0, side)` of the top-left source pixel.
    pub fn pixel_window(&self) -> (i64, i64, usize) {
        let s = self.side.round().max(1.0);
        let x0 = (self.center.0 - s / 2.0).round() as i64;
        let y0 = (self.center.1 - s / 2.0).round() as i64;
        (x0, y0, s as usize)
    }
}

/// Square box centred on the contour bounding box with side
/// `scale · max(width, height)`.
pub fn square_box(contour: &Contour, scale: u32) -> Result<RoiBox> {
    if scale == 0 {
        return Err(Error::Config("ROI scale must be positive".into()));
    }
    let (x0, y0, x1, y1) = contour.bounds();
    let extent = (x1 - x0).max(y1 - y0);
    if !(extent > 0.0) {
        return Err(Error::Geometry(format!(
            "contour at frame {} has zero width and height",
            contour.frame
        )));
    }
    Ok(RoiBox {
        center: ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
        side: scale as f64 * extent,
    })
}

/// Result of [`crop_pad`].
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub image: Tensor<f32>,
    /// Set when the box does not overlap the image at all.
    pub fully_outside: bool,
}

/// Cuts the box out of a `C×H×W` image. The output is `C×S×S` with
/// `S = round(side)`; pixels outside the source are exactly 0.
pub fn crop_pad(image: &Tensor<f32>, roi: &RoiBox) -> Result<Crop> {
    let [c, h, w] = match image.shape() {
        &[c, h, w] => [c, h, w],
        s => return Err(Error::dim("crop_pad", "rank", 3, s.len())),
    };
    if !(roi.side > 0.0 && roi.side.is_finite()) {
        return Err(Error::Geometry(format!("ROI side must be positive, got {}", roi.side)));
    }
    let (x0, y0, s) = roi.pixel_window();
    let src = image.data();
    let mut out = vec![0.0f32; c * s * s];
    let mut any = false;
    for ch in 0..c {
        for oy in 0..s {
            let sy = y0 + oy as i64;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for ox in 0..s {
                let sx = x0 + ox as i64;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                any = true;
                out[(ch * s + oy) * s + ox] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    if !any {
        log::warn!("ROI centred at {:?} lies entirely outside the {w}x{h} image", roi.center);
    }
    Ok(Crop {
        image: Tensor::new(vec![c, s, s], out)?,
        fully_outside: !any,
    })
}

/// Bilinear resize of a `C×H×W` tensor with half-pixel centres and edge
/// clamping.
pub fn resize_bilinear(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let [c, h, w] = match image.shape() {
        &[c, h, w] => [c, h, w],
        s => return Err(Error::dim("resize", "rank", 3, s.len())),
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize", "output size", "> 0", 0));
    }
    let taps = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        let r = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * r - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ty = taps(out_h, h);
    let tx = taps(out_w, w);
    let src = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Per-channel standardization `(v − mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: 0.5, std: 0.5 }
    }
}

impl Normalization {
    pub fn apply(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        if !(self.std > 0.0) {
            return Err(Error::Config(format!("normalization std must be positive, got {}", self.std)));
        }
        let data = image.data().iter().map(|v| (v - self.mean) / self.std).collect();
        Tensor::new(image.shape().to_vec(), data)
    }
}

/// Square resize to `output_size` followed by standardization.
pub fn resize_normalize(crop: &Tensor<f32>, output_size: usize, norm: Normalization) -> Result<Tensor<f32>> {
    if let &[_, h, w] = crop.shape() {
        if h != w {
            return Err(Error::dim("resize_normalize", "2 (width)", h, w));
        }
    }
    norm.apply(&resize_bilinear(crop, output_size, output_size)?)
}

/// Full chain: square box, zero-padded crop, resize to the output size.
/// Values stay in the source range (no standardization).
pub fn extract_roi(image: &Tensor<f32>, contour: &Contour, spec: RoiSpec) -> Result<Crop> {
    spec.validate()?;
    let b = square_box(contour, spec.scale)?;
    let crop = crop_pad(image, &b)?;
    Ok(Crop {
        image: resize_bilinear(&crop.image, spec.output_size, spec.output_size)?,
        fully_outside: crop.fully_outside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_side_and_center() {
        let c = Contour::rectangle(0, 80.0, 65.0, 120.0, 95.0).unwrap();
        let b = square_box(&c, 2).unwrap();
        assert_eq!(b.center, (100.0, 80.0));
        assert_eq!(b.side, 80.0);
        assert_eq!(square_box(&c, 1).unwrap().side, 40.0);
        let sq = Contour::rectangle(0, 0.0, 0.0, 50.0, 50.0).unwrap();
        for k in 1..=4 {
            assert_eq!(square_box(&sq, k).unwrap().side, 50.0 * k as f64);
        }
    }

    #[test]
    fn degenerate_contours_rejected() {
        let c = Contour::new(3, vec![(1.0, 1.0); 3]).unwrap();
        assert!(matches!(square_box(&c, 1), Err(Error::Geometry(_))));
        assert!(Contour::new(0, vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn ramp_crop_picks_rows_three_to_six() {
        let img = Tensor::from_fn(&[1, 10, 10], |i| i as f32);
        let crop = crop_pad(
            &img,
            &RoiBox {
                center: (5.0, 5.0),
                side: 4.0,
            },
        )
        .unwrap();
        let expect: Vec<f32> = (3..7).flat_map(|r| (3..7).map(move |c| (r * 10 + c) as f32)).collect();
        assert_eq!(crop.image.data(), &expect[..]);
        assert!(!crop.fully_outside);
    }

    #[test]
    fn outside_box_is_flagged_zero() {
        let img = Tensor::full(&[3, 8, 8], 1.0);
        let crop = crop_pad(
            &img,
            &RoiBox {
                center: (-20.0, 4.0),
                side: 6.0,
            },
        )
        .unwrap();
        assert!(crop.fully_outside);
        assert!(crop.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resize_identities() {
        let img = Tensor::from_fn(&[2, 12, 12], |i| (i as f32 * 0.37).sin());
        assert_eq!(resize_bilinear(&img, 12, 12).unwrap(), img);
        let c = Tensor::full(&[1, 56, 56], 0.3);
        assert!(resize_bilinear(&c, 112, 112).unwrap().data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn checkerboard_mean_preserved() {
        let img = Tensor::from_fn(&[1, 224, 224], |i| ((i % 224 + i / 224) % 2) as f32);
        let r = resize_bilinear(&img, 112, 112).unwrap();
        let mean = r.data().iter().sum::<f32>() / r.numel() as f32;
        assert!((mean - 0.5).abs() < 1e-3);
    }

    #[test]
    fn normalization_maps_unit_interval() {
        let t = Tensor::from_fn(&[1, 1, 3], |i| i as f32 / 2.0);
        let n = resize_normalize(&t.clone().reshape(&[1, 1, 3]).unwrap(), 3, Normalization::default());
        assert!(n.is_err());
        let sq = Tensor::from_fn(&[1, 2, 2], |i| if i == 0 { 0.0 } else { 1.0 });
        let n = resize_normalize(&sq, 2, Normalization::default()).unwrap();
        assert_eq!(n.data(), &[-1.0, 1.0, 1.0, 1.0]);
    }
}
