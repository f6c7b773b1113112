//! Dense optical flow by polynomial expansion, with coarse-to-fine pyramid
//! refinement, and conversion of flow fields into motion-stream channels.

mod displacement;
mod expansion;
mod io;
mod plane;

pub use displacement::{displacement_from_expansions, DisplacementEstimate};
pub use expansion::ExpansionCoefficients;
pub use io::{flow_to_rgb, read_flow, read_flow_file, write_flow, write_flow_file};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use plane::{sample_clamped, Plane};

/// Per-pixel displacement from frame A to frame B, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| (u * u + v * v).sqrt())
            .fold(0.0, f32::max)
    }

    /// Bilinear resize to a new grid, scaling vectors by the size ratio.
    fn upscaled(&self, width: usize, height: usize) -> FlowField {
        let sx = width as f32 / self.width as f32;
        let sy = height as f32 / self.height as f32;
        let mut out = FlowField::zeros(width, height);
        for y in 0..height {
            let fy = (y as f32 + 0.5) / sy - 0.5;
            for x in 0..width {
                let fx = (x as f32 + 0.5) / sx - 0.5;
                let i = y * width + x;
                out.u[i] = sx * sample_clamped(&self.u, self.width, self.height, fx, fy);
                out.v[i] = sy * sample_clamped(&self.v, self.width, self.height, fx, fy);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub levels: usize,
    pub iterations: usize,
    /// Radius of the polynomial-expansion neighborhood.
    pub window_radius: usize,
    /// Standard deviation of the expansion weights.
    pub sigma: f64,
    /// Radius of the box over which per-pixel constraints are summed.
    pub aggregation_radius: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            levels: 3,
            iterations: 3,
            window_radius: 5,
            sigma: 1.1,
            aggregation_radius: 6,
        }
    }
}

/// Grayscale luma from a `3×H×W` RGB tensor (0.299, 0.587, 0.114). Single
/// channel inputs are returned unchanged as `1×H×W`.
pub fn to_grayscale(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    match image.shape() {
        [3, h, w] => {
            let n = h * w;
            let d = image.data();
            let g = (0..n)
                .map(|i| 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i])
                .collect();
            Tensor::new(vec![1, *h, *w], g)
        }
        [1, _, _] => Ok(image.clone()),
        [h, w] => image.clone().reshape(&[1, *h, *w]),
        [c, _, _] => Err(Error::dim("to_grayscale", "0 (channels)", "1 or 3", c)),
        s => Err(Error::dim("to_grayscale", "rank", "2 or 3", s.len())),
    }
}

/// Quadratic polynomial expansion of a grayscale image (`H×W` or `1×H×W`).
pub fn polynomial_expansion(image: &Tensor<f32>, window_radius: usize, sigma: f64) -> Result<ExpansionCoefficients> {
    let p = Plane::from_tensor(image, "polynomial_expansion")?;
    expansion::expand_plane(&p, window_radius, sigma)
}

/// A frame's expansion pyramid, finest level first. Reusable when one frame
/// takes part in several flow computations.
#[derive(Clone, Debug)]
pub struct PreparedFrame {
    levels: Vec<ExpansionCoefficients>,
}

impl PreparedFrame {
    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn height(&self) -> usize {
        self.levels[0].height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FlowDiagnostics {
    pub levels_used: usize,
    pub singular_pixels: usize,
}

/// Dense flow estimator with fixed parameters.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FlowEstimator {
    pub params: FlowParams,
}

impl FlowEstimator {
    pub fn new(params: FlowParams) -> Result<Self> {
        if params.levels == 0 {
            return Err(Error::Config("flow pyramid needs at least one level".into()));
        }
        if params.iterations == 0 {
            return Err(Error::Config("flow needs at least one iteration per level".into()));
        }
        Ok(FlowEstimator { params })
    }

    pub fn prepare(&self, frame: &Tensor<f32>) -> Result<PreparedFrame> {
        let base = Plane::from_tensor(frame, "dense_flow")?;
        let min_side = 2 * self.params.window_radius + 1;
        if base.width < min_side || base.height < min_side {
            return Err(Error::dim(
                "dense_flow",
                "size",
                format!(">= {min_side}"),
                base.width.min(base.height),
            ));
        }
        let mut planes = vec![base];
        while planes.len() < self.params.levels {
            let next = planes.last().expect("nonempty").downsample();
            if next.width < min_side || next.height < min_side {
                log::debug!("flow pyramid truncated at {} levels", planes.len());
                break;
            }
            planes.push(next);
        }
        let levels = planes
            .iter()
            .map(|p| expansion::expand_plane(p, self.params.window_radius, self.params.sigma))
            .collect::<Result<_>>()?;
        Ok(PreparedFrame { levels })
    }

    pub fn flow_between(&self, a: &PreparedFrame, b: &PreparedFrame) -> Result<(FlowField, FlowDiagnostics)> {
        if a.width() != b.width() {
            return Err(Error::dim("dense_flow", "width", a.width(), b.width()));
        }
        if a.height() != b.height() {
            return Err(Error::dim("dense_flow", "height", a.height(), b.height()));
        }
        let depth = a.levels.len().min(b.levels.len());
        let mut flow: Option<FlowField> = None;
        let mut diag = FlowDiagnostics {
            levels_used: depth,
            singular_pixels: 0,
        };
        for lvl in (0..depth).rev() {
            let (ca, cb) = (&a.levels[lvl], &b.levels[lvl]);
            let mut cur = match flow.take() {
                None => FlowField::zeros(ca.width, ca.height),
                Some(f) => f.upscaled(ca.width, ca.height),
            };
            for _ in 0..self.params.iterations {
                let est = displacement_from_expansions(ca, cb, &cur, self.params.aggregation_radius)?;
                cur = est.field;
                if lvl == 0 {
                    diag.singular_pixels = est.singular_pixels;
                }
            }
            flow = Some(cur);
        }
        Ok((flow.expect("at least one level"), diag))
    }

    pub fn flow(&self, frame_a: &Tensor<f32>, frame_b: &Tensor<f32>) -> Result<(FlowField, FlowDiagnostics)> {
        if frame_a.shape() != frame_b.shape() {
            return Err(Error::dim(
                "dense_flow",
                "frame shape",
                format!("{:?}", frame_a.shape()),
                format!("{:?}", frame_b.shape()),
            ));
        }
        let pa = self.prepare(frame_a)?;
        let pb = self.prepare(frame_b)?;
        self.flow_between(&pa, &pb)
    }
}

/// Coarse-to-fine dense flow from `frame_a` to `frame_b` with default
/// expansion settings.
pub fn dense_flow(frame_a: &Tensor<f32>, frame_b: &Tensor<f32>, levels: usize, iterations: usize) -> Result<FlowField> {
    let est = FlowEstimator::new(FlowParams {
        levels,
        iterations,
        ..FlowParams::default()
    })?;
    Ok(est.flow(frame_a, frame_b)?.0)
}

/// Default clamp, in pixels, applied before scaling flow to `[-1, 1]`.
pub const DEFAULT_FLOW_CLAMP: f32 = 20.0;

/// Stacks flow fields into a `2L×H×W` tensor: channel `2i` is `u` of field
/// `i`, channel `2i+1` its `v`. Values are clamped to `±clamp` and divided
/// by `clamp`.
pub fn flow_to_channels(flows: &[FlowField], clamp: f32) -> Result<Tensor<f32>> {
    let first = flows
        .first()
        .ok_or_else(|| Error::Contract("flow_to_channels needs at least one field".into()))?;
    if !(clamp > 0.0 && clamp.is_finite()) {
        return Err(Error::Config(format!("flow clamp must be positive, got {clamp}")));
    }
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(2 * flows.len() * w * h);
    for (i, f) in flows.iter().enumerate() {
        if f.width != w || f.height != h {
            return Err(Error::dim(
                "flow_to_channels",
                format!("field {i}"),
                format!("{w}x{h}"),
                format!("{}x{}", f.width, f.height),
            ));
        }
        data.extend(f.u.iter().map(|&v| v.clamp(-clamp, clamp) / clamp));
        data.extend(f.v.iter().map(|&v| v.clamp(-clamp, clamp) / clamp));
    }
    Tensor::new(vec![2 * flows.len(), h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_tensor(w: usize, h: usize, f: impl Fn(f32, f32) -> f32) -> Tensor<f32> {
        Tensor::from_fn(&[1, h, w], |i| f((i % w) as f32, (i / w) as f32))
    }

    #[test]
    fn constant_image_expands_to_c_only() {
        let t = plane_tensor(24, 20, |_, _| 7.0);
        let e = polynomial_expansion(&t, 5, 1.1).unwrap();
        for y in 5..15 {
            for x in 5..19 {
                let a = e.a(x, y);
                assert!(a[0][0].abs() < 1e-4 && a[0][1].abs() < 1e-4 && a[1][1].abs() < 1e-4);
                assert!(e.b(x, y)[0].abs() < 1e-4 && e.b(x, y)[1].abs() < 1e-4);
                assert!((e.c(x, y) - 7.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn linear_ramp_expands_to_b_only() {
        let t = plane_tensor(30, 24, |x, _| 2.0 * x);
        let e = polynomial_expansion(&t, 5, 1.1).unwrap();
        for y in 5..19 {
            for x in 5..25 {
                let (a, b) = (e.a(x, y), e.b(x, y));
                assert!((b[0] - 2.0).abs() < 1e-3 && b[1].abs() < 1e-3, "b at ({x},{y}) = {b:?}");
                assert!(a[0][0].abs() < 1e-3 && a[0][1].abs() < 1e-3 && a[1][1].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn identical_expansions_give_zero_flow() {
        let t = plane_tensor(32, 32, |x, y| ((x * 0.7).sin() + (y * 0.4).cos()) * 0.5);
        let e = polynomial_expansion(&t, 5, 1.1).unwrap();
        let d = displacement_from_expansions(&e, &e, &FlowField::zeros(32, 32), 4).unwrap();
        assert!(d.field.max_magnitude() < 1e-5);
    }

    #[test]
    fn flat_region_falls_back_to_prior() {
        let t = plane_tensor(24, 24, |_, _| 0.5);
        let e = polynomial_expansion(&t, 5, 1.1).unwrap();
        let d = displacement_from_expansions(&e, &e, &FlowField::zeros(24, 24), 3).unwrap();
        assert_eq!(d.singular_pixels, 24 * 24);
        assert!(d.field.max_magnitude() == 0.0);
    }

    #[test]
    fn channel_stacking_and_clamp() {
        let mut f = FlowField::zeros(4, 3);
        f.u.fill(25.0);
        f.v.fill(-5.0);
        let t = flow_to_channels(&[FlowField::zeros(4, 3), f], DEFAULT_FLOW_CLAMP).unwrap();
        assert_eq!(t.shape(), &[4, 3, 4]);
        assert!(t.data()[..24].iter().all(|&v| v == 0.0));
        assert!(t.data()[24..36].iter().all(|&v| v == 1.0));
        assert!(t.data()[36..].iter().all(|&v| v == -0.25));
        assert!(flow_to_channels(&[FlowField::zeros(4, 3), FlowField::zeros(3, 3)], 20.0).is_err());
        assert!(flow_to_channels(&[], 20.0).is_err());
    }

    #[test]
    fn mismatched_frames_are_dimension_errors() {
        let a = Tensor::<f32>::zeros(&[1, 20, 20]);
        let b = Tensor::<f32>::zeros(&[1, 20, 22]);
        assert!(matches!(dense_flow(&a, &b, 1, 1), Err(Error::Dimension { .. })));
    }
}
