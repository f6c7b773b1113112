//! Turning labeled windows into network inputs: ROI crops of every frame,
//! flow between consecutive ROI frames, and the appearance subsample.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::split::Labeled;
use super::{check_coverage, ManeuverClass, VehicleTrack, WindowSpec};
use crate::error::{Error, Result};
use crate::flow::{flow_to_channels, to_grayscale, FlowEstimator, FlowParams, DEFAULT_FLOW_CLAMP};
use crate::imageio::read_image;
use crate::roi::{extract_roi, Normalization, RoiSpec};
use crate::tensor::Tensor;

/// Random access to the frames of one clip.
pub trait FrameSource {
    fn frame(&self, index: usize) -> Result<Tensor<f32>>;
}

impl FrameSource for [Tensor<f32>] {
    fn frame(&self, index: usize) -> Result<Tensor<f32>> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("frame {index} not in clip of {} frames", self.len())))
    }
}

impl FrameSource for Vec<Tensor<f32>> {
    fn frame(&self, index: usize) -> Result<Tensor<f32>> {
        self.as_slice().frame(index)
    }
}

pub(crate) fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Frames stored as `frame_00000.png`, `frame_00001.png`, … in one
/// directory.
#[derive(Clone, Debug)]
pub struct DirFrames {
    pub dir: PathBuf,
}

impl FrameSource for DirFrames {
    fn frame(&self, index: usize) -> Result<Tensor<f32>> {
        read_image(&self.dir.join(frame_file_name(index)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterializeConfig {
    pub roi: RoiSpec,
    pub flow: FlowParams,
    /// Flow fields per window (`L`).
    pub flow_pairs: usize,
    /// Appearance frames kept per window for training (`T_s`).
    pub appearance_frames: usize,
    pub normalization: Normalization,
    pub flow_clamp: f32,
}

impl Default for MaterializeConfig {
    fn default() -> Self {
        MaterializeConfig {
            roi: RoiSpec::default(),
            flow: FlowParams::default(),
            flow_pairs: 10,
            appearance_frames: 5,
            normalization: Normalization::default(),
            flow_clamp: DEFAULT_FLOW_CLAMP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowProvenance {
    pub track_id: u64,
    pub end_frame: usize,
    pub spec: WindowSpec,
    pub roi: RoiSpec,
}

/// A fully materialized window.
#[derive(Clone, Debug)]
pub struct SampleWindow {
    /// `N×3×S×S`, standardized.
    pub appearance: Tensor<f32>,
    /// `2L×S×S` from [`flow_to_channels`].
    pub flow: Tensor<f32>,
    pub label: ManeuverClass,
    pub provenance: WindowProvenance,
}

/// Compact training sample: the appearance subsample and the flow stack.
#[derive(Clone, Debug)]
pub struct Example {
    /// `T_s×3×S×S`; the last entry is the window's last frame.
    pub appearance: Tensor<f32>,
    /// `2L×S×S`.
    pub flow: Tensor<f32>,
    pub label: ManeuverClass,
    pub provenance: WindowProvenance,
}

impl Labeled for SampleWindow {
    fn track_id(&self) -> u64 {
        self.provenance.track_id
    }
    fn label(&self) -> ManeuverClass {
        self.label
    }
}

impl Labeled for Example {
    fn track_id(&self) -> u64 {
        self.provenance.track_id
    }
    fn label(&self) -> ManeuverClass {
        self.label
    }
}

/// `k` indices spread uniformly over `0..n`, first and last included
/// (`[n − 1]` when `k == 1`).
pub fn subsample_indices(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot pick {k} of {n} items")));
    }
    if k == 1 {
        return Ok(vec![n - 1]);
    }
    Ok((0..k)
        .map(|i| ((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect())
}

impl SampleWindow {
    pub fn to_example(&self, appearance_frames: usize) -> Result<Example> {
        let n = self.appearance.shape()[0];
        let per: usize = self.appearance.shape()[1..].iter().product();
        let idx = subsample_indices(n, appearance_frames)?;
        let d = self.appearance.data();
        let data = idx.iter().flat_map(|&i| d[i * per..(i + 1) * per].iter().copied()).collect();
        let mut shape = self.appearance.shape().to_vec();
        shape[0] = appearance_frames;
        Ok(Example {
            appearance: Tensor::new(shape, data)?,
            flow: self.flow.clone(),
            label: self.label,
            provenance: self.provenance,
        })
    }
}

struct Window<'a> {
    source: &'a dyn FrameSource,
    track: &'a VehicleTrack,
    start: usize,
    cfg: &'a MaterializeConfig,
    crops: BTreeMap<usize, Tensor<f32>>,
}

impl Window<'_> {
    /// ROI crop of window frame `k` (values in `[0,1]`).
    fn crop(&mut self, k: usize) -> Result<&Tensor<f32>> {
        if !self.crops.contains_key(&k) {
            let f = self.start + k;
            let contour = self.track.contour(f).ok_or(Error::Coverage {
                track_id: self.track.track_id,
                frame: f,
            })?;
            let img = self.source.frame(f)?;
            let c = extract_roi(&img, contour, self.cfg.roi)?;
            self.crops.insert(k, c.image);
        }
        Ok(&self.crops[&k])
    }

    fn flow_stack(&mut self, horizon: usize) -> Result<Tensor<f32>> {
        let est = FlowEstimator::new(self.cfg.flow)?;
        let pairs = subsample_indices(horizon - 1, self.cfg.flow_pairs)?;
        let mut prepared = BTreeMap::new();
        let mut fields = Vec::with_capacity(pairs.len());
        for &p in &pairs {
            for k in [p, p + 1] {
                if let std::collections::btree_map::Entry::Vacant(e) = prepared.entry(k) {
                    let g = to_grayscale(self.crop(k)?)?;
                    e.insert(est.prepare(&g)?);
                }
            }
            fields.push(est.flow_between(&prepared[&p], &prepared[&(p + 1)])?.0);
        }
        flow_to_channels(&fields, self.cfg.flow_clamp)
    }

    fn appearance(&mut self, frames: &[usize]) -> Result<Tensor<f32>> {
        let norm = self.cfg.normalization;
        let mut parts = Vec::with_capacity(frames.len());
        for &k in frames {
            parts.push(norm.apply(self.crop(k)?)?);
        }
        Tensor::stack(&parts.iter().collect::<Vec<_>>())
    }
}

fn open<'a>(
    source: &'a dyn FrameSource,
    track: &'a VehicleTrack,
    end_frame: usize,
    spec: WindowSpec,
    cfg: &'a MaterializeConfig,
) -> Result<Window<'a>> {
    cfg.roi.validate()?;
    check_coverage(track, end_frame, spec)?;
    Ok(Window {
        source,
        track,
        start: spec.start(end_frame).expect("coverage checked"),
        cfg,
        crops: BTreeMap::new(),
    })
}

fn provenance(track: &VehicleTrack, end_frame: usize, spec: WindowSpec, cfg: &MaterializeConfig) -> WindowProvenance {
    WindowProvenance {
        track_id: track.track_id,
        end_frame,
        spec,
        roi: cfg.roi,
    }
}

impl MaterializeConfig {
    /// All `N` appearance frames plus the flow stack.
    pub fn window(
        &self,
        source: &dyn FrameSource,
        track: &VehicleTrack,
        end_frame: usize,
        label: ManeuverClass,
        spec: WindowSpec,
    ) -> Result<SampleWindow> {
        let mut w = open(source, track, end_frame, spec, self)?;
        let flow = w.flow_stack(spec.horizon)?;
        let all: Vec<usize> = (0..spec.horizon).collect();
        Ok(SampleWindow {
            appearance: w.appearance(&all)?,
            flow,
            label,
            provenance: provenance(track, end_frame, spec, self),
        })
    }

    /// Like [`MaterializeConfig::window`] followed by
    /// [`SampleWindow::to_example`], without cropping unused frames.
    pub fn example(
        &self,
        source: &dyn FrameSource,
        track: &VehicleTrack,
        end_frame: usize,
        label: ManeuverClass,
        spec: WindowSpec,
    ) -> Result<Example> {
        let mut w = open(source, track, end_frame, spec, self)?;
        let flow = w.flow_stack(spec.horizon)?;
        let idx = subsample_indices(spec.horizon, self.appearance_frames)?;
        Ok(Example {
            appearance: w.appearance(&idx)?,
            flow,
            label,
            provenance: provenance(track, end_frame, spec, self),
        })
    }
}
