//! Annotated vehicle tracks, time-to-event window labeling, train/validation
//! splitting, class-balanced sampling, annotation files and the synthetic
//! highway clip generator.

mod annotations;
mod corpus;
mod materialize;
mod sampler;
mod split;
mod synth;

pub use annotations::{load_annotations, write_annotations};
pub use corpus::CorpusConfig;
pub use materialize::{
    subsample_indices, DirFrames, Example, FrameSource, MaterializeConfig, SampleWindow, WindowProvenance,
};
pub use sampler::BalancedSampler;
pub use split::{split_train_val, track_class, Labeled};
pub use synth::{synthesize_clip, write_clip, SynthConfig, SyntheticClip};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::Contour;

/// Encoded 0, 1, 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ManeuverClass {
    #[serde(rename = "NLC")]
    Nlc,
    #[serde(rename = "LLC")]
    Llc,
    #[serde(rename = "RLC")]
    Rlc,
}

impl ManeuverClass {
    pub const ALL: [ManeuverClass; 3] = [ManeuverClass::Nlc, ManeuverClass::Llc, ManeuverClass::Rlc];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Label(format!("class index {i} out of range 0..3")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverClass::Nlc => "NLC",
            ManeuverClass::Llc => "LLC",
            ManeuverClass::Rlc => "RLC",
        }
    }
}

impl fmt::Display for ManeuverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ManeuverClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NLC" | "0" => Ok(ManeuverClass::Nlc),
            "LLC" | "1" => Ok(ManeuverClass::Llc),
            "RLC" | "2" => Ok(ManeuverClass::Rlc),
            other => Err(Error::Label(format!("unknown maneuver class '{other}'"))),
        }
    }
}

/// Default frame rate of conformant sources, in Hz.
pub const DEFAULT_FRAME_RATE: f64 = 10.0;

/// Default guard band, in frames, around events for no-change windows.
pub const DEFAULT_GUARD: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub track_id: u64,
    pub clip_id: String,
    pub frame_rate: f64,
    /// One contour per frame; `contour.frame` strictly increasing.
    pub frames: Vec<Contour>,
    /// `(event_frame, class)` with class LLC or RLC, sorted by frame.
    pub events: Vec<(usize, ManeuverClass)>,
}

impl VehicleTrack {
    /// Builds and validates a track. Events are sorted by frame.
    pub fn new(
        track_id: u64,
        clip_id: impl Into<String>,
        frame_rate: f64,
        frames: Vec<Contour>,
        mut events: Vec<(usize, ManeuverClass)>,
    ) -> Result<Self> {
        events.sort_by_key(|e| e.0);
        let t = VehicleTrack {
            track_id,
            clip_id: clip_id.into(),
            frame_rate,
            frames,
            events,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |detail: String| Error::Validation {
            track_id: self.track_id,
            detail,
        };
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(err(format!("frame rate must be positive, got {}", self.frame_rate)));
        }
        if self.frames.is_empty() {
            return Err(err("track has no frames".into()));
        }
        for w in self.frames.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(err(format!(
                    "frame indices not strictly increasing ({} then {})",
                    w[0].frame, w[1].frame
                )));
            }
        }
        let (lo, hi) = (self.first_frame(), self.last_frame());
        for (i, &(f, c)) in self.events.iter().enumerate() {
            if c == ManeuverClass::Nlc {
                return Err(err(format!("event at frame {f} has class NLC")));
            }
            if f < lo || f > hi {
                return Err(err(format!("event frame {f} outside track range {lo}..={hi}")));
            }
            if i > 0 && self.events[i - 1].0 == f {
                return Err(err(format!("two events at frame {f}")));
            }
        }
        Ok(())
    }

    pub fn first_frame(&self) -> usize {
        self.frames[0].frame
    }

    pub fn last_frame(&self) -> usize {
        self.frames[self.frames.len() - 1].frame
    }

    pub fn contour(&self, frame: usize) -> Option<&Contour> {
        self.frames
            .binary_search_by_key(&frame, |c| c.frame)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// Class of the track as a sequence: its first event's class, else NLC.
    pub fn sequence_class(&self) -> ManeuverClass {
        self.events.first().map_or(ManeuverClass::Nlc, |e| e.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Observation horizon `N`, in frames.
    pub horizon: usize,
    /// Time to event, in frames.
    pub tte: usize,
}

impl WindowSpec {
    pub fn new(horizon: usize, tte: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Config(format!("observation horizon must be >= 2, got {horizon}")));
        }
        Ok(WindowSpec { horizon, tte })
    }

    /// First frame of a window ending at `end_frame`, if it exists.
    pub fn start(&self, end_frame: usize) -> Option<usize> {
        (end_frame + 1).checked_sub(self.horizon)
    }
}

/// Verifies that every frame of the window ending at `end_frame` is present.
pub fn check_coverage(track: &VehicleTrack, end_frame: usize, spec: WindowSpec) -> Result<()> {
    let missing = |frame| Error::Coverage {
        track_id: track.track_id,
        frame,
    };
    let start = spec.start(end_frame).ok_or_else(|| missing(0))?;
    let i = track
        .frames
        .binary_search_by_key(&start, |c| c.frame)
        .map_err(|_| missing(start))?;
    for (k, f) in (start..=end_frame).enumerate() {
        match track.frames.get(i + k) {
            Some(c) if c.frame == f => {}
            _ => return Err(missing(f)),
        }
    }
    Ok(())
}

/// Labels the window ending at `end_frame`.
///
/// `Some(LLC|RLC)` if an event of that class lies exactly at
/// `end_frame + tte`; `Some(NLC)` if no event lies in
/// `[end_frame − N + 1 − guard, end_frame + tte + guard]`; `None` for
/// ambiguous windows, which are skipped.
pub fn label_window(
    track: &VehicleTrack,
    end_frame: usize,
    spec: WindowSpec,
    guard: usize,
) -> Result<Option<ManeuverClass>> {
    check_coverage(track, end_frame, spec)?;
    let target = end_frame + spec.tte;
    if let Some(&(_, c)) = track.events.iter().find(|e| e.0 == target) {
        return Ok(Some(c));
    }
    let lo = (end_frame + 1).saturating_sub(spec.horizon + guard);
    let hi = target + guard;
    if track.events.iter().any(|e| (lo..=hi).contains(&e.0)) {
        Ok(None)
    } else {
        Ok(Some(ManeuverClass::Nlc))
    }
}

/// A labeled window before any pixels are touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowRef {
    /// Index into the track list passed to [`enumerate_windows`].
    pub track_index: usize,
    pub track_id: u64,
    pub end_frame: usize,
    pub label: ManeuverClass,
}

impl Labeled for WindowRef {
    fn track_id(&self) -> u64 {
        self.track_id
    }

    fn label(&self) -> ManeuverClass {
        self.label
    }
}

/// Every labelable window of every track.
///
/// Per track: one positive window per event whose window is covered
/// (`end_frame = event − tte`), plus NLC windows on the grid
/// `first + N − 1, first + N − 1 + stride, …`. Output is ordered by track,
/// then end frame.
pub fn enumerate_windows(
    tracks: &[VehicleTrack],
    spec: WindowSpec,
    stride: usize,
    guard: usize,
) -> Result<Vec<WindowRef>> {
    if stride == 0 {
        return Err(Error::Config("window stride must be >= 1".into()));
    }
    let mut out = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let mut windows = Vec::new();
        for &(ev, class) in &t.events {
            let Some(end) = ev.checked_sub(spec.tte) else { continue };
            if check_coverage(t, end, spec).is_ok() {
                windows.push(WindowRef {
                    track_index: ti,
                    track_id: t.track_id,
                    end_frame: end,
                    label: class,
                });
            }
        }
        let mut end = t.first_frame() + spec.horizon - 1;
        while end <= t.last_frame() {
            if let Ok(Some(ManeuverClass::Nlc)) = label_window(t, end, spec, guard) {
                windows.push(WindowRef {
                    track_index: ti,
                    track_id: t.track_id,
                    end_frame: end,
                    label: ManeuverClass::Nlc,
                });
            }
            end += stride;
        }
        windows.sort_by_key(|w| w.end_frame);
        out.extend(windows);
    }
    Ok(out)
}

/// Per-class sequence counts and mean track lengths, plus window counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sequences: [usize; 3],
    pub avg_frames: [f64; 3],
    pub windows: [usize; 3],
}

pub fn dataset_stats(tracks: &[VehicleTrack], windows: &[WindowRef]) -> DatasetStats {
    let mut s = DatasetStats::default();
    let mut total = [0usize; 3];
    for t in tracks {
        let c = t.sequence_class().index();
        s.sequences[c] += 1;
        total[c] += t.frames.len();
    }
    for c in 0..3 {
        if s.sequences[c] > 0 {
            s.avg_frames[c] = total[c] as f64 / s.sequences[c] as f64;
        }
    }
    for w in windows {
        s.windows[w.label.index()] += 1;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(len: usize, events: Vec<(usize, ManeuverClass)>) -> VehicleTrack {
        let frames = (0..len)
            .map(|f| Contour::rectangle(f, 10.0, 10.0, 20.0, 30.0).unwrap())
            .collect();
        VehicleTrack::new(1, "clip", DEFAULT_FRAME_RATE, frames, events).unwrap()
    }

    #[test]
    fn labels_at_and_before_event() {
        let t = track(200, vec![(100, ManeuverClass::Llc)]);
        let s = WindowSpec::new(20, 10).unwrap();
        assert_eq!(label_window(&t, 90, s, 10).unwrap(), Some(ManeuverClass::Llc));
        assert_eq!(s.start(90), Some(71));
        let s0 = WindowSpec::new(20, 0).unwrap();
        assert_eq!(label_window(&t, 100, s0, 10).unwrap(), Some(ManeuverClass::Llc));
        assert_eq!(label_window(&t, 95, s0, 10).unwrap(), None);
        let quiet = track(60, vec![]);
        assert_eq!(label_window(&quiet, 40, s, 10).unwrap(), Some(ManeuverClass::Nlc));
    }

    #[test]
    fn missing_frames_are_coverage_errors() {
        let t = track(30, vec![]);
        let s = WindowSpec::new(20, 0).unwrap();
        assert!(matches!(label_window(&t, 10, s, 10), Err(Error::Coverage { .. })));
        assert!(matches!(label_window(&t, 35, s, 10), Err(Error::Coverage { .. })));
    }

    #[test]
    fn short_track_yields_nothing() {
        let t = track(19, vec![]);
        let w = enumerate_windows(&[t], WindowSpec::new(20, 0).unwrap(), 1, 10).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn one_positive_per_event() {
        let t = track(200, vec![(100, ManeuverClass::Llc), (160, ManeuverClass::Rlc)]);
        let w = enumerate_windows(&[t], WindowSpec::new(20, 0).unwrap(), 20, 10).unwrap();
        let pos: Vec<_> = w.iter().filter(|w| w.label != ManeuverClass::Nlc).collect();
        assert_eq!(pos.len(), 2);
        assert_eq!((pos[0].end_frame, pos[0].label), (100, ManeuverClass::Llc));
        assert_eq!((pos[1].end_frame, pos[1].label), (160, ManeuverClass::Rlc));
    }

    #[test]
    fn invalid_tracks_are_rejected() {
        let frames: Vec<_> = (0..10)
            .map(|f| Contour::rectangle(f, 0.0, 0.0, 2.0, 2.0).unwrap())
            .collect();
        let e = VehicleTrack::new(7, "c", 10.0, frames.clone(), vec![(12, ManeuverClass::Llc)]);
        assert!(matches!(e, Err(Error::Validation { track_id: 7, .. })));
        let mut rev = frames;
        rev.swap(2, 3);
        assert!(VehicleTrack::new(7, "c", 10.0, rev, vec![]).is_err());
    }

    #[test]
    fn class_codes() {
        for (i, c) in ManeuverClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.as_str().parse::<ManeuverClass>().unwrap(), *c);
        }
        assert!(ManeuverClass::from_index(3).is_err());
    }
}
