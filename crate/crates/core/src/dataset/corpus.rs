use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{synthesize_clip, SynthConfig};
use super::{enumerate_windows, Example, ManeuverClass, MaterializeConfig, VehicleTrack, WindowRef, WindowSpec};
use crate::error::Result;

/// A synthetic corpus: equal numbers of NLC, LLC and RLC clips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub clips_per_class: usize,
    pub clip_length: usize,
    pub stride: usize,
    pub guard: usize,
    /// NLC windows kept per track, picked at random; `None` keeps all.
    pub nlc_per_track: Option<usize>,
    /// Whether tracks with a lane change also contribute NLC windows.
    pub nlc_from_event_tracks: bool,
    pub synth: SynthConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            clips_per_class: 100,
            clip_length: 100,
            stride: 10,
            guard: super::DEFAULT_GUARD,
            nlc_per_track: Some(1),
            nlc_from_event_tracks: false,
            synth: SynthConfig::default(),
        }
    }
}

pub(crate) fn clip_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CorpusConfig {
    /// Scenario of clip `i`: classes cycle NLC, LLC, RLC.
    pub fn scenario(&self, index: usize) -> ManeuverClass {
        ManeuverClass::ALL[index % 3]
    }

    pub fn num_clips(&self) -> usize {
        3 * self.clips_per_class
    }

    /// Windows selected from one track under the corpus rules.
    pub fn select(&self, track: &VehicleTrack, spec: WindowSpec, seed: u64) -> Result<Vec<WindowRef>> {
        let all = enumerate_windows(std::slice::from_ref(track), spec, self.stride, self.guard)?;
        let (pos, nlc): (Vec<_>, Vec<_>) = all.into_iter().partition(|w| w.label != ManeuverClass::Nlc);
        let nlc = if !track.events.is_empty() && !self.nlc_from_event_tracks {
            Vec::new()
        } else {
            match self.nlc_per_track {
                Some(k) if k < nlc.len() => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut idx = sample(&mut rng, nlc.len(), k).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| nlc[i]).collect()
                }
                _ => nlc,
            }
        };
        let mut out: Vec<WindowRef> = pos.into_iter().chain(nlc).collect();
        out.sort_by_key(|w| w.end_frame);
        Ok(out)
    }

    /// Generates every clip, selects windows and materializes them. Clips
    /// are produced one at a time so only one clip's frames are alive.
    /// Track ids are clip indices.
    pub fn build(
        &self,
        spec: WindowSpec,
        mat: &MaterializeConfig,
        seed: u64,
    ) -> Result<(Vec<VehicleTrack>, Vec<Example>)> {
        let mut tracks = Vec::with_capacity(self.num_clips());
        let mut examples = Vec::new();
        for i in 0..self.num_clips() {
            let cs = clip_seed(seed, i);
            let mut clip = synthesize_clip(self.scenario(i), self.clip_length, cs, &self.synth)?;
            clip.track.track_id = i as u64;
            for w in self.select(&clip.track, spec, cs)? {
                examples.push(mat.example(&clip.frames, &clip.track, w.end_frame, w.label, spec)?);
            }
            tracks.push(clip.track);
        }
        Ok((tracks, examples))
    }
}
