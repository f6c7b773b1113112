//! The two lane-change architectures: a disjoint two-stream network with
//! late softmax fusion, and a spatiotemporal multiplier network whose
//! motion stream gates the appearance stream's residual units.

mod disjoint;
mod st;

pub use disjoint::{DisjointConfig, DisjointTwoStream, Stream};
pub use st::{GatedBlock, ResidualUnit, StConfig, StMultiplier, Stem, TemporalLayer};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ManeuverClass;
use crate::error::{Error, Result};
use crate::tensor::{
    load_checkpoint, save_checkpoint, softmax_rows, Mode, ParamStore, Real, Tape, Tensor, Var,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Disjoint(DisjointConfig),
    StMultiplier(StConfig),
}

impl ModelConfig {
    pub fn method_name(&self) -> &'static str {
        match self {
            ModelConfig::Disjoint(_) => "disjoint",
            ModelConfig::StMultiplier(_) => "st-multiplier",
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            ModelConfig::Disjoint(c) => c.input_size,
            ModelConfig::StMultiplier(c) => c.input_size,
        }
    }

    pub fn flow_pairs(&self) -> usize {
        match self {
            ModelConfig::Disjoint(c) => c.flow_pairs,
            ModelConfig::StMultiplier(c) => c.flow_pairs,
        }
    }

    /// Appearance frames consumed per window.
    pub fn appearance_frames(&self) -> usize {
        match self {
            ModelConfig::Disjoint(_) => 1,
            ModelConfig::StMultiplier(c) => c.appearance_frames,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Architecture {
    Disjoint(DisjointTwoStream),
    StMultiplier(StMultiplier),
}

/// Forward outputs before any softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Logits {
    /// Spatial and motion stream logits.
    TwoStream(Var, Var),
    Single(Var),
}

/// Mean of two row-stochastic `B×3` matrices.
pub fn fuse_softmax(a: &[f32], b: &[f32]) -> Vec<f32> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Argmax with ties resolved toward the lowest class index.
pub fn predict(probabilities: &[f32]) -> ManeuverClass {
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate().take(3) {
        if p > probabilities[best] {
            best = i;
        }
    }
    ManeuverClass::ALL[best]
}

/// Row-wise [`predict`] over a `B×3` matrix.
pub fn predict_rows(probabilities: &Tensor<f32>) -> Vec<ManeuverClass> {
    probabilities.data().chunks(3).map(predict).collect()
}

/// A model's configuration, structure and parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub config: ModelConfig,
    pub arch: Architecture,
    pub store: ParamStore<T>,
}

impl<T: Real> Model<T> {
    /// Deterministic construction from a seed.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = match config {
            ModelConfig::Disjoint(c) => Architecture::Disjoint(DisjointTwoStream::build(c, &mut store, &mut rng)?),
            ModelConfig::StMultiplier(c) => Architecture::StMultiplier(StMultiplier::build(c, &mut store, &mut rng)?),
        };
        Ok(Model {
            config: config.clone(),
            arch,
            store,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_trainable()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            arch: self.arch.clone(),
            store: self.store.cast(),
        }
    }

    /// Reshapes window tensors into the architecture's input layout.
    ///
    /// `appearance` is `B×T_s×3×S×S` (for the disjoint model only the last
    /// frame is used) and `flow` is `B×2L×S×S`.
    pub fn prepare_inputs(&self, appearance: &Tensor<T>, flow: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let s = self.config.input_size();
        let l = self.config.flow_pairs();
        let ash = appearance.shape();
        let fsh = flow.shape();
        if ash.len() != 5 {
            return Err(Error::dim("appearance input", "rank", 5, ash.len()));
        }
        if fsh.len() != 4 {
            return Err(Error::dim("flow input", "rank", 4, fsh.len()));
        }
        let b = ash[0];
        for (axis, want, got) in [(2, 3, ash[2]), (3, s, ash[3]), (4, s, ash[4])] {
            if want != got {
                return Err(Error::dim("appearance input", axis.to_string(), want, got));
            }
        }
        for (axis, want, got) in [(0, b, fsh[0]), (1, 2 * l, fsh[1]), (2, s, fsh[2]), (3, s, fsh[3])] {
            if want != got {
                return Err(Error::dim("flow input", axis.to_string(), want, got));
            }
        }
        match &self.config {
            ModelConfig::Disjoint(_) => {
                let t = ash[1];
                let per = 3 * s * s;
                let d = appearance.data();
                let last = (0..b)
                    .flat_map(|i| d[(i * t + t - 1) * per..(i * t + t) * per].iter().copied())
                    .collect();
                Ok((Tensor::new(vec![b, 3, s, s], last)?, flow.clone()))
            }
            ModelConfig::StMultiplier(c) => {
                if ash[1] != c.appearance_frames {
                    return Err(Error::dim("appearance input", "1 (time)", c.appearance_frames, ash[1]));
                }
                let t = c.appearance_frames;
                let a = appearance.clone().reshape(&[b * t, 3, s, s])?;
                let f = flow.clone().reshape(&[b * t, c.flow_channels_per_step(), s, s])?;
                Ok((a, f))
            }
        }
    }

    /// Forward pass on prepared inputs.
    pub fn forward(&mut self, tape: &mut Tape<T>, appearance: Var, flow: Var, mode: Mode) -> Result<Logits> {
        match &self.arch {
            Architecture::Disjoint(m) => {
                let (s, f) = m.forward(tape, &mut self.store, appearance, flow, mode)?;
                Ok(Logits::TwoStream(s, f))
            }
            Architecture::StMultiplier(m) => Ok(Logits::Single(m.forward(tape, &mut self.store, appearance, flow, mode)?)),
        }
    }

    /// Training loss and fused class probabilities. The disjoint model sums
    /// the two streams' cross-entropies, so each stream is trained on its
    /// own prediction.
    pub fn loss(&self, tape: &mut Tape<T>, logits: Logits, targets: &[usize]) -> Result<(Var, Tensor<T>)> {
        match logits {
            Logits::Single(l) => tape.softmax_cross_entropy(l, targets),
            Logits::TwoStream(s, m) => {
                let (ls, ps) = tape.softmax_cross_entropy(s, targets)?;
                let (lm, pm) = tape.softmax_cross_entropy(m, targets)?;
                let loss = tape.add(ls, lm)?;
                let fused = ps.data().iter().zip(pm.data()).map(|(&a, &b)| (a + b) * T::of(0.5)).collect();
                Ok((loss, Tensor::new(ps.shape().to_vec(), fused)?))
            }
        }
    }

    /// Class probabilities `B×3` in evaluation mode.
    pub fn predict_proba(&mut self, appearance: &Tensor<T>, flow: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, f) = self.prepare_inputs(appearance, flow)?;
        let mut tape = Tape::no_grad();
        let av = tape.input(&a)?;
        let fv = tape.input(&f)?;
        let logits = self.forward(&mut tape, av, fv, Mode::Eval)?;
        let probs = |v: Var, tape: &Tape<T>| softmax_rows(tape.value(v), 3);
        let p = match logits {
            Logits::Single(l) => probs(l, &tape),
            Logits::TwoStream(s, m) => {
                let (ps, pm) = (probs(s, &tape), probs(m, &tape));
                ps.iter().zip(&pm).map(|(&a, &b)| (a + b) * T::of(0.5)).collect()
            }
        };
        Tensor::new(vec![p.len() / 3, 3], p)
    }
}

impl Model<f32> {
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({ "model": self.config, "extra": extra });
        save_checkpoint(path, &self.store, &meta)
    }

    /// Rebuilds the architecture from the stored configuration and loads
    /// the parameter values.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let ck = load_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(
            ck.meta
                .get("model")
                .cloned()
                .ok_or_else(|| Error::Format("checkpoint has no model configuration".into()))?,
        )?;
        let mut model = Model::new(&config, 0)?;
        model.store.copy_values_from(&ck.store)?;
        let extra = ck.meta.get("extra").cloned().unwrap_or(serde_json::Value::Null);
        Ok((model, extra))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_and_prediction() {
        let f = fuse_softmax(&[0.2, 0.5, 0.3], &[0.4, 0.1, 0.5]);
        assert!(f.iter().zip([0.3, 0.3, 0.4]).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(predict(&f), ManeuverClass::Rlc);
        assert_eq!(predict(&[0.4, 0.4, 0.2]), ManeuverClass::Nlc);
        assert_eq!(predict(&[1.0 / 3.0; 3]), ManeuverClass::Nlc);
    }

    #[test]
    fn disjoint_feature_extent_at_112() {
        assert_eq!(DisjointConfig::default().feature_extent().unwrap(), 2);
    }

    #[test]
    fn uneven_flow_grouping_rejected() {
        let c = StConfig {
            flow_pairs: 7,
            ..StConfig::default()
        };
        assert!(matches!(Model::<f32>::new(&ModelConfig::StMultiplier(c), 0), Err(Error::Config(_))));
    }
}
