use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    forward, init_layer, temporal_conv_inject, BatchNormHyper, Conv1dHyper, Conv2dHyper, Hyper, LayerParams,
    LinearHyper, Mode, ParamStore, PoolSpec, Real, Tape, Var,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StConfig {
    pub stem_channels: usize,
    /// Output width of each residual stage; stages after the first halve
    /// the resolution.
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    /// Zero-based stage indices followed by a temporal convolution.
    pub temporal_after: Vec<usize>,
    /// Appearance frames per window (`T_s`).
    pub appearance_frames: usize,
    /// Flow fields per window (`L`); must be a multiple of `T_s`.
    pub flow_pairs: usize,
    pub input_size: usize,
}

impl Default for StConfig {
    fn default() -> Self {
        StConfig {
            stem_channels: 8,
            stage_channels: vec![8, 16, 32, 64],
            blocks_per_stage: 2,
            temporal_after: vec![1, 3],
            appearance_frames: 5,
            flow_pairs: 10,
            input_size: 112,
        }
    }
}

impl StConfig {
    /// Flow channels fed to the motion stream at each time step.
    pub fn flow_channels_per_step(&self) -> usize {
        2 * self.flow_pairs / self.appearance_frames
    }

    pub fn validate(&self) -> Result<()> {
        if self.appearance_frames == 0 || self.flow_pairs == 0 {
            return Err(Error::Config("T_s and L must be positive".into()));
        }
        if !self.flow_pairs.is_multiple_of(self.appearance_frames) {
            return Err(Error::Config(format!(
                "L = {} flow fields cannot be grouped evenly over T_s = {} frames",
                self.flow_pairs, self.appearance_frames
            )));
        }
        if self.stage_channels.is_empty() || self.blocks_per_stage == 0 || self.stem_channels == 0 {
            return Err(Error::Config("residual streams need at least one stage and block".into()));
        }
        if self.stage_channels.contains(&0) {
            return Err(Error::Config("stage widths must be positive".into()));
        }
        if let Some(&s) = self.temporal_after.iter().find(|&&s| s >= self.stage_channels.len()) {
            return Err(Error::Config(format!("temporal layer after nonexistent stage {s}")));
        }
        let min = 4 << self.stage_channels.len();
        if self.input_size < min {
            return Err(Error::Config(format!("input size {} below minimum {min}", self.input_size)));
        }
        Ok(())
    }
}

fn conv<T: Real, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
) -> LayerParams {
    let h = Conv2dHyper {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding: kernel / 2,
    };
    init_layer(store, name, Hyper::Conv2d(h), rng)
}

fn bn<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, rng: &mut R, name: &str, ch: usize) -> LayerParams {
    init_layer(store, name, Hyper::BatchNorm(BatchNormHyper::new(ch)), rng)
}

/// Residual unit `f(x) + F(z)` with `f = ReLU`,
/// `F(z) = BN(conv(ReLU(BN(conv(z)))))`, and `z = x` or, when gated,
/// `z = x ⊙ f(gate)`. A shape change routes the shortcut through a strided
/// 1×1 convolution and batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualUnit {
    pub conv1: LayerParams,
    pub bn1: LayerParams,
    pub conv2: LayerParams,
    pub bn2: LayerParams,
    pub projection: Option<(LayerParams, LayerParams)>,
}

impl ResidualUnit {
    pub fn build<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    ) -> Self {
        let projection = (in_ch != out_ch || stride != 1).then(|| {
            (
                conv(store, rng, &format!("{name}.proj"), in_ch, out_ch, 1, stride),
                bn(store, rng, &format!("{name}.proj_bn"), out_ch),
            )
        });
        ResidualUnit {
            conv1: conv(store, rng, &format!("{name}.conv1"), in_ch, out_ch, 3, stride),
            bn1: bn(store, rng, &format!("{name}.bn1"), out_ch),
            conv2: conv(store, rng, &format!("{name}.conv2"), out_ch, out_ch, 3, 1),
            bn2: bn(store, rng, &format!("{name}.bn2"), out_ch),
            projection,
        }
    }

    /// `F(z)`.
    pub fn residual<T: Real>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, z: Var, mode: Mode) -> Result<Var> {
        let h = forward(tape, store, &self.conv1, z, mode)?;
        let h = forward(tape, store, &self.bn1, h, mode)?;
        let h = tape.relu(h)?;
        let h = forward(tape, store, &self.conv2, h, mode)?;
        forward(tape, store, &self.bn2, h, mode)
    }

    /// `f(x)`, projected when the unit changes shape.
    pub fn shortcut<T: Real>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let fx = tape.relu(x)?;
        match &self.projection {
            None => Ok(fx),
            Some((c, b)) => {
                let h = forward(tape, store, c, fx, mode)?;
                forward(tape, store, b, h, mode)
            }
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Var,
        gate: Option<Var>,
        mode: Mode,
    ) -> Result<Var> {
        let z = match gate {
            None => x,
            Some(g) => {
                let fg = tape.relu(g)?;
                tape.mul(x, fg)?
            }
        };
        let s = self.shortcut(tape, store, x, mode)?;
        let r = self.residual(tape, store, z, mode)?;
        tape.add(s, r)
    }
}

/// One paired block: the appearance unit gated by the motion input, the
/// motion unit ungated.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedBlock {
    pub appearance: ResidualUnit,
    pub motion: ResidualUnit,
}

impl GatedBlock {
    pub fn build<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    ) -> Self {
        GatedBlock {
            appearance: ResidualUnit::build(store, rng, &format!("appearance.{name}"), in_ch, out_ch, stride),
            motion: ResidualUnit::build(store, rng, &format!("motion.{name}"), in_ch, out_ch, stride),
        }
    }

    /// `(f(x_a) + F(x_a ⊙ f(x_m)), f(x_m) + F(x_m))`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x_a: Var,
        x_m: Var,
        mode: Mode,
    ) -> Result<(Var, Var)> {
        let (sa, sm) = (tape.shape(x_a), tape.shape(x_m));
        if sa != sm {
            let axis = sa.iter().zip(sm).position(|(a, b)| a != b).unwrap_or(0);
            let (e, g) = (
                sa.get(axis).copied().unwrap_or(0),
                sm.get(axis).copied().unwrap_or(0),
            );
            return Err(Error::dim("gated block motion input", axis.to_string(), e, g));
        }
        let a = self.appearance.forward(tape, store, x_a, Some(x_m), mode)?;
        let m = self.motion.forward(tape, store, x_m, None, mode)?;
        Ok((a, m))
    }
}

/// Temporal convolution (time folded into batch) followed by batch norm
/// and ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalLayer {
    pub conv: LayerParams,
    pub bn: LayerParams,
}

impl TemporalLayer {
    fn build<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, rng: &mut R, name: &str, ch: usize) -> Result<Self> {
        let conv = init_layer(store, name, Hyper::Conv1dTemporal(Conv1dHyper::same(ch, ch)), rng);
        conv.set_temporal_identity(store)?;
        Ok(TemporalLayer {
            conv,
            bn: bn(store, rng, &format!("{name}_bn"), ch),
        })
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Var,
        time: usize,
        mode: Mode,
    ) -> Result<Var> {
        let h = temporal_conv_inject(tape, store, &self.conv, x, time)?;
        let h = forward(tape, store, &self.bn, h, mode)?;
        tape.relu(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stem {
    pub conv: LayerParams,
    pub bn: LayerParams,
}

impl Stem {
    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let h = forward(tape, store, &self.conv, x, mode)?;
        let h = forward(tape, store, &self.bn, h, mode)?;
        let h = tape.relu(h)?;
        tape.max_pool2d(
            h,
            PoolSpec {
                kernel: 3,
                stride: 2,
                padding: 1,
            },
        )
    }
}

/// Residual appearance and motion streams coupled by multiplicative
/// gating, with temporal convolutions injected after selected stages.
#[derive(Clone, Debug, PartialEq)]
pub struct StMultiplier {
    pub config: StConfig,
    pub appearance_stem: Stem,
    pub motion_stem: Stem,
    /// `stages[s][b]`.
    pub stages: Vec<Vec<GatedBlock>>,
    /// `(stage, appearance layer, motion layer)`.
    pub temporal: Vec<(usize, TemporalLayer, TemporalLayer)>,
    pub head: LayerParams,
}

impl StMultiplier {
    pub fn build<T: Real, R: Rng + ?Sized>(cfg: &StConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let stem = |store: &mut ParamStore<T>, rng: &mut R, name: &str, in_ch: usize| Stem {
            conv: conv(store, rng, &format!("{name}.stem"), in_ch, cfg.stem_channels, 7, 2),
            bn: bn(store, rng, &format!("{name}.stem_bn"), cfg.stem_channels),
        };
        let appearance_stem = stem(store, rng, "appearance", 3);
        let motion_stem = stem(store, rng, "motion", cfg.flow_channels_per_step());
        let mut stages = Vec::new();
        let mut temporal = Vec::new();
        let mut c = cfg.stem_channels;
        for (s, &out) in cfg.stage_channels.iter().enumerate() {
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks_per_stage {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(GatedBlock::build(store, rng, &format!("stage{}.block{}", s + 1, b + 1), c, out, stride));
                c = out;
            }
            stages.push(blocks);
            if cfg.temporal_after.contains(&s) {
                temporal.push((
                    s,
                    TemporalLayer::build(store, rng, &format!("appearance.temporal{}", s + 1), c)?,
                    TemporalLayer::build(store, rng, &format!("motion.temporal{}", s + 1), c)?,
                ));
            }
        }
        let head = init_layer(
            store,
            "head",
            Hyper::Linear(LinearHyper {
                inputs: 2 * c,
                outputs: 3,
            }),
            rng,
        );
        Ok(StMultiplier {
            config: cfg.clone(),
            appearance_stem,
            motion_stem,
            stages,
            temporal,
            head,
        })
    }

    /// Logits `B×3` from `(B·T_s)×3×S×S` frames and `(B·T_s)×(2L/T_s)×S×S`
    /// flow groups.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        appearance: Var,
        flow: Var,
        mode: Mode,
    ) -> Result<Var> {
        let time = self.config.appearance_frames;
        let mut a = self.appearance_stem.forward(tape, store, appearance, mode)?;
        let mut m = self.motion_stem.forward(tape, store, flow, mode)?;
        for (s, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                (a, m) = block.forward(tape, store, a, m, mode)?;
            }
            if let Some((_, ta, tm)) = self.temporal.iter().find(|t| t.0 == s) {
                a = ta.forward(tape, store, a, time, mode)?;
                m = tm.forward(tape, store, m, time, mode)?;
            }
        }
        let a = tape.relu(a)?;
        let m = tape.relu(m)?;
        let pa = tape.global_avg_pool(a, time)?;
        let pm = tape.global_avg_pool(m, time)?;
        let feats = tape.concat_features(&[pa, pm])?;
        forward(tape, store, &self.head, feats, mode)
    }
}
