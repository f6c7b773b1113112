use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    conv_out_extent, forward, init_layer, Conv2dHyper, Hyper, LayerParams, LinearHyper, Mode, ParamStore, PoolSpec,
    Real, Tape, Var,
};

/// Five convolutions and three fully connected layers per stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisjointConfig {
    pub conv_channels: [usize; 5],
    /// Widths of the two hidden fully connected layers; the third has 3
    /// outputs.
    pub fc: [usize; 2],
    pub input_size: usize,
    /// Flow fields per window; the motion stream takes `2·L` channels.
    pub flow_pairs: usize,
}

impl Default for DisjointConfig {
    fn default() -> Self {
        DisjointConfig {
            conv_channels: [16, 32, 64, 64, 64],
            fc: [256, 128],
            input_size: 112,
            flow_pairs: 10,
        }
    }
}

impl DisjointConfig {
    /// Full-width CNN-M layout.
    pub fn cnn_m() -> Self {
        DisjointConfig {
            conv_channels: [96, 256, 512, 512, 512],
            fc: [4096, 2048],
            ..Self::default()
        }
    }

    /// `(kernel, stride, padding, pool after)` of the five convolutions.
    pub(crate) const CONVS: [(usize, usize, usize, bool); 5] = [
        (7, 2, 0, true),
        (5, 2, 1, true),
        (3, 1, 1, false),
        (3, 1, 1, false),
        (3, 1, 1, true),
    ];

    /// Spatial extent entering the first fully connected layer.
    pub fn feature_extent(&self) -> Result<usize> {
        let pool = PoolSpec::default();
        let mut s = self.input_size;
        for (i, &(k, st, p, pooled)) in Self::CONVS.iter().enumerate() {
            s = conv_out_extent(s, k, st, p)
                .ok_or_else(|| Error::Config(format!("input {} too small for conv{}", self.input_size, i + 1)))?;
            if pooled {
                s = conv_out_extent(s, pool.kernel, pool.stride, pool.padding)
                    .ok_or_else(|| Error::Config(format!("input {} too small for pool after conv{}", self.input_size, i + 1)))?;
            }
        }
        Ok(s)
    }
}

/// One stream: conv1..conv5 then fc6..fc8.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub convs: Vec<LayerParams>,
    pub fcs: Vec<LayerParams>,
}

impl Stream {
    fn build<T: Real, R: Rng + ?Sized>(
        prefix: &str,
        in_ch: usize,
        cfg: &DisjointConfig,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Stream> {
        let ext = cfg.feature_extent()?;
        let mut convs = Vec::new();
        let mut c = in_ch;
        for (i, (&(kernel, stride, padding, _), &out)) in DisjointConfig::CONVS.iter().zip(&cfg.conv_channels).enumerate() {
            let h = Conv2dHyper {
                in_ch: c,
                out_ch: out,
                kernel,
                stride,
                padding,
            };
            convs.push(init_layer(store, &format!("{prefix}.conv{}", i + 1), Hyper::Conv2d(h), rng));
            c = out;
        }
        let dims = [c * ext * ext, cfg.fc[0], cfg.fc[1], 3];
        let fcs = (0..3)
            .map(|i| {
                let h = LinearHyper {
                    inputs: dims[i],
                    outputs: dims[i + 1],
                };
                init_layer(store, &format!("{prefix}.fc{}", i + 6), Hyper::Linear(h), rng)
            })
            .collect();
        Ok(Stream { convs, fcs })
    }

    /// Logits `B×3` from a `B×C×S×S` input.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let mut h = x;
        for (layer, &(_, _, _, pooled)) in self.convs.iter().zip(&DisjointConfig::CONVS) {
            h = forward(tape, store, layer, h, mode)?;
            h = tape.relu(h)?;
            if pooled {
                h = tape.max_pool2d(h, PoolSpec::default())?;
            }
        }
        let b = tape.shape(h)[0];
        let flat: usize = tape.shape(h)[1..].iter().product();
        h = tape.reshape(h, &[b, flat])?;
        for (i, layer) in self.fcs.iter().enumerate() {
            h = forward(tape, store, layer, h, mode)?;
            if i < 2 {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Appearance and motion streams trained side by side and fused late.
#[derive(Clone, Debug, PartialEq)]
pub struct DisjointTwoStream {
    pub config: DisjointConfig,
    pub spatial: Stream,
    pub motion: Stream,
}

impl DisjointTwoStream {
    pub fn build<T: Real, R: Rng + ?Sized>(cfg: &DisjointConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        if cfg.flow_pairs == 0 || cfg.conv_channels.contains(&0) || cfg.fc.contains(&0) {
            return Err(Error::Config("disjoint model widths and flow pairs must be positive".into()));
        }
        Ok(DisjointTwoStream {
            config: cfg.clone(),
            spatial: Stream::build("spatial", 3, cfg, store, rng)?,
            motion: Stream::build("motion", 2 * cfg.flow_pairs, cfg, store, rng)?,
        })
    }

    /// `(spatial logits, motion logits)` for `B×3×S×S` frames and
    /// `B×2L×S×S` flow stacks.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        appearance: Var,
        flow: Var,
        mode: Mode,
    ) -> Result<(Var, Var)> {
        let s = self.spatial.forward(tape, store, appearance, mode)?;
        let m = self.motion.forward(tape, store, flow, mode)?;
        Ok((s, m))
    }
}
