use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Mode, Tape, TemporalLayout, Var};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv2d,
    Conv1dTemporal,
    Linear,
    Batchnorm,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv1dTemporal => "conv1d-temporal",
            LayerKind::Linear => "linear",
            LayerKind::Batchnorm => "batchnorm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dHyper {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dHyper {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: usize,
}

impl Conv1dHyper {
    /// Kernel 3, stride 1, same padding.
    pub fn same(in_ch: usize, out_ch: usize) -> Self {
        Conv1dHyper {
            in_ch,
            out_ch,
            kernel: 3,
            padding: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearHyper {
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormHyper {
    pub channels: usize,
    /// Weight of the current batch in the running-statistics update.
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormHyper {
    pub fn new(channels: usize) -> Self {
        BatchNormHyper {
            channels,
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hyper {
    Conv2d(Conv2dHyper),
    Conv1dTemporal(Conv1dHyper),
    Linear(LinearHyper),
    BatchNorm(BatchNormHyper),
}

/// A layer's hyper-parameters plus handles to its tensors in a store. For
/// batch norm `weight`/`bias` are the scale/shift and `running` holds the
/// running mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub hyper: Hyper,
    pub weight: ParamId,
    pub bias: ParamId,
    pub running: Option<(ParamId, ParamId)>,
}

impl LayerParams {
    pub fn kind(&self) -> LayerKind {
        match self.hyper {
            Hyper::Conv2d(_) => LayerKind::Conv2d,
            Hyper::Conv1dTemporal(_) => LayerKind::Conv1dTemporal,
            Hyper::Linear(_) => LayerKind::Linear,
            Hyper::BatchNorm(_) => LayerKind::Batchnorm,
        }
    }

    pub fn num_trainable(&self) -> usize {
        match self.hyper {
            Hyper::Conv2d(h) => h.out_ch * h.in_ch * h.kernel * h.kernel + h.out_ch,
            Hyper::Conv1dTemporal(h) => h.out_ch * h.in_ch * h.kernel + h.out_ch,
            Hyper::Linear(h) => h.outputs * h.inputs + h.outputs,
            Hyper::BatchNorm(h) => 2 * h.channels,
        }
    }

    /// Overwrites a temporal convolution with the identity filter
    /// (centre tap = identity matrix, zero bias).
    pub fn set_temporal_identity<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let Hyper::Conv1dTemporal(h) = self.hyper else {
            return Err(Error::Config(format!("{} is not a temporal convolution", self.name)));
        };
        if h.in_ch != h.out_ch {
            return Err(Error::Config(format!("{}: identity needs in_ch == out_ch", self.name)));
        }
        let w = store.get_mut(self.weight).data_mut();
        w.fill(T::zero());
        for c in 0..h.out_ch {
            w[(c * h.in_ch + c) * h.kernel + h.kernel / 2] = T::one();
        }
        store.get_mut(self.bias).data_mut().fill(T::zero());
        Ok(())
    }
}

/// Allocates a layer's tensors in `store`. Convolution and linear weights
/// use fan-in (Kaiming) normal initialization with zero bias; batch norm
/// starts at scale 1, shift 0, running mean 0 and running variance 1.
pub fn init_layer<T: Real, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    hyper: Hyper,
    rng: &mut R,
) -> LayerParams {
    let kaiming = |store: &mut ParamStore<T>, rng: &mut R, shape: &[usize], fan_in: usize, kind: &str| {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let t = Tensor::from_fn(shape, |_| T::of(normal.sample(rng))).with_requires_grad(true);
        store.add(format!("{name}.weight"), format!("{kind}.weight"), t)
    };
    let zeros = |store: &mut ParamStore<T>, n: usize, kind: &str| {
        store.add(
            format!("{name}.bias"),
            format!("{kind}.bias"),
            Tensor::zeros(&[n]).with_requires_grad(true),
        )
    };
    match hyper {
        Hyper::Conv2d(h) => {
            let weight = kaiming(store, rng, &[h.out_ch, h.in_ch, h.kernel, h.kernel], h.in_ch * h.kernel * h.kernel, "conv2d");
            let bias = zeros(store, h.out_ch, "conv2d");
            LayerParams {
                name: name.into(),
                hyper,
                weight,
                bias,
                running: None,
            }
        }
        Hyper::Conv1dTemporal(h) => {
            let weight = kaiming(store, rng, &[h.out_ch, h.in_ch, h.kernel], h.in_ch * h.kernel, "conv1d-temporal");
            let bias = zeros(store, h.out_ch, "conv1d-temporal");
            LayerParams {
                name: name.into(),
                hyper,
                weight,
                bias,
                running: None,
            }
        }
        Hyper::Linear(h) => {
            let weight = kaiming(store, rng, &[h.outputs, h.inputs], h.inputs, "linear");
            let bias = zeros(store, h.outputs, "linear");
            LayerParams {
                name: name.into(),
                hyper,
                weight,
                bias,
                running: None,
            }
        }
        Hyper::BatchNorm(h) => {
            let c = h.channels;
            let weight = store.add(
                format!("{name}.weight"),
                "batchnorm.weight",
                Tensor::full(&[c], T::one()).with_requires_grad(true),
            );
            let bias = store.add(
                format!("{name}.bias"),
                "batchnorm.bias",
                Tensor::zeros(&[c]).with_requires_grad(true),
            );
            let mean = store.add(format!("{name}.running_mean"), "batchnorm.running_mean", Tensor::zeros(&[c]));
            let var = store.add(format!("{name}.running_var"), "batchnorm.running_var", Tensor::full(&[c], T::one()));
            LayerParams {
                name: name.into(),
                hyper,
                weight,
                bias,
                running: Some((mean, var)),
            }
        }
    }
}

fn check_axis(ctx: &str, axis: &str, expected: usize, got: Option<&usize>) -> Result<()> {
    match got {
        Some(&g) if g == expected => Ok(()),
        Some(&g) => Err(Error::dim(ctx, axis, expected, g)),
        None => Err(Error::dim(ctx, axis, expected, "missing axis")),
    }
}

/// Applies one parameterized layer.
///
/// Input layouts: conv2d `B×C×H×W`, conv1d-temporal `B×C×T`, linear `B×F`,
/// batchnorm `B×C×…`. Batch norm in [`Mode::Train`] updates the running
/// statistics held in `store`.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    store: &mut ParamStore<T>,
    layer: &LayerParams,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    let ctx = format!("{} ({})", layer.name, layer.kind().as_str());
    let w = tape.param(store, layer.weight)?;
    let b = tape.param(store, layer.bias)?;
    match layer.hyper {
        Hyper::Conv2d(h) => {
            if tape.shape(x).len() != 4 {
                return Err(Error::dim(ctx, "rank", 4, tape.shape(x).len()));
            }
            check_axis(&ctx, "1 (channels)", h.in_ch, tape.shape(x).get(1))?;
            tape.conv2d(x, w, b, h.stride, h.padding)
        }
        Hyper::Conv1dTemporal(h) => {
            if tape.shape(x).len() != 3 {
                return Err(Error::dim(ctx, "rank", 3, tape.shape(x).len()));
            }
            check_axis(&ctx, "1 (channels)", h.in_ch, tape.shape(x).get(1))?;
            tape.temporal_conv(x, w, b, TemporalLayout::ChannelsTime, h.padding)
        }
        Hyper::Linear(h) => {
            if tape.shape(x).len() != 2 {
                return Err(Error::dim(ctx, "rank", 2, tape.shape(x).len()));
            }
            check_axis(&ctx, "1 (features)", h.inputs, tape.shape(x).get(1))?;
            tape.linear(x, w, b)
        }
        Hyper::BatchNorm(h) => {
            check_axis(&ctx, "1 (channels)", h.channels, tape.shape(x).get(1))?;
            let (mean_id, var_id) = layer
                .running
                .ok_or_else(|| Error::Config(format!("{ctx}: missing running statistics")))?;
            let mut mean = store.get(mean_id).data().to_vec();
            let mut var = store.get(var_id).data().to_vec();
            let y = tape.batch_norm(x, w, b, &mut mean, &mut var, T::of(h.momentum), T::of(h.eps), mode)?;
            if mode == Mode::Train {
                store.get_mut(mean_id).data_mut().copy_from_slice(&mean);
                store.get_mut(var_id).data_mut().copy_from_slice(&var);
            }
            Ok(y)
        }
    }
}

/// Temporal convolution over features whose time axis is folded into the
/// batch axis: `x` is `(B·time)×C×H×W`. Convolves over time only, per
/// spatial location, with the layer's kernel and padding.
pub fn temporal_conv_inject<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    layer: &LayerParams,
    x: Var,
    time: usize,
) -> Result<Var> {
    let Hyper::Conv1dTemporal(h) = layer.hyper else {
        return Err(Error::Config(format!("{} is not a temporal convolution", layer.name)));
    };
    check_axis(&layer.name, "1 (channels)", h.in_ch, tape.shape(x).get(1))?;
    let w = tape.param(store, layer.weight)?;
    let b = tape.param(store, layer.bias)?;
    tape.temporal_conv(x, w, b, TemporalLayout::Folded { time }, h.padding)
}

/// Batch-normalizes a plain tensor outside of any training graph.
pub fn batchnorm_stats<T: Real>(
    input: &Tensor<T>,
    layer: &LayerParams,
    store: &mut ParamStore<T>,
    training: bool,
) -> Result<Tensor<T>> {
    if layer.kind() != LayerKind::Batchnorm {
        return Err(Error::Config(format!("{} is not a batch-norm layer", layer.name)));
    }
    let mut tape = Tape::no_grad();
    let x = tape.input(input)?;
    let mode = if training { Mode::Train } else { Mode::Eval };
    let y = forward(&mut tape, store, layer, x, mode)?;
    Ok(tape.tensor(y))
}
