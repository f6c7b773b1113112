//! Reverse-mode differentiation over a Wengert list.
//!
//! A [`Tape`] lives for one forward/backward pass. Parameters are bound from a
//! [`ParamStore`] as leaves; [`Tape::backward`] writes their gradients back
//! into the store. Gradients are cleared only by `sgd_step`, so a second
//! backward pass before a step is rejected instead of silently accumulating.

use std::collections::HashMap;

use super::kernels::{self, Conv2dGeom, PoolGeom, TemporalGeom};
use super::real::gemm;
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for PoolSpec {
    /// 3×3 windows with stride 2.
    fn default() -> Self {
        PoolSpec {
            kernel: 3,
            stride: 2,
            padding: 0,
        }
    }
}

/// Where the time axis sits for a temporal convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalLayout {
    /// `B×C×T`.
    ChannelsTime,
    /// `(B·T)×C×H×W` with time folded into the batch axis.
    Folded { time: usize },
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sum(Var),
    Reshape(Var),
    Concat {
        parts: Vec<(Var, usize)>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: Conv2dGeom,
    },
    Temporal {
        x: Var,
        w: Var,
        b: Var,
        geom: TemporalGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        fin: usize,
        fout: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch: usize,
        channels: usize,
        inner: usize,
        training: bool,
    },
    GlobalAvgPool {
        x: Var,
        batch: usize,
        time: usize,
        channels: usize,
        inner: usize,
    },
    SoftmaxXent {
        logits: Var,
        probs: Vec<T>,
        targets: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    bound: HashMap<ParamId, Var>,
    grad_enabled: bool,
    backward_done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            bound: HashMap::new(),
            grad_enabled: true,
            backward_done: false,
        }
    }

    /// A tape that never records gradient information (inference).
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op_name: &str, shape: Vec<usize>, value: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        debug_assert_eq!(numel(&shape), value.len(), "{op_name}: shape/value mismatch");
        if let Some(i) = value.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(op_name, format!("non-finite output at flat index {i}")));
        }
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input tensor as a leaf. It takes part in differentiation
    /// when `tensor.requires_grad()` is set.
    pub fn input(&mut self, tensor: &Tensor<T>) -> Result<Var> {
        if !tensor.is_finite() {
            return Err(Error::numeric("Tape::input", "non-finite input value"));
        }
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: tensor.data().to_vec(),
            op: Op::Leaf,
            requires_grad: self.grad_enabled && tensor.requires_grad(),
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Binds a stored parameter as a leaf. Binding the same id twice returns
    /// the same variable.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.bound.get(&id) {
            return Ok(v);
        }
        let v = self.input(store.get(id))?;
        self.nodes[v.0].param = Some(id);
        self.bound.insert(id, v);
        Ok(v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape values are finite")
    }

    /// Gradient of the loss with respect to `v`, available after `backward`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn same_shape(&self, ctx: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() {
            return Err(Error::dim(ctx, "rank", sa.len(), sb.len()));
        }
        for (axis, (x, y)) in sa.iter().zip(sb).enumerate() {
            if x != y {
                return Err(Error::dim(ctx, axis.to_string(), x, y));
            }
        }
        Ok(())
    }

    fn expect_rank(&self, ctx: &str, v: Var, rank: usize) -> Result<()> {
        let r = self.shape(v).len();
        if r != rank {
            return Err(Error::dim(ctx, "rank", rank, r));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push("add", shape, value, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push("mul", shape, value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push("scale", shape, value, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).iter().map(|&x| x.max(T::zero())).collect();
        let shape = self.shape(a).to_vec();
        self.push("relu", shape, value, Op::Relu(a), &[a])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().copied().sum::<T>();
        self.push("sum", vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.contains(&0) || numel(shape) != numel(self.shape(a)) {
            return Err(Error::dim(
                "reshape",
                "numel",
                numel(self.shape(a)),
                format!("{shape:?}"),
            ));
        }
        let value = self.value(a).to_vec();
        self.push("reshape", shape.to_vec(), value, Op::Reshape(a), &[a])
    }

    /// Concatenates `B×F_i` matrices along the feature axis.
    pub fn concat_features(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let rows = self.shape(first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            self.expect_rank("concat_features", p, 2)?;
            if self.shape(p)[0] != rows {
                return Err(Error::dim("concat_features", "0", rows, self.shape(p)[0]));
            }
            widths.push((p, self.shape(p)[1]));
        }
        let total: usize = widths.iter().map(|w| w.1).sum();
        let mut value = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, w) in &widths {
                value.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        self.push("concat_features", vec![rows, total], value, Op::Concat { parts: widths }, parts)
    }

    /// 2-D convolution. `x`: `N×C×H×W`, `w`: `O×C×kh×kw`, `b`: `O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        self.expect_rank("conv2d input", x, 4)?;
        self.expect_rank("conv2d weight", w, 4)?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs[1] != ws[1] {
            return Err(Error::dim("conv2d input", "1 (channels)", ws[1], xs[1]));
        }
        if self.shape(b) != [ws[0]] {
            return Err(Error::dim("conv2d bias", "0", ws[0], format!("{:?}", self.shape(b))));
        }
        let out_h = kernels::conv_out_extent(xs[2], ws[2], stride, pad)
            .ok_or_else(|| Error::dim("conv2d input", "2 (height)", format!(">= {}", ws[2]), xs[2] + 2 * pad))?;
        let out_w = kernels::conv_out_extent(xs[3], ws[3], stride, pad)
            .ok_or_else(|| Error::dim("conv2d input", "3 (width)", format!(">= {}", ws[3]), xs[3] + 2 * pad))?;
        let geom = Conv2dGeom {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ws[0],
            in_h: xs[2],
            in_w: xs[3],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            out_h,
            out_w,
        };
        let value = kernels::conv2d_forward(&geom, self.value(x), self.value(w), self.value(b));
        self.push(
            "conv2d",
            vec![xs[0], ws[0], out_h, out_w],
            value,
            Op::Conv2d { x, w, b, geom },
            &[x, w, b],
        )
    }

    /// Stride-1 convolution along the time axis only. `w`: `O×C×K`.
    pub fn temporal_conv(&mut self, x: Var, w: Var, b: Var, layout: TemporalLayout, pad: usize) -> Result<Var> {
        self.expect_rank("temporal_conv weight", w, 3)?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, time, channels, spatial, time_major) = match layout {
            TemporalLayout::ChannelsTime => {
                self.expect_rank("temporal_conv input", x, 3)?;
                (xs[0], xs[2], xs[1], 1, false)
            }
            TemporalLayout::Folded { time } => {
                if xs.len() < 2 {
                    return Err(Error::dim("temporal_conv input", "rank", ">= 2", xs.len()));
                }
                if time == 0 || !xs[0].is_multiple_of(time) {
                    return Err(Error::dim("temporal_conv input", "0 (batch·time)", format!("multiple of {time}"), xs[0]));
                }
                (xs[0] / time, time, xs[1], numel(&xs[2..]), true)
            }
        };
        if channels != ws[1] {
            return Err(Error::dim("temporal_conv input", "channels", ws[1], channels));
        }
        if self.shape(b) != [ws[0]] {
            return Err(Error::dim("temporal_conv bias", "0", ws[0], format!("{:?}", self.shape(b))));
        }
        let time_out = kernels::conv_out_extent(time, ws[2], 1, pad)
            .ok_or_else(|| Error::dim("temporal_conv input", "time", format!(">= {}", ws[2]), time + 2 * pad))?;
        if time_major && time_out != time {
            return Err(Error::dim("temporal_conv output", "time", time, time_out));
        }
        let geom = TemporalGeom {
            batch,
            time_in: time,
            time_out,
            in_ch: channels,
            out_ch: ws[0],
            spatial,
            kernel: ws[2],
            pad,
            time_major,
        };
        let value = kernels::temporal_forward(&geom, self.value(x), self.value(w), self.value(b));
        let mut shape = xs.clone();
        if time_major {
            shape[1] = ws[0];
        } else {
            shape[1] = ws[0];
            shape[2] = time_out;
        }
        self.push("temporal_conv", shape, value, Op::Temporal { x, w, b, geom }, &[x, w, b])
    }

    /// Fully connected layer. `x`: `B×in`, `w`: `out×in`, `b`: `out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.expect_rank("linear input", x, 2)?;
        self.expect_rank("linear weight", w, 2)?;
        let (rows, fin) = (self.shape(x)[0], self.shape(x)[1]);
        let (fout, win) = (self.shape(w)[0], self.shape(w)[1]);
        if fin != win {
            return Err(Error::dim("linear input", "1 (features)", win, fin));
        }
        if self.shape(b) != [fout] {
            return Err(Error::dim("linear bias", "0", fout, format!("{:?}", self.shape(b))));
        }
        let mut value = Vec::with_capacity(rows * fout);
        for _ in 0..rows {
            value.extend_from_slice(self.value(b));
        }
        gemm(false, true, rows, fout, fin, T::one(), self.value(x), self.value(w), T::one(), &mut value);
        self.push(
            "linear",
            vec![rows, fout],
            value,
            Op::Linear {
                x,
                w,
                b,
                rows,
                fin,
                fout,
            },
            &[x, w, b],
        )
    }

    /// Max pooling over the last two axes of an `N×C×H×W` tensor.
    pub fn max_pool2d(&mut self, x: Var, spec: PoolSpec) -> Result<Var> {
        self.expect_rank("max_pool2d input", x, 4)?;
        let xs = self.shape(x).to_vec();
        if spec.padding >= spec.kernel {
            return Err(Error::Config("max_pool2d padding must be smaller than the kernel".into()));
        }
        let out_h = kernels::conv_out_extent(xs[2], spec.kernel, spec.stride, spec.padding)
            .ok_or_else(|| Error::dim("max_pool2d input", "2 (height)", format!(">= {}", spec.kernel), xs[2]))?;
        let out_w = kernels::conv_out_extent(xs[3], spec.kernel, spec.stride, spec.padding)
            .ok_or_else(|| Error::dim("max_pool2d input", "3 (width)", format!(">= {}", spec.kernel), xs[3]))?;
        let geom = PoolGeom {
            planes: xs[0] * xs[1],
            in_h: xs[2],
            in_w: xs[3],
            kernel: spec.kernel,
            stride: spec.stride,
            pad: spec.padding,
            out_h,
            out_w,
        };
        let (value, argmax) = kernels::maxpool_forward(&geom, self.value(x));
        self.push(
            "max_pool2d",
            vec![xs[0], xs[1], out_h, out_w],
            value,
            Op::MaxPool { x, argmax },
            &[x],
        )
    }

    /// Batch normalization over axis 1 of an `N×C×…` tensor. In training
    /// mode batch statistics are used and the running statistics are updated
    /// in place; in eval mode the running statistics are used.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        momentum: T,
        eps: T,
        mode: Mode,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::dim("batch_norm input", "rank", ">= 2", xs.len()));
        }
        let (batch, channels) = (xs[0], xs[1]);
        let inner = numel(&xs[2..]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [channels] {
                return Err(Error::dim(format!("batch_norm {name}"), "0", channels, format!("{:?}", self.shape(v))));
            }
        }
        if running_mean.len() != channels || running_var.len() != channels {
            return Err(Error::dim("batch_norm running stats", "0", channels, running_mean.len()));
        }
        let xv = self.value(x);
        let m = batch * inner;
        let training = mode == Mode::Train;
        let mut inv_std = vec![T::zero(); channels];
        let mut mean = vec![T::zero(); channels];
        if training {
            let mf = T::of(m as f64);
            for c in 0..channels {
                let mut s = T::zero();
                for n in 0..batch {
                    let base = (n * channels + c) * inner;
                    s += xv[base..base + inner].iter().copied().sum::<T>();
                }
                let mu = s / mf;
                let mut ss = T::zero();
                for n in 0..batch {
                    let base = (n * channels + c) * inner;
                    for &v in &xv[base..base + inner] {
                        ss += (v - mu) * (v - mu);
                    }
                }
                let var = ss / mf;
                mean[c] = mu;
                inv_std[c] = T::one() / (var + eps).sqrt();
                let unbiased = if m > 1 { var * mf / T::of((m - 1) as f64) } else { var };
                running_mean[c] = (T::one() - momentum) * running_mean[c] + momentum * mu;
                running_var[c] = ((T::one() - momentum) * running_var[c] + momentum * unbiased).max(T::of(1e-12));
            }
        } else {
            for c in 0..channels {
                mean[c] = running_mean[c];
                inv_std[c] = T::one() / (running_var[c] + eps).sqrt();
            }
        }
        let g = self.value(gamma);
        let bt = self.value(beta);
        let mut xhat = vec![T::zero(); xv.len()];
        let mut value = vec![T::zero(); xv.len()];
        for n in 0..batch {
            for c in 0..channels {
                let base = (n * channels + c) * inner;
                for i in base..base + inner {
                    let h = (xv[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    value[i] = g[c] * h + bt[c];
                }
            }
        }
        self.push(
            "batch_norm",
            xs,
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
                channels,
                inner,
                training,
            },
            &[x, gamma, beta],
        )
    }

    /// Averages a `(B·time)×C×…` tensor over time and all trailing axes,
    /// giving `B×C`.
    pub fn global_avg_pool(&mut self, x: Var, time: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::dim("global_avg_pool input", "rank", ">= 2", xs.len()));
        }
        if time == 0 || !xs[0].is_multiple_of(time) {
            return Err(Error::dim("global_avg_pool input", "0 (batch·time)", format!("multiple of {time}"), xs[0]));
        }
        let (batch, channels, inner) = (xs[0] / time, xs[1], numel(&xs[2..]));
        let xv = self.value(x);
        let denom = T::of((time * inner) as f64);
        let mut value = vec![T::zero(); batch * channels];
        for b in 0..batch {
            for t in 0..time {
                for c in 0..channels {
                    let base = ((b * time + t) * channels + c) * inner;
                    value[b * channels + c] += xv[base..base + inner].iter().copied().sum::<T>();
                }
            }
        }
        for v in &mut value {
            *v /= denom;
        }
        self.push(
            "global_avg_pool",
            vec![batch, channels],
            value,
            Op::GlobalAvgPool {
                x,
                batch,
                time,
                channels,
                inner,
            },
            &[x],
        )
    }

    /// Mean softmax cross-entropy over a `B×K` batch of logits. Returns the
    /// scalar loss and the row-wise probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<(Var, Tensor<T>)> {
        self.expect_rank("softmax_cross_entropy logits", logits, 2)?;
        let (rows, k) = (self.shape(logits)[0], self.shape(logits)[1]);
        if targets.len() != rows {
            return Err(Error::dim("softmax_cross_entropy targets", "0", rows, targets.len()));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Label(format!("target class {t} outside 0..{k}")));
        }
        let lv = self.value(logits);
        let probs = kernels::softmax_rows(lv, k);
        let mut loss = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &lv[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - m).exp()).sum::<T>().ln() + m;
            loss += lse - row[t];
        }
        loss /= T::of(rows as f64);
        let prob_tensor = Tensor::new(vec![rows, k], probs.clone())?;
        let v = self.push(
            "softmax_cross_entropy",
            vec![1],
            vec![loss.max(T::zero())],
            Op::SoftmaxXent {
                logits,
                probs,
                targets: targets.to_vec(),
            },
            &[logits],
        )?;
        Ok((v, prob_tensor))
    }

    /// Back-propagates from a scalar `loss`, storing leaf gradients on the
    /// tape and writing parameter gradients into `store`.
    ///
    /// Fails if called twice on the same tape or if any bound parameter
    /// already holds a gradient that has not been consumed by `sgd_step`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward already ran on this tape".into()));
        }
        if numel(self.shape(loss)) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for &id in self.bound.keys() {
            if store.get(id).grad().is_some() {
                return Err(Error::Contract(format!(
                    "parameter '{}' already holds a gradient; call sgd_step before another backward",
                    store.entry(id).name
                )));
            }
        }
        self.backward_done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (&id, &v) in &self.bound {
            if let Some(g) = &grads[v.0] {
                store.get_mut(id).set_grad(g.clone())?;
            } else if self.nodes[v.0].requires_grad {
                store.get_mut(id).set_grad(vec![T::zero(); self.nodes[v.0].value.len()])?;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        // Returns the gradient buffer of `v`, creating it on first use.
        fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        for (d, &s) in slot(grads, nodes, v).iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if wants(*a) {
                    for ((d, &s), &o) in slot(grads, nodes, *a).iter_mut().zip(g).zip(bv) {
                        *d += s * o;
                    }
                }
                if wants(*b) {
                    for ((d, &s), &o) in slot(grads, nodes, *b).iter_mut().zip(g).zip(av) {
                        *d += s * o;
                    }
                }
            }
            Op::Scale(a, c) => {
                if wants(*a) {
                    for (d, &s) in slot(grads, nodes, *a).iter_mut().zip(g) {
                        *d += s * *c;
                    }
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let av = &nodes[a.0].value;
                    for ((d, &s), &x) in slot(grads, nodes, *a).iter_mut().zip(g).zip(av) {
                        if x > T::zero() {
                            *d += s;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    for d in slot(grads, nodes, *a).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    for (d, &s) in slot(grads, nodes, *a).iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let rows = g.len() / total;
                let mut off = 0;
                for &(p, w) in parts {
                    if wants(p) {
                        let d = slot(grads, nodes, p);
                        for r in 0..rows {
                            for j in 0..w {
                                d[r * w + j] += g[r * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                let mut dx = wants(*x).then(|| grads[x.0].take().unwrap_or_else(|| vec![T::zero(); xv.len()]));
                let mut dw = wants(*w).then(|| grads[w.0].take().unwrap_or_else(|| vec![T::zero(); wv.len()]));
                let mut db = wants(*b).then(|| grads[b.0].take().unwrap_or_else(|| vec![T::zero(); geom.out_ch]));
                kernels::conv2d_backward(geom, xv, wv, g, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                grads[x.0] = dx.or(grads[x.0].take());
                grads[w.0] = dw.or(grads[w.0].take());
                grads[b.0] = db.or(grads[b.0].take());
            }
            Op::Temporal { x, w, b, geom } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                let mut dx = wants(*x).then(|| grads[x.0].take().unwrap_or_else(|| vec![T::zero(); xv.len()]));
                let mut dw = wants(*w).then(|| grads[w.0].take().unwrap_or_else(|| vec![T::zero(); wv.len()]));
                let mut db = wants(*b).then(|| grads[b.0].take().unwrap_or_else(|| vec![T::zero(); geom.out_ch]));
                kernels::temporal_backward(geom, xv, wv, g, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                grads[x.0] = dx.or(grads[x.0].take());
                grads[w.0] = dw.or(grads[w.0].take());
                grads[b.0] = db.or(grads[b.0].take());
            }
            Op::Linear {
                x,
                w,
                b,
                rows,
                fin,
                fout,
            } => {
                let (rows, fin, fout) = (*rows, *fin, *fout);
                if wants(*x) {
                    let wv = &nodes[w.0].value;
                    let d = slot(grads, nodes, *x);
                    gemm(false, false, rows, fin, fout, T::one(), g, wv, T::one(), d);
                }
                if wants(*w) {
                    let xv = &nodes[x.0].value;
                    let d = slot(grads, nodes, *w);
                    gemm(true, false, fout, fin, rows, T::one(), g, xv, T::one(), d);
                }
                if wants(*b) {
                    let d = slot(grads, nodes, *b);
                    for r in 0..rows {
                        for j in 0..fout {
                            d[j] += g[r * fout + j];
                        }
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                if wants(*x) {
                    let d = slot(grads, nodes, *x);
                    for (&s, &idx) in g.iter().zip(argmax) {
                        if idx != usize::MAX {
                            d[idx] += s;
                        }
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
                channels,
                inner,
                training,
            } => {
                let (batch, channels, inner) = (*batch, *channels, *inner);
                let gv = &nodes[gamma.0].value;
                let mut sum_dy = vec![T::zero(); channels];
                let mut sum_dy_xhat = vec![T::zero(); channels];
                for n in 0..batch {
                    for c in 0..channels {
                        let base = (n * channels + c) * inner;
                        for j in base..base + inner {
                            sum_dy[c] += g[j];
                            sum_dy_xhat[c] += g[j] * xhat[j];
                        }
                    }
                }
                if wants(*gamma) {
                    for (d, &s) in slot(grads, nodes, *gamma).iter_mut().zip(&sum_dy_xhat) {
                        *d += s;
                    }
                }
                if wants(*beta) {
                    for (d, &s) in slot(grads, nodes, *beta).iter_mut().zip(&sum_dy) {
                        *d += s;
                    }
                }
                if wants(*x) {
                    let m = T::of((batch * inner) as f64);
                    let d = slot(grads, nodes, *x);
                    for n in 0..batch {
                        for c in 0..channels {
                            let base = (n * channels + c) * inner;
                            let k = gv[c] * inv_std[c];
                            for j in base..base + inner {
                                if *training {
                                    d[j] += k * (g[j] - sum_dy[c] / m - xhat[j] * sum_dy_xhat[c] / m);
                                } else {
                                    d[j] += k * g[j];
                                }
                            }
                        }
                    }
                }
            }
            Op::GlobalAvgPool {
                x,
                batch,
                time,
                channels,
                inner,
            } => {
                if wants(*x) {
                    let denom = T::of((*time * *inner) as f64);
                    let d = slot(grads, nodes, *x);
                    for b in 0..*batch {
                        for t in 0..*time {
                            for c in 0..*channels {
                                let s = g[b * channels + c] / denom;
                                let base = ((b * time + t) * channels + c) * inner;
                                for v in &mut d[base..base + inner] {
                                    *v += s;
                                }
                            }
                        }
                    }
                }
            }
            Op::SoftmaxXent { logits, probs, targets } => {
                if wants(*logits) {
                    let rows = targets.len();
                    let k = probs.len() / rows;
                    let scale = g[0] / T::of(rows as f64);
                    let d = slot(grads, nodes, *logits);
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            d[r * k + j] += scale * (probs[r * k + j] - onehot);
                        }
                    }
                }
            }
        }
    }
}
