//! Raw numeric kernels behind the tape operations. Everything here works on
//! flat row-major slices; shape validation happens in `tape`.

use super::real::{gemm, Real};

/// Output extent of a convolution or pooling window along one axis.
/// Returns `None` when the padded input is smaller than the window.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeom {
    fn col_rows(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }
    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col<T: Real>(g: &Conv2dGeom, x: &[T], cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(g: &Conv2dGeom, cols: &[T], dx: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            drow[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(g: &Conv2dGeom, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let in_sz = g.in_ch * g.in_h * g.in_w;
    let out_sz = g.out_ch * g.col_cols();
    let mut out = vec![T::zero(); g.batch * out_sz];
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    for n in 0..g.batch {
        im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
        let y = &mut out[n * out_sz..(n + 1) * out_sz];
        for (co, row) in y.chunks_mut(g.col_cols()).enumerate() {
            row.fill(b[co]);
        }
        gemm(false, false, g.out_ch, g.col_cols(), g.col_rows(), T::one(), w, &cols, T::one(), y);
    }
    out
}

/// Accumulates input, weight and bias gradients. Any of the outputs may be
/// skipped by passing `None`.
pub(crate) fn conv2d_backward<T: Real>(
    g: &Conv2dGeom,
    x: &[T],
    w: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let in_sz = g.in_ch * g.in_h * g.in_w;
    let out_sz = g.out_ch * g.col_cols();
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut dcols = vec![T::zero(); g.col_rows() * g.col_cols()];
    for n in 0..g.batch {
        let dyn_ = &dy[n * out_sz..(n + 1) * out_sz];
        if let Some(db) = db.as_deref_mut() {
            for (co, row) in dyn_.chunks(g.col_cols()).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
            gemm(false, true, g.out_ch, g.col_rows(), g.col_cols(), T::one(), dyn_, &cols, T::one(), dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(true, false, g.col_rows(), g.col_cols(), g.out_ch, T::one(), w, dyn_, T::zero(), &mut dcols);
            col2im_add(g, &dcols, &mut dx[n * in_sz..(n + 1) * in_sz]);
        }
    }
}

/// Geometry of a 1-D convolution along a time axis. Element `(b, t, c, s)`
/// lives at `b*batch_stride + t*time_stride + c*chan_stride + s`, which covers
/// both the plain `B×C×T` layout (spatial = 1) and the time-folded
/// `(B·T)×C×H×W` layout used by the residual streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct TemporalGeom {
    pub batch: usize,
    pub time_in: usize,
    pub time_out: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub spatial: usize,
    pub kernel: usize,
    pub pad: usize,
    pub time_major: bool,
}

impl TemporalGeom {
    fn strides(&self, ch: usize, time: usize) -> (usize, usize, usize) {
        if self.time_major {
            // (b, t, c, s)
            (time * ch * self.spatial, ch * self.spatial, self.spatial)
        } else {
            // (b, c, t) with spatial == 1
            (ch * time, 1, time)
        }
    }
}

pub(crate) fn temporal_forward<T: Real>(g: &TemporalGeom, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (ib, it, ic) = g.strides(g.in_ch, g.time_in);
    let (ob, ot, oc) = g.strides(g.out_ch, g.time_out);
    let mut out = vec![T::zero(); g.batch * g.time_out * g.out_ch * g.spatial];
    for bi in 0..g.batch {
        for t in 0..g.time_out {
            for co in 0..g.out_ch {
                let base = bi * ob + t * ot + co * oc;
                for s in 0..g.spatial {
                    out[base + s] = b[co];
                }
            }
            for k in 0..g.kernel {
                let ti = t as isize + k as isize - g.pad as isize;
                if ti < 0 || ti >= g.time_in as isize {
                    continue;
                }
                let xoff = bi * ib + ti as usize * it;
                let yoff = bi * ob + t * ot;
                // y[co, s] += sum_ci w[co, ci, k] * x[ci, s]
                unsafe {
                    T::gemm_raw(
                        g.out_ch,
                        g.in_ch,
                        g.spatial,
                        T::one(),
                        w.as_ptr().add(k),
                        (g.in_ch * g.kernel) as isize,
                        g.kernel as isize,
                        x.as_ptr().add(xoff),
                        ic as isize,
                        1,
                        T::one(),
                        out.as_mut_ptr().add(yoff),
                        oc as isize,
                        1,
                    );
                }
            }
        }
    }
    out
}

pub(crate) fn temporal_backward<T: Real>(
    g: &TemporalGeom,
    x: &[T],
    w: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let (ib, it, ic) = g.strides(g.in_ch, g.time_in);
    let (ob, ot, oc) = g.strides(g.out_ch, g.time_out);
    assert!(x.len() >= g.batch * g.time_in * g.in_ch * g.spatial);
    assert!(dy.len() >= g.batch * g.time_out * g.out_ch * g.spatial);
    for bi in 0..g.batch {
        for t in 0..g.time_out {
            let yoff = bi * ob + t * ot;
            if let Some(db) = db.as_deref_mut() {
                for co in 0..g.out_ch {
                    let base = yoff + co * oc;
                    db[co] += dy[base..base + g.spatial].iter().copied().sum::<T>();
                }
            }
            for k in 0..g.kernel {
                let ti = t as isize + k as isize - g.pad as isize;
                if ti < 0 || ti >= g.time_in as isize {
                    continue;
                }
                let xoff = bi * ib + ti as usize * it;
                if let Some(dw) = dw.as_deref_mut() {
                    // dw[co, ci, k] += sum_s dy[co, s] * x[ci, s]
                    unsafe {
                        T::gemm_raw(
                            g.out_ch,
                            g.spatial,
                            g.in_ch,
                            T::one(),
                            dy.as_ptr().add(yoff),
                            oc as isize,
                            1,
                            x.as_ptr().add(xoff),
                            1,
                            ic as isize,
                            T::one(),
                            dw.as_mut_ptr().add(k),
                            (g.in_ch * g.kernel) as isize,
                            g.kernel as isize,
                        );
                    }
                }
                if let Some(dx) = dx.as_deref_mut() {
                    assert!(dx.len() >= g.batch * g.time_in * g.in_ch * g.spatial);
                    // dx[ci, s] += sum_co w[co, ci, k] * dy[co, s]
                    unsafe {
                        T::gemm_raw(
                            g.in_ch,
                            g.out_ch,
                            g.spatial,
                            T::one(),
                            w.as_ptr().add(k),
                            g.kernel as isize,
                            (g.in_ch * g.kernel) as isize,
                            dy.as_ptr().add(yoff),
                            oc as isize,
                            1,
                            T::one(),
                            dx.as_mut_ptr().add(xoff),
                            ic as isize,
                            1,
                        );
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub planes: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Max pooling; returns values and the flat input index of each maximum
/// (first occurrence wins on ties).
pub(crate) fn maxpool_forward<T: Real>(g: &PoolGeom, x: &[T]) -> (Vec<T>, Vec<usize>) {
    let n = g.planes * g.out_h * g.out_w;
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for p in 0..g.planes {
        let base = p * g.in_h * g.in_w;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut best = T::neg_infinity();
                let mut best_i = usize::MAX;
                for ky in 0..g.kernel {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kernel {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * g.in_w + ix as usize;
                        if x[idx] > best {
                            best = x[idx];
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

/// Row-wise numerically stable softmax over rows of length `k`.
pub fn softmax_rows<T: Real>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    for (row, dst) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - m).exp();
            z += *d;
        }
        for d in dst.iter_mut() {
            *d /= z;
        }
    }
    out
}
