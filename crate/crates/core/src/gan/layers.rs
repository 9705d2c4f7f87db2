//! Convolution, transposed convolution, batch normalization, and the
//! activations, each with explicit reverse-mode derivatives.

use super::tensor::{Scalar, Tensor};

/// Valid output-coordinate range [lo, hi) for which the matching input
/// coordinate i = o*stride + k - pad stays inside [0, limit).
#[inline]
fn out_range(out_len: usize, k: usize, pad: usize, stride: usize, limit: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi_excl = if limit + pad > k {
        ((limit + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi_excl), hi_excl)
}

/// Strided 2D convolution, no bias. Weight layout [Cout, Cin, K, K].
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.weight.shape[2];
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        if self.stride == 2 {
            self.forward_s2(input)
        } else {
            self.forward_generic(input)
        }
    }

    /// Reference path, any stride.
    pub fn forward_generic(&self, input: &Tensor<T>) -> Tensor<T> {
        let [n, cin, h, w] = input.shape;
        let [cout, wcin, k, _] = self.weight.shape;
        assert_eq!(cin, wcin, "conv channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        let plane_out = oh * ow;
        crate::par::for_each_chunk(&mut out.data, cout * plane_out, |ni, out_n| {
                for co in 0..cout {
                    let out_plane = &mut out_n[co * plane_out..(co + 1) * plane_out];
                    for ci in 0..cin {
                        let in_base = input.plane(ni, ci);
                        let w_base = ((co * cin) + ci) * k * k;
                        for kh in 0..k {
                            let (oh_lo, oh_hi) = out_range(oh, kh, self.pad, self.stride, h);
                            for kw in 0..k {
                                let wv = self.weight.data[w_base + kh * k + kw];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (ow_lo, ow_hi) = out_range(ow, kw, self.pad, self.stride, w);
                                if ow_lo >= ow_hi {
                                    continue;
                                }
                                let iw0 = ow_lo * self.stride + kw - self.pad;
                                let iw_last = (ow_hi - 1) * self.stride + kw - self.pad;
                                for ohi in oh_lo..oh_hi {
                                    let ih = ohi * self.stride + kh - self.pad;
                                    let in_row = in_base + ih * w;
                                    let out_row = ohi * ow;
                                    let src = &input.data[in_row + iw0..=in_row + iw_last];
                                    let dst = &mut out_plane[out_row + ow_lo..out_row + ow_hi];
                                    for (o, x) in dst.iter_mut().zip(src.iter().step_by(self.stride)) {
                                        *o += wv * *x;
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    /// Stride-2 path: the input is split into four polarity phases so the
    /// inner accumulation runs over contiguous slices on both sides.
    fn forward_s2(&self, input: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.stride, 2);
        let [n, cin, h, w] = input.shape;
        let [cout, wcin, k, _] = self.weight.shape;
        assert_eq!(cin, wcin, "conv channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        let plane_out = oh * ow;
        let plane_in = h * w;
        let hh = [h.div_ceil(2), h / 2];
        let ww = [w.div_ceil(2), w / 2];
        crate::par::for_each_chunk(&mut out.data, cout * plane_out, |ni, out_n| {
            // phase[ci][pr][pc][i*ww[pc] + j] = in[ci][2i+pr][2j+pc]
            let mut phases = vec![T::zero(); cin * plane_in];
            let mut offsets = [[0usize; 2]; 2];
            {
                let mut acc = 0;
                for pr in 0..2 {
                    for pc in 0..2 {
                        offsets[pr][pc] = acc;
                        acc += hh[pr] * ww[pc];
                    }
                }
            }
            let phase_block = plane_in;
            for ci in 0..cin {
                let in_base = input.plane(ni, ci);
                let block = &mut phases[ci * phase_block..(ci + 1) * phase_block];
                for pr in 0..2 {
                    for pc in 0..2 {
                        let base = offsets[pr][pc];
                        for i in 0..hh[pr] {
                            let src_row = in_base + (2 * i + pr) * w;
                            let dst_row = base + i * ww[pc];
                            for j in 0..ww[pc] {
                                block[dst_row + j] = input.data[src_row + 2 * j + pc];
                            }
                        }
                    }
                }
            }
            for co in 0..cout {
                let out_plane = &mut out_n[co * plane_out..(co + 1) * plane_out];
                for ci in 0..cin {
                    let block = &phases[ci * phase_block..(ci + 1) * phase_block];
                    let w_base = ((co * cin) + ci) * k * k;
                    for kh in 0..k {
                        let (oh_lo, oh_hi) = out_range(oh, kh, self.pad, 2, h);
                        let pr = (kh + self.pad) % 2;
                        let dr = (kh as isize - self.pad as isize - pr as isize) / 2;
                        for kw in 0..k {
                            let wv = self.weight.data[w_base + kh * k + kw];
                            let (ow_lo, ow_hi) = out_range(ow, kw, self.pad, 2, w);
                            if ow_lo >= ow_hi {
                                continue;
                            }
                            let pc = (kw + self.pad) % 2;
                            let dc = (kw as isize - self.pad as isize - pc as isize) / 2;
                            let base = offsets[pr][pc];
                            for ohi in oh_lo..oh_hi {
                                let prow = (ohi as isize + dr) as usize;
                                let p0 = base + prow * ww[pc] + (ow_lo as isize + dc) as usize;
                                let src = &block[p0..p0 + (ow_hi - ow_lo)];
                                let dst = &mut out_plane[ohi * ow + ow_lo..ohi * ow + ow_hi];
                                for (o, x) in dst.iter_mut().zip(src) {
                                    *o += wv * *x;
                                }
                            }
                        }
                    }
                }
            }
        });
        out
    }

    /// Gradients w.r.t. input and weight given d(loss)/d(output).
    pub fn backward(&self, input: &Tensor<T>, d_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let [n, cin, h, w] = input.shape;
        let [cout, _, k, _] = self.weight.shape;
        let (oh, ow) = self.out_hw(h, w);
        assert_eq!(d_out.shape, [n, cout, oh, ow]);
        let mut d_input = Tensor::zeros(input.shape);
        let plane_in = h * w;

        crate::par::for_each_chunk(&mut d_input.data, cin * plane_in, |ni, din_n| {
                for co in 0..cout {
                    let dout_base = d_out.plane(ni, co);
                    for ci in 0..cin {
                        let w_base = ((co * cin) + ci) * k * k;
                        let din_plane = &mut din_n[ci * plane_in..(ci + 1) * plane_in];
                        for kh in 0..k {
                            let (oh_lo, oh_hi) = out_range(oh, kh, self.pad, self.stride, h);
                            for kw in 0..k {
                                let wv = self.weight.data[w_base + kh * k + kw];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (ow_lo, ow_hi) = out_range(ow, kw, self.pad, self.stride, w);
                                if ow_lo >= ow_hi {
                                    continue;
                                }
                                let iw0 = ow_lo * self.stride + kw - self.pad;
                                let iw_last = (ow_hi - 1) * self.stride + kw - self.pad;
                                for ohi in oh_lo..oh_hi {
                                    let ih = ohi * self.stride + kh - self.pad;
                                    let din_row = ih * w;
                                    let dout_row = dout_base + ohi * ow;
                                    let dst = &mut din_plane[din_row + iw0..=din_row + iw_last];
                                    let src = &d_out.data[dout_row + ow_lo..dout_row + ow_hi];
                                    for (x, d) in dst.iter_mut().step_by(self.stride).zip(src) {
                                        *x += wv * *d;
                                    }
                                }
                            }
                        }
                    }
                }
            });

        // weight gradient: per-sample partials reduced in batch order
        let partials: Vec<Vec<T>> = crate::par::map_indexed(n, |ni| {
                let mut dw = vec![T::zero(); self.weight.numel()];
                for co in 0..cout {
                    let dout_base = d_out.plane(ni, co);
                    for ci in 0..cin {
                        let in_base = input.plane(ni, ci);
                        let w_base = ((co * cin) + ci) * k * k;
                        for kh in 0..k {
                            let (oh_lo, oh_hi) = out_range(oh, kh, self.pad, self.stride, h);
                            for kw in 0..k {
                                let (ow_lo, ow_hi) = out_range(ow, kw, self.pad, self.stride, w);
                                if ow_lo >= ow_hi {
                                    continue;
                                }
                                let iw0 = ow_lo * self.stride + kw - self.pad;
                                let iw_last = (ow_hi - 1) * self.stride + kw - self.pad;
                                let mut acc = T::zero();
                                for ohi in oh_lo..oh_hi {
                                    let ih = ohi * self.stride + kh - self.pad;
                                    let in_row = in_base + ih * w;
                                    let dout_row = dout_base + ohi * ow;
                                    let src = &input.data[in_row + iw0..=in_row + iw_last];
                                    let douts = &d_out.data[dout_row + ow_lo..dout_row + ow_hi];
                                    for (x, d) in src.iter().step_by(self.stride).zip(douts) {
                                        acc += *x * *d;
                                    }
                                }
                                dw[w_base + kh * k + kw] += acc;
                            }
                        }
                    }
                }
                dw
        });
        let mut d_weight = Tensor::zeros(self.weight.shape);
        for dw in partials {
            for (acc, v) in d_weight.data.iter_mut().zip(dw) {
                *acc += v;
            }
        }
        (d_input, d_weight)
    }
}

/// Strided transposed convolution, no bias. Weight layout [Cin, Cout, K, K].
#[derive(Debug, Clone, PartialEq)]
pub struct Deconv2d<T> {
    pub weight: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Deconv2d<T> {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.weight.shape[2];
        (
            (h - 1) * self.stride + k - 2 * self.pad,
            (w - 1) * self.stride + k - 2 * self.pad,
        )
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        if self.stride == 2 {
            self.forward_s2(input)
        } else {
            self.forward_generic(input)
        }
    }

    /// Reference path, any stride.
    pub fn forward_generic(&self, input: &Tensor<T>) -> Tensor<T> {
        let [n, cin, h, w] = input.shape;
        let [wcin, cout, k, _] = self.weight.shape;
        assert_eq!(cin, wcin, "deconv channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        let plane_out = oh * ow;
        crate::par::for_each_chunk(&mut out.data, cout * plane_out, |ni, out_n| {
                for co in 0..cout {
                    let out_plane = &mut out_n[co * plane_out..(co + 1) * plane_out];
                    for ci in 0..cin {
                        let in_base = input.plane(ni, ci);
                        let w_base = ((ci * cout) + co) * k * k;
                        // gather form: out(ohi) sums input(ih) where
                        // ih*stride + kh - pad == ohi
                        for kh in 0..k {
                            let (ih_lo, ih_hi) = out_range(h, kh, self.pad, self.stride, oh);
                            for kw in 0..k {
                                let wv = self.weight.data[w_base + kh * k + kw];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (iw_lo, iw_hi) = out_range(w, kw, self.pad, self.stride, ow);
                                if iw_lo >= iw_hi {
                                    continue;
                                }
                                let ow0 = iw_lo * self.stride + kw - self.pad;
                                let ow_last = (iw_hi - 1) * self.stride + kw - self.pad;
                                for ihi in ih_lo..ih_hi {
                                    let ohi = ihi * self.stride + kh - self.pad;
                                    let in_row = in_base + ihi * w;
                                    let out_row = ohi * ow;
                                    let src = &input.data[in_row + iw_lo..in_row + iw_hi];
                                    let dst = &mut out_plane[out_row + ow0..=out_row + ow_last];
                                    for (x, o) in src.iter().zip(dst.iter_mut().step_by(self.stride)) {
                                        *o += wv * *x;
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    /// Stride-2 path: output accumulates into four polarity phase planes so
    /// both sides of the inner loop stay contiguous, then interleaves.
    fn forward_s2(&self, input: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(self.stride, 2);
        let [n, cin, h, w] = input.shape;
        let [wcin, cout, k, _] = self.weight.shape;
        assert_eq!(cin, wcin, "deconv channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        let plane_out = oh * ow;
        let hh = [oh.div_ceil(2), oh / 2];
        let ww = [ow.div_ceil(2), ow / 2];
        let mut offsets = [[0usize; 2]; 2];
        {
            let mut acc = 0;
            for pr in 0..2 {
                for pc in 0..2 {
                    offsets[pr][pc] = acc;
                    acc += hh[pr] * ww[pc];
                }
            }
        }
        crate::par::for_each_chunk(&mut out.data, cout * plane_out, |ni, out_n| {
            let mut phase = vec![T::zero(); plane_out];
            for co in 0..cout {
                phase.iter_mut().for_each(|v| *v = T::zero());
                for ci in 0..cin {
                    let in_base = input.plane(ni, ci);
                    let w_base = ((ci * cout) + co) * k * k;
                    for kh in 0..k {
                        let (ih_lo, ih_hi) = out_range(h, kh, self.pad, 2, oh);
                        let pr = (kh + self.pad) % 2;
                        let dr = (kh as isize - self.pad as isize - pr as isize) / 2;
                        for kw in 0..k {
                            let wv = self.weight.data[w_base + kh * k + kw];
                            let (iw_lo, iw_hi) = out_range(w, kw, self.pad, 2, ow);
                            if iw_lo >= iw_hi {
                                continue;
                            }
                            let pc = (kw + self.pad) % 2;
                            let dc = (kw as isize - self.pad as isize - pc as isize) / 2;
                            let base = offsets[pr][pc];
                            for ihi in ih_lo..ih_hi {
                                let prow = (ihi as isize + dr) as usize;
                                let p0 = base + prow * ww[pc] + (iw_lo as isize + dc) as usize;
                                let src = &input.data[in_base + ihi * w + iw_lo..in_base + ihi * w + iw_hi];
                                let dst = &mut phase[p0..p0 + (iw_hi - iw_lo)];
                                for (o, x) in dst.iter_mut().zip(src) {
                                    *o += wv * *x;
                                }
                            }
                        }
                    }
                }
                // interleave the phases back into the output plane
                let out_plane = &mut out_n[co * plane_out..(co + 1) * plane_out];
                for pr in 0..2 {
                    for pc in 0..2 {
                        let base = offsets[pr][pc];
                        for i in 0..hh[pr] {
                            let src_row = base + i * ww[pc];
                            let dst_row = (2 * i + pr) * ow;
                            for j in 0..ww[pc] {
                                out_plane[dst_row + 2 * j + pc] = phase[src_row + j];
                            }
                        }
                    }
                }
            }
        });
        out
    }

    pub fn backward(&self, input: &Tensor<T>, d_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let [n, cin, h, w] = input.shape;
        let [_, cout, k, _] = self.weight.shape;
        let (oh, ow) = self.out_hw(h, w);
        assert_eq!(d_out.shape, [n, cout, oh, ow]);
        let mut d_input = Tensor::zeros(input.shape);
        let plane_in = h * w;
        // d_input is a plain strided convolution of d_out with the kernel
        crate::par::for_each_chunk(&mut d_input.data, cin * plane_in, |ni, din_n| {
                for ci in 0..cin {
                    let din_plane = &mut din_n[ci * plane_in..(ci + 1) * plane_in];
                    for co in 0..cout {
                        let dout_base = d_out.plane(ni, co);
                        let w_base = ((ci * cout) + co) * k * k;
                        for kh in 0..k {
                            let (ih_lo, ih_hi) = out_range(h, kh, self.pad, self.stride, oh);
                            for kw in 0..k {
                                let wv = self.weight.data[w_base + kh * k + kw];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (iw_lo, iw_hi) = out_range(w, kw, self.pad, self.stride, ow);
                                if iw_lo >= iw_hi {
                                    continue;
                                }
                                let ow0 = iw_lo * self.stride + kw - self.pad;
                                let ow_last = (iw_hi - 1) * self.stride + kw - self.pad;
                                for ihi in ih_lo..ih_hi {
                                    let ohi = ihi * self.stride + kh - self.pad;
                                    let dout_row = dout_base + ohi * ow;
                                    let din_row = ihi * w;
                                    let dst = &mut din_plane[din_row + iw_lo..din_row + iw_hi];
                                    let src = &d_out.data[dout_row + ow0..=dout_row + ow_last];
                                    for (x, d) in dst.iter_mut().zip(src.iter().step_by(self.stride)) {
                                        *x += wv * *d;
                                    }
                                }
                            }
                        }
                    }
                }
            });

        let partials: Vec<Vec<T>> = crate::par::map_indexed(n, |ni| {
                let mut dw = vec![T::zero(); self.weight.numel()];
                for ci in 0..cin {
                    let in_base = input.plane(ni, ci);
                    for co in 0..cout {
                        let dout_base = d_out.plane(ni, co);
                        let w_base = ((ci * cout) + co) * k * k;
                        for kh in 0..k {
                            let (ih_lo, ih_hi) = out_range(h, kh, self.pad, self.stride, oh);
                            for kw in 0..k {
                                let (iw_lo, iw_hi) = out_range(w, kw, self.pad, self.stride, ow);
                                if iw_lo >= iw_hi {
                                    continue;
                                }
                                let ow0 = iw_lo * self.stride + kw - self.pad;
                                let ow_last = (iw_hi - 1) * self.stride + kw - self.pad;
                                let mut acc = T::zero();
                                for ihi in ih_lo..ih_hi {
                                    let ohi = ihi * self.stride + kh - self.pad;
                                    let in_row = in_base + ihi * w;
                                    let dout_row = dout_base + ohi * ow;
                                    let src = &input.data[in_row + iw_lo..in_row + iw_hi];
                                    let douts = &d_out.data[dout_row + ow0..=dout_row + ow_last];
                                    for (x, d) in src.iter().zip(douts.iter().step_by(self.stride)) {
                                        acc += *x * *d;
                                    }
                                }
                                dw[w_base + kh * k + kw] += acc;
                            }
                        }
                    }
                }
                dw
        });
        let mut d_weight = Tensor::zeros(self.weight.shape);
        for dw in partials {
            for (acc, v) in d_weight.data.iter_mut().zip(dw) {
                *acc += v;
            }
        }
        (d_input, d_weight)
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over (N, H, W).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Values cached by the train-mode forward pass for the backward pass.
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Train-mode forward with batch statistics. Pure: running statistics
    /// are not touched (see [`BatchNorm2d::update_running`]).
    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.channels());
        let m = (n * h * w) as f64;
        let plane = h * w;
        let eps = T::from_f64(BN_EPS);
        let mut xhat = Tensor::zeros(x.shape);
        let mut inv_std = vec![T::zero(); c];
        let mut batch_mean = vec![T::zero(); c];
        let mut batch_var = vec![T::zero(); c];
        let mut y = Tensor::zeros(x.shape);
        for ci in 0..c {
            let mut sum = T::zero();
            let mut sumsq = T::zero();
            for ni in 0..n {
                let base = x.plane(ni, ci);
                for &v in &x.data[base..base + plane] {
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / T::from_f64(m);
            let var = (sumsq / T::from_f64(m) - mean * mean).max(T::zero());
            let istd = T::one() / (var + eps).sqrt();
            batch_mean[ci] = mean;
            batch_var[ci] = var;
            inv_std[ci] = istd;
            let g = self.gamma[ci];
            let b = self.beta[ci];
            for ni in 0..n {
                let base = x.plane(ni, ci);
                for i in base..base + plane {
                    let xh = (x.data[i] - mean) * istd;
                    xhat.data[i] = xh;
                    y.data[i] = g * xh + b;
                }
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_mean,
                batch_var,
            },
        )
    }

    /// Fold batch statistics into the running estimates.
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        let m = T::from_f64(BN_MOMENTUM);
        let keep = T::one() - m;
        for c in 0..self.channels() {
            self.running_mean[c] = keep * self.running_mean[c] + m * cache.batch_mean[c];
            self.running_var[c] = keep * self.running_var[c] + m * cache.batch_var[c];
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.channels());
        let plane = h * w;
        let eps = T::from_f64(BN_EPS);
        let mut y = Tensor::zeros(x.shape);
        for ci in 0..c {
            let istd = T::one() / (self.running_var[ci] + eps).sqrt();
            let mean = self.running_mean[ci];
            let g = self.gamma[ci];
            let b = self.beta[ci];
            for ni in 0..n {
                let base = x.plane(ni, ci);
                for i in base..base + plane {
                    y.data[i] = g * (x.data[i] - mean) * istd + b;
                }
            }
        }
        y
    }

    /// Backward through the train-mode normalization.
    /// Returns (d_x, d_gamma, d_beta).
    pub fn backward(&self, cache: &BnCache<T>, d_y: &Tensor<T>) -> (Tensor<T>, Vec<T>, Vec<T>) {
        let [n, c, h, w] = d_y.shape;
        let plane = h * w;
        let m = T::from_f64((n * h * w) as f64);
        let mut d_x = Tensor::zeros(d_y.shape);
        let mut d_gamma = vec![T::zero(); c];
        let mut d_beta = vec![T::zero(); c];
        for ci in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for ni in 0..n {
                let base = d_y.plane(ni, ci);
                for i in base..base + plane {
                    sum_dy += d_y.data[i];
                    sum_dy_xhat += d_y.data[i] * cache.xhat.data[i];
                }
            }
            d_gamma[ci] = sum_dy_xhat;
            d_beta[ci] = sum_dy;
            let g = self.gamma[ci];
            let istd = cache.inv_std[ci];
            // dx = gamma*istd/m * (m dy - sum dy - xhat * sum(dy xhat))
            let scale = g * istd / m;
            for ni in 0..n {
                let base = d_y.plane(ni, ci);
                for i in base..base + plane {
                    d_x.data[i] = scale
                        * (m * d_y.data[i] - sum_dy - cache.xhat.data[i] * sum_dy_xhat);
                }
            }
        }
        (d_x, d_gamma, d_beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Identity,
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        let data = match self {
            Activation::Relu => x.data.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::LeakyRelu => {
                let slope = T::from_f64(LEAKY_SLOPE);
                x.data
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { slope * v })
                    .collect()
            }
            Activation::Tanh => x.data.iter().map(|&v| v.tanh()).collect(),
            Activation::Identity => x.data.clone(),
        };
        Tensor {
            shape: x.shape,
            data,
        }
    }

    /// d(loss)/d(pre-activation) given the pre-activation input and the
    /// activation output.
    pub fn backward<T: Scalar>(&self, x: &Tensor<T>, y: &Tensor<T>, d_y: &Tensor<T>) -> Tensor<T> {
        let data = match self {
            Activation::Relu => x
                .data
                .iter()
                .zip(&d_y.data)
                .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                .collect(),
            Activation::LeakyRelu => {
                let slope = T::from_f64(LEAKY_SLOPE);
                x.data
                    .iter()
                    .zip(&d_y.data)
                    .map(|(&v, &d)| if v > T::zero() { d } else { slope * d })
                    .collect()
            }
            Activation::Tanh => y
                .data
                .iter()
                .zip(&d_y.data)
                .map(|(&t, &d)| d * (T::one() - t * t))
                .collect(),
            Activation::Identity => d_y.data.clone(),
        };
        Tensor {
            shape: x.shape,
            data,
        }
    }
}
