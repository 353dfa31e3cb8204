use rand::Rng;

use super::{Scalar, Tensor};

/// He-uniform bound `sqrt(6 / fan_in)`.
fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn he_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let b = he_bound(fan_in);
    let n = shape.iter().product();
    Tensor { shape: shape.to_vec(), values: (0..n).map(|_| T::of(rng.random_range(-b..b))).collect(), grad: None }
}

/// Valid output and input ranges for a kernel offset `d ∈ {-1, 0, 1}` along
/// an axis of length `n`: output positions `lo..hi` read input `lo+d..hi+d`.
#[inline]
fn span(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// 3×3 convolution, stride 1, zero "same" padding. Planes are row-major
/// `channels × height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × 3 × 3`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: Tensor::zeros(&[out_channels, in_channels, 3, 3]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn he_uniform<R: Rng>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: he_uniform(&[out_channels, in_channels, 3, 3], in_channels * 9, rng),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weight.values[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn forward(&self, input: &[T], h: usize, w: usize) -> Vec<T> {
        let plane = h * w;
        debug_assert_eq!(input.len(), self.in_channels * plane);
        let mut out = vec![T::zero(); self.out_channels * plane];
        for o in 0..self.out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = self.bias.values[o]);
            for i in 0..self.in_channels {
                let src = &input[i * plane..(i + 1) * plane];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(dx, w);
                        let k = self.w(o, i, ky, kx);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let d = &mut dst[y * w + x0..y * w + x1];
                            let s = &src[sy * w + (x0 as isize + dx) as usize..][..x1 - x0];
                            for (a, &b) in d.iter_mut().zip(s) {
                                *a += k * b;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients for `d_out` and, if requested, adds
    /// the input gradient into `d_input`.
    pub fn backward(&mut self, input: &[T], h: usize, w: usize, d_out: &[T], mut d_input: Option<&mut [T]>) {
        let plane = h * w;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut gw = self.weight.grad.take().unwrap_or_else(|| vec![T::zero(); self.weight.len()]);
        let gb = self.bias.grad_mut();
        for o in 0..cout {
            let d = &d_out[o * plane..(o + 1) * plane];
            let mut s = T::zero();
            for &v in d {
                s += v;
            }
            gb[o] += s;
        }
        for o in 0..cout {
            let d = &d_out[o * plane..(o + 1) * plane];
            for i in 0..cin {
                let src = &input[i * plane..(i + 1) * plane];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(dx, w);
                        let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                        let k = self.weight.values[widx];
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let dd = &d[y * w + x0..y * w + x1];
                            let off = sy * w + (x0 as isize + dx) as usize;
                            let s = &src[off..off + (x1 - x0)];
                            for (&a, &b) in dd.iter().zip(s) {
                                acc += a * b;
                            }
                            if let Some(di) = d_input.as_deref_mut() {
                                let t = &mut di[i * plane + off..i * plane + off + (x1 - x0)];
                                for (a, &b) in t.iter_mut().zip(dd) {
                                    *a += k * b;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        self.weight.grad = Some(gw);
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out × in`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: Tensor::zeros(&[out_dim, in_dim]), bias: Tensor::zeros(&[out_dim]) }
    }

    pub fn he_uniform<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self { in_dim, out_dim, weight: he_uniform(&[out_dim, in_dim], in_dim, rng), bias: Tensor::zeros(&[out_dim]) }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weight.values[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias.values[o];
                for (&a, &b) in row.iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    pub fn backward(&mut self, x: &[T], d_out: &[T], d_input: Option<&mut [T]>) {
        {
            let gb = self.bias.grad_mut();
            for (g, &d) in gb.iter_mut().zip(d_out) {
                *g += d;
            }
        }
        let n = self.in_dim;
        {
            let gw = self.weight.grad_mut();
            for (o, &d) in d_out.iter().enumerate() {
                for (g, &xi) in gw[o * n..(o + 1) * n].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        if let Some(di) = d_input {
            for (o, &d) in d_out.iter().enumerate() {
                for (g, &w) in di.iter_mut().zip(&self.weight.values[o * n..(o + 1) * n]) {
                    *g += w * d;
                }
            }
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `d` wherever the ReLU output was not positive.
pub fn relu_backward<T: Scalar>(out: &[T], d: &mut [T]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2×2 max pooling with stride 2; odd trailing rows and columns are
/// dropped. Returns the pooled planes and, per output cell, the flat input
/// index of the winning element (first maximum in row-major order).
pub fn max_pool2<T: Scalar>(input: &[T], channels: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(channels * oh * ow);
    let mut idx = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        let base = c * h * w;
        for py in 0..oh {
            for px in 0..ow {
                let mut best = base + 2 * py * w + 2 * px;
                for cand in [best + 1, best + w, best + w + 1] {
                    if input[cand] > input[best] {
                        best = cand;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub fn max_pool2_backward<T: Scalar>(d_out: &[T], idx: &[u32], input_len: usize) -> Vec<T> {
    let mut d = vec![T::zero(); input_len];
    for (&g, &i) in d_out.iter().zip(idx) {
        d[i as usize] += g;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_copies_input() {
        let mut conv = Conv2d::<f64>::zeros(1, 1);
        conv.weight.values[4] = 1.0;
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(conv.forward(&x, 4, 4), x);
    }

    #[test]
    fn hand_computed_convolution() {
        // 1×4×4 input, kernel with 1 at the left neighbour and 2 at the bottom neighbour, bias 0.5
        let mut conv = Conv2d::<f64>::zeros(1, 1);
        conv.weight.values[3] = 1.0; // (ky=1, kx=0) reads x-1
        conv.weight.values[7] = 2.0; // (ky=2, kx=1) reads y+1
        conv.bias.values[0] = 0.5;
        let x: Vec<f64> = (1..=16).map(|v| v as f64).collect();
        let y = conv.forward(&x, 4, 4);
        let mut expect = vec![0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                let left = if c > 0 { x[r * 4 + c - 1] } else { 0.0 };
                let below = if r < 3 { x[(r + 1) * 4 + c] } else { 0.0 };
                expect[r * 4 + c] = 0.5 + left + 2.0 * below;
            }
        }
        assert_eq!(y, expect);
        assert_eq!(y[0], 0.5 + 0.0 + 2.0 * 5.0);
        assert_eq!(y[15], 0.5 + 15.0);
    }

    #[test]
    fn pool_floors_odd_sizes() {
        let x: Vec<f64> = (0..15).map(|v| v as f64).collect(); // 1×3×5
        let (y, idx) = max_pool2(&x, 1, 3, 5);
        assert_eq!(y, vec![6.0, 8.0]);
        assert_eq!(idx, vec![6, 8]);
        let d = max_pool2_backward(&[1.0, 2.0], &idx, 15);
        assert_eq!(d[6], 1.0);
        assert_eq!(d[8], 2.0);
        assert_eq!(d.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn pool_ties_pick_first() {
        let (_, idx) = max_pool2(&[1.0f32; 4], 1, 2, 2);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn linear_forward_backward() {
        let mut l = Linear::<f64>::zeros(2, 1);
        l.weight.values = vec![2.0, -1.0];
        l.bias.values = vec![0.5];
        assert_eq!(l.forward(&[1.0, 3.0]), vec![-0.5]);
        let mut dx = vec![0.0; 2];
        l.backward(&[1.0, 3.0], &[2.0], Some(&mut dx));
        assert_eq!(l.weight.grad.as_deref(), Some(&[2.0, 6.0][..]));
        assert_eq!(l.bias.grad.as_deref(), Some(&[2.0][..]));
        assert_eq!(dx, vec![4.0, -2.0]);
    }

    #[test]
    fn relu_mask() {
        let mut x = vec![-1.0f64, 0.0, 2.0];
        relu_inplace(&mut x);
        assert_eq!(x, vec![0.0, 0.0, 2.0]);
        let mut d = vec![5.0, 5.0, 5.0];
        relu_backward(&x, &mut d);
        assert_eq!(d, vec![0.0, 0.0, 5.0]);
    }
}
