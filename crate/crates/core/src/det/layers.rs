//! Convolution and dense layers with explicit backward passes.
//!
//! Convolutions go through im2col and one GEMM; the column buffer is kept for
//! the weight gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::params::ParamRef;
use crate::linalg::{gemm, Op};
use crate::tensor::Tensor3;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamRef,
    pub bias: ParamRef,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    /// Output columns `ox` whose input column `ox * stride + kx - pad` lies in `0..w`.
    fn valid_span(&self, kx: usize, w: usize, ow: usize) -> core::ops::Range<usize> {
        let (s, p) = (self.stride, self.pad);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if w + p > kx { ((w + p - kx - 1) / s + 1).min(ow) } else { 0 };
        lo..hi.max(lo)
    }

    fn im2col<F: Real>(&self, x: &Tensor3<F>, oh: usize, ow: usize) -> Vec<F> {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let n = oh * ow;
        let mut col = vec![F::zero(); self.patch_len() * n];
        for c in 0..self.cin {
            let plane = x.channel(c);
            for ky in 0..k {
                for kx in 0..k {
                    let span = self.valid_span(kx, x.w, ow);
                    let row = &mut col[((c * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= x.h {
                            continue;
                        }
                        let src = &plane[(iy - p) * x.w..][..x.w];
                        let dst = &mut row[oy * ow..][..ow];
                        if s == 1 {
                            let x0 = span.start + kx - p;
                            dst[span.clone()].copy_from_slice(&src[x0..x0 + span.len()]);
                        } else {
                            for ox in span.clone() {
                                dst[ox] = src[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im<F: Real>(&self, col: &[F], h: usize, w: usize, oh: usize, ow: usize) -> Tensor3<F> {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let n = oh * ow;
        let mut out = Tensor3::zeros(self.cin, h, w);
        for c in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let span = self.valid_span(kx, w, ow);
                    let row = &col[((c * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= h {
                            continue;
                        }
                        let dst = &mut out.data[(c * h + iy - p) * w..][..w];
                        let src = &row[oy * ow..][..ow];
                        if s == 1 {
                            let x0 = span.start + kx - p;
                            for (d, &v) in dst[x0..x0 + span.len()].iter_mut().zip(&src[span.clone()]) {
                                *d += v;
                            }
                        } else {
                            for ox in span.clone() {
                                dst[ox * s + kx - p] += src[ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the pre-activation output and the column buffer.
    pub fn forward<F: Real>(&self, params: &[F], x: &Tensor3<F>) -> Result<(Tensor3<F>, Vec<F>)> {
        if x.c != self.cin {
            return Err(Error::contract(alloc::format!(
                "conv expects {} input channels, got {}",
                self.cin, x.c
            )));
        }
        if x.h + 2 * self.pad < self.kernel || x.w + 2 * self.pad < self.kernel {
            return Err(Error::contract("input smaller than the convolution kernel"));
        }
        let (oh, ow) = self.out_size(x.h, x.w);
        let col = self.im2col(x, oh, ow);
        let n = oh * ow;
        let mut out = Tensor3::zeros(self.cout, oh, ow);
        let w = &params[self.weight.range()];
        let b = &params[self.bias.range()];
        for (o, &bias) in b.iter().enumerate() {
            out.data[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = bias);
        }
        gemm(Op::N, Op::N, self.cout, self.patch_len(), n, w, &col, F::one(), &mut out.data);
        Ok((out, col))
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input
    /// gradient when `want_input` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        in_h: usize,
        in_w: usize,
        col: &[F],
        gout: &Tensor3<F>,
        grad: &mut [F],
        want_input: bool,
    ) -> Option<Tensor3<F>> {
        let n = gout.h * gout.w;
        let kl = self.patch_len();
        gemm(Op::N, Op::T, self.cout, n, kl, &gout.data, col, F::one(), &mut grad[self.weight.range()]);
        let gb = &mut grad[self.bias.range()];
        for (o, g) in gb.iter_mut().enumerate() {
            *g += gout.data[o * n..(o + 1) * n].iter().copied().sum::<F>();
        }
        if !want_input {
            return None;
        }
        let mut dcol = vec![F::zero(); kl * n];
        gemm(Op::T, Op::N, kl, self.cout, n, &params[self.weight.range()], &gout.data, F::zero(), &mut dcol);
        Some(self.col2im(&dcol, in_h, in_w, gout.h, gout.w))
    }
}

/// `y = x Wᵀ + b` over a batch of row vectors; `W` is stored out×in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamRef,
    pub bias: ParamRef,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn forward<F: Real>(&self, params: &[F], x: &[F], rows: usize) -> Vec<F> {
        debug_assert_eq!(x.len(), rows * self.fan_in);
        let mut y = vec![F::zero(); rows * self.fan_out];
        let b = &params[self.bias.range()];
        for r in 0..rows {
            y[r * self.fan_out..(r + 1) * self.fan_out].copy_from_slice(b);
        }
        gemm(Op::N, Op::T, rows, self.fan_in, self.fan_out, x, &params[self.weight.range()], F::one(), &mut y);
        y
    }

    pub fn backward<F: Real>(
        &self,
        params: &[F],
        x: &[F],
        gy: &[F],
        rows: usize,
        grad: &mut [F],
        want_input: bool,
    ) -> Option<Vec<F>> {
        gemm(Op::T, Op::N, self.fan_out, rows, self.fan_in, gy, x, F::one(), &mut grad[self.weight.range()]);
        let gb = &mut grad[self.bias.range()];
        for r in 0..rows {
            for (g, &v) in gb.iter_mut().zip(&gy[r * self.fan_out..(r + 1) * self.fan_out]) {
                *g += v;
            }
        }
        if !want_input {
            return None;
        }
        let mut gx = vec![F::zero(); rows * self.fan_in];
        gemm(Op::N, Op::N, rows, self.fan_out, self.fan_in, gy, &params[self.weight.range()], F::zero(), &mut gx);
        Some(gx)
    }
}

pub fn relu_in_place<F: Real>(x: &mut [F]) {
    for v in x {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Zeroes `g` wherever the post-ReLU activation `y` is not positive.
pub fn relu_backward_in_place<F: Real>(y: &[F], g: &mut [F]) {
    for (gv, &yv) in g.iter_mut().zip(y) {
        if yv <= F::zero() {
            *gv = F::zero();
        }
    }
}
