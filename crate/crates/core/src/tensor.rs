//! Dense row-major matrices and channel-major image tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(alloc::format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::contract("ragged rows"));
            }
            data.extend(r.iter().map(|&x| F::lit(x)));
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<G: Real>(&self, f: impl Fn(F) -> G) -> Mat<G> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

/// Channel-major (C×H×W) tensor, used for images and feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<F> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Copy + Default> Tensor3<F> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![F::default(); c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::contract(alloc::format!(
                "tensor data has {} entries, expected {c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> F {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut F {
        &mut self.data[(c * self.h + y) * self.w + x]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.c == other.c && self.h == other.h && self.w == other.w
    }

    pub fn channel(&self, c: usize) -> &[F] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    /// Copies the `size_h × size_w` window starting at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, size_h: usize, size_w: usize) -> Result<Self> {
        if top + size_h > self.h || left + size_w > self.w {
            return Err(Error::contract(alloc::format!(
                "crop {size_h}x{size_w} at ({top},{left}) exceeds {}x{}",
                self.h, self.w
            )));
        }
        let mut out = Self::zeros(self.c, size_h, size_w);
        for c in 0..self.c {
            for y in 0..size_h {
                let src = (c * self.h + top + y) * self.w + left;
                let dst = (c * size_h + y) * size_w;
                out.data[dst..dst + size_w].copy_from_slice(&self.data[src..src + size_w]);
            }
        }
        Ok(out)
    }

    pub fn map<G: Copy + Default>(&self, f: impl Fn(F) -> G) -> Tensor3<G> {
        Tensor3 { c: self.c, h: self.h, w: self.w, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}
