//! Bilinear ROI Align with half-pixel aligned coordinates.
//!
//! A box in image pixels maps to feature coordinates `x * scale - 0.5`. The
//! box is split into `size × size` bins and each bin averages
//! `ratio × ratio` bilinear samples placed at sub-bin centres.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::BoundingBox;
use crate::tensor::{Mat, Tensor3};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiAlign {
    pub size: usize,
    pub sampling_ratio: usize,
    /// Feature cells per image pixel (1 / stride).
    pub spatial_scale: f64,
}

/// Up to four (flat index, weight) taps of one bilinear sample.
type Taps = [(usize, f64); 4];

fn bilinear_taps(y: f64, x: f64, h: usize, w: usize) -> Option<Taps> {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return None;
    }
    let (mut y, mut x) = (y.max(0.0), x.max(0.0));
    let mut y0 = y as usize;
    let mut x0 = x as usize;
    let y1;
    let x1;
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        y = y0 as f64;
    } else {
        y1 = y0 + 1;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        x = x0 as f64;
    } else {
        x1 = x0 + 1;
    }
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    Some([
        (y0 * w + x0, hy * hx),
        (y0 * w + x1, hy * lx),
        (y1 * w + x0, ly * hx),
        (y1 * w + x1, ly * lx),
    ])
}

impl RoiAlign {
    pub fn out_len(&self, channels: usize) -> usize {
        channels * self.size * self.size
    }

    /// Sampling taps of one box: `taps[starts[k]..starts[k + 1]]` belong to bin `k`.
    fn plan<F: Real>(&self, feat_h: usize, feat_w: usize, b: &BoundingBox) -> Result<(Vec<usize>, Vec<(usize, F)>)> {
        b.validate()?;
        let s = self.spatial_scale;
        let (x1, y1) = (b.x1 * s - 0.5, b.y1 * s - 0.5);
        let (rw, rh) = ((b.x2 - b.x1) * s, (b.y2 - b.y1) * s);
        let (bw, bh) = (rw / self.size as f64, rh / self.size as f64);
        let r = self.sampling_ratio;
        let norm = 1.0 / (r * r) as f64;
        let bins = self.size * self.size;
        let mut starts = Vec::with_capacity(bins + 1);
        let mut taps = Vec::with_capacity(bins * 4 * r * r);
        for py in 0..self.size {
            for px in 0..self.size {
                starts.push(taps.len());
                for iy in 0..r {
                    let y = y1 + py as f64 * bh + (iy as f64 + 0.5) * bh / r as f64;
                    for ix in 0..r {
                        let x = x1 + px as f64 * bw + (ix as f64 + 0.5) * bw / r as f64;
                        if let Some(t) = bilinear_taps(y, x, feat_h, feat_w) {
                            taps.extend(t.iter().map(|&(i, wgt)| (i, F::lit(wgt * norm))));
                        }
                    }
                }
            }
        }
        starts.push(taps.len());
        Ok((starts, taps))
    }

    /// Pools one `C×size×size` block per box; row `n` of the result is box `n`
    /// flattened channel-major.
    pub fn forward<F: Real>(&self, feat: &Tensor3<F>, boxes: &[BoundingBox]) -> Result<Mat<F>> {
        if feat.h == 0 || feat.w == 0 {
            return Err(Error::contract("empty feature map"));
        }
        let bins = self.size * self.size;
        let (c, plane) = (feat.c, feat.h * feat.w);
        let mut out = Mat::zeros(boxes.len(), self.out_len(c));
        // channel-last copy so each tap reads one contiguous run
        let mut hwc = vec![F::zero(); c * plane];
        for ch in 0..c {
            for (i, &v) in feat.channel(ch).iter().enumerate() {
                hwc[i * c + ch] = v;
            }
        }
        let mut acc = vec![F::zero(); c];
        for (n, b) in boxes.iter().enumerate() {
            let (starts, taps) = self.plan::<F>(feat.h, feat.w, b)?;
            let row = out.row_mut(n);
            for k in 0..bins {
                acc.iter_mut().for_each(|a| *a = F::zero());
                for &(i, wgt) in &taps[starts[k]..starts[k + 1]] {
                    for (a, &v) in acc.iter_mut().zip(&hwc[i * c..(i + 1) * c]) {
                        *a += wgt * v;
                    }
                }
                for (ch, &a) in acc.iter().enumerate() {
                    row[ch * bins + k] = a;
                }
            }
        }
        Ok(out)
    }

    /// Scatters `grad_out` (same layout as [`RoiAlign::forward`]) into `dfeat`.
    pub fn backward<F: Real>(&self, dfeat: &mut Tensor3<F>, boxes: &[BoundingBox], grad_out: &Mat<F>) -> Result<()> {
        let bins = self.size * self.size;
        let (c, plane) = (dfeat.c, dfeat.h * dfeat.w);
        let mut hwc = vec![F::zero(); c * plane];
        let mut g = vec![F::zero(); c];
        for (n, b) in boxes.iter().enumerate() {
            let (starts, taps) = self.plan::<F>(dfeat.h, dfeat.w, b)?;
            let row = grad_out.row(n);
            for k in 0..bins {
                for (ch, gv) in g.iter_mut().enumerate() {
                    *gv = row[ch * bins + k];
                }
                for &(i, wgt) in &taps[starts[k]..starts[k + 1]] {
                    for (d, &gv) in hwc[i * c..(i + 1) * c].iter_mut().zip(&g) {
                        *d += wgt * gv;
                    }
                }
            }
        }
        for ch in 0..c {
            let dst = &mut dfeat.data[ch * plane..(ch + 1) * plane];
            for (i, d) in dst.iter_mut().enumerate() {
                *d += hwc[i * c + ch];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn align() -> RoiAlign {
        RoiAlign { size: 7, sampling_ratio: 2, spatial_scale: 0.125 }
    }

    fn random_map(rng: &mut CounterRng, c: usize, h: usize, w: usize) -> Tensor3<f64> {
        Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let feat = Tensor3::from_vec(2, 16, 16, alloc::vec![0.75f64; 512]).unwrap();
        let out = align().forward(&feat, &[BoundingBox::new(3.0, 10.0, 77.0, 50.5)]).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let feat = Tensor3::<f64>::zeros(1, 16, 16);
        assert!(align().forward(&feat, &[BoundingBox::new(5.0, 5.0, 5.0, 9.0)]).is_err());
    }

    #[test]
    fn translation_by_one_cell_is_equivariant() {
        let mut rng = CounterRng::new(5);
        let feat = random_map(&mut rng, 3, 16, 16);
        let mut shifted = Tensor3::<f64>::zeros(3, 16, 16);
        for c in 0..3 {
            for y in 0..16 {
                for x in 1..16 {
                    *shifted.at_mut(c, y, x) = feat.at(c, y, x - 1);
                }
            }
        }
        let b = BoundingBox::new(20.0, 24.0, 70.0, 90.0);
        let a = align().forward(&feat, &[b]).unwrap();
        let s = align().forward(&shifted, &[b.translate(8.0, 0.0)]).unwrap();
        for (x, y) in a.as_slice().iter().zip(s.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = CounterRng::new(6);
        let feat = random_map(&mut rng, 2, 8, 9);
        let boxes = [BoundingBox::new(-4.0, 2.0, 40.0, 30.0), BoundingBox::new(10.0, 10.0, 70.0, 66.0)];
        let ra = align();
        let out = ra.forward(&feat, &boxes).unwrap();
        let g = Mat::from_vec(2, out.cols(), (0..2 * out.cols()).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let mut dfeat = Tensor3::zeros(2, 8, 9);
        ra.backward(&mut dfeat, &boxes, &g).unwrap();
        // <g, A f> == <Aᵀ g, f>
        let lhs: f64 = out.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = dfeat.data.iter().zip(&feat.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
