//! Training targets for the proposal and box heads, and the detection losses.

use alloc::vec;
use alloc::vec::Vec;

use super::model::{DetectorConfig, ROI_DELTA_WEIGHTS, RPN_DELTA_WEIGHTS};
use crate::geometry::{encode_deltas, iou, BoundingBox};
use crate::rng::CounterRng;
use crate::tensor::{Mat, Tensor3};
use crate::Real;

/// One sampled anchor of the proposal head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSample {
    /// Row-major feature cell index.
    pub cell: usize,
    pub positive: bool,
    /// Regression target; meaningful only for positives.
    pub deltas: [f64; 4],
}

/// One sampled region for the box head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSample {
    pub roi: BoundingBox,
    /// 0 is background, `k + 1` is zero-based category `k`.
    pub class: usize,
    pub deltas: [f64; 4],
}

/// Per-frame detection loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionLoss {
    pub rpn_objectness: f64,
    pub rpn_box: f64,
    pub roi_cls: f64,
    pub roi_box: f64,
    pub total: f64,
}

impl DetectionLoss {
    pub fn new(rpn_objectness: f64, rpn_box: f64, roi_cls: f64, roi_box: f64) -> Self {
        Self { rpn_objectness, rpn_box, roi_cls, roi_box, total: rpn_objectness + rpn_box + roi_cls + roi_box }
    }

    /// Component-wise mean; `total` is recomputed as the component sum.
    pub fn mean(items: &[DetectionLoss]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&DetectionLoss) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::new(sum(|d| d.rpn_objectness), sum(|d| d.rpn_box), sum(|d| d.roi_cls), sum(|d| d.roi_box))
    }
}

fn take_random(rng: &mut CounterRng, mut items: Vec<usize>, n: usize) -> Vec<usize> {
    if items.len() > n {
        rng.shuffle(&mut items);
        items.truncate(n);
        items.sort_unstable();
    }
    items
}

/// Labels anchors by IoU and samples a balanced minibatch.
///
/// Positive: IoU ≥ `rpn_positive_iou` with some ground truth, or the best
/// anchor of a ground truth box. Negative: max IoU below `rpn_negative_iou`.
pub fn rpn_targets(
    anchors: &[BoundingBox],
    gt: &[BoundingBox],
    config: &DetectorConfig,
    rng: &mut CounterRng,
) -> Vec<AnchorSample> {
    let mut best_gt = vec![(0.0f64, usize::MAX); anchors.len()];
    let mut positive = vec![false; anchors.len()];
    for (g, gb) in gt.iter().enumerate() {
        let mut best = (0.0, usize::MAX);
        for (a, ab) in anchors.iter().enumerate() {
            let v = iou(ab, gb);
            if v > best_gt[a].0 {
                best_gt[a] = (v, g);
            }
            if v > best.0 {
                best = (v, a);
            }
        }
        if best.1 != usize::MAX {
            positive[best.1] = true;
            // a forced positive regresses towards the box that claimed it
            if best_gt[best.1].1 != g && best_gt[best.1].0 <= best.0 {
                best_gt[best.1] = (best.0, g);
            }
        }
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for a in 0..anchors.len() {
        let (m, _) = best_gt[a];
        if positive[a] || m >= config.rpn_positive_iou {
            pos.push(a);
        } else if m < config.rpn_negative_iou {
            neg.push(a);
        }
    }
    let max_pos = (config.rpn_batch as f64 * config.rpn_positive_fraction) as usize;
    let pos = take_random(rng, pos, max_pos);
    let neg = take_random(rng, neg, config.rpn_batch - pos.len());
    let mut out: Vec<AnchorSample> = pos
        .into_iter()
        .map(|a| AnchorSample {
            cell: a,
            positive: true,
            deltas: encode_deltas(&anchors[a], &gt[best_gt[a].1], RPN_DELTA_WEIGHTS),
        })
        .collect();
    out.extend(neg.into_iter().map(|a| AnchorSample { cell: a, positive: false, deltas: [0.0; 4] }));
    out
}

/// Labels proposals (plus the ground truth boxes themselves) and samples a
/// minibatch with a bounded foreground fraction.
pub fn roi_targets(
    proposals: &[BoundingBox],
    gt: &[BoundingBox],
    config: &DetectorConfig,
    rng: &mut CounterRng,
) -> Vec<RoiSample> {
    let candidates: Vec<BoundingBox> = proposals.iter().chain(gt.iter()).copied().collect();
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    let mut matched = vec![usize::MAX; candidates.len()];
    for (i, c) in candidates.iter().enumerate() {
        let mut best = (0.0, usize::MAX);
        for (g, gb) in gt.iter().enumerate() {
            let v = iou(c, gb);
            if v > best.0 {
                best = (v, g);
            }
        }
        matched[i] = best.1;
        if best.1 != usize::MAX && best.0 >= config.roi_foreground_iou {
            fg.push(i);
        } else {
            bg.push(i);
        }
    }
    let max_fg = (config.roi_batch as f64 * config.roi_foreground_fraction) as usize;
    let fg = take_random(rng, fg, max_fg);
    let bg = take_random(rng, bg, config.roi_batch - fg.len());
    let mut out: Vec<RoiSample> = fg
        .into_iter()
        .map(|i| {
            let g = &gt[matched[i]];
            RoiSample {
                roi: candidates[i],
                class: g.category.unwrap_or(0) + 1,
                deltas: encode_deltas(&candidates[i], g, ROI_DELTA_WEIGHTS),
            }
        })
        .collect();
    out.extend(bg.into_iter().map(|i| RoiSample { roi: candidates[i], class: 0, deltas: [0.0; 4] }));
    out
}

/// `smooth_l1(x) = 0.5 x² / β` for `|x| < β`, else `|x| - 0.5 β`; returns
/// value and derivative.
pub fn smooth_l1(x: f64, beta: f64) -> (f64, f64) {
    if x.abs() < beta {
        (0.5 * x * x / beta, x / beta)
    } else {
        (x.abs() - 0.5 * beta, x.signum())
    }
}

/// Binary cross-entropy on a logit; returns value and d/dlogit.
pub fn bce_with_logit(logit: f64, target: bool) -> (f64, f64) {
    // log(1 + e^-|z|) + max(z, 0) - z·t
    let t = if target { 1.0 } else { 0.0 };
    let loss = libm::log1p(libm::exp(-logit.abs())) + logit.max(0.0) - logit * t;
    let p = 1.0 / (1.0 + libm::exp(-logit));
    (loss, p - t)
}

/// Objectness BCE averaged over the sampled anchors and smooth-L1 box loss
/// summed over positives divided by the sample count. Returns the gradient
/// with respect to the raw proposal-head output.
pub fn rpn_loss<F: Real>(rpn_out: &Tensor3<F>, samples: &[AnchorSample], beta: f64) -> (f64, f64, Tensor3<F>) {
    let mut grad = Tensor3::zeros(rpn_out.c, rpn_out.h, rpn_out.w);
    if samples.is_empty() {
        return (0.0, 0.0, grad);
    }
    let plane = rpn_out.h * rpn_out.w;
    let norm = 1.0 / samples.len() as f64;
    let (mut obj, mut reg) = (0.0, 0.0);
    for s in samples {
        let (l, g) = bce_with_logit(rpn_out.data[s.cell].as_f64(), s.positive);
        obj += l * norm;
        grad.data[s.cell] += F::lit(g * norm);
        if s.positive {
            for k in 0..4 {
                let idx = (k + 1) * plane + s.cell;
                let (l, g) = smooth_l1(rpn_out.data[idx].as_f64() - s.deltas[k], beta);
                reg += l * norm;
                grad.data[idx] += F::lit(g * norm);
            }
        }
    }
    (obj, reg, grad)
}

/// Softmax cross-entropy over `num_classes + 1` logits averaged over ROIs,
/// plus smooth-L1 on foreground deltas divided by the ROI count.
pub fn roi_loss<F: Real>(head_out: &Mat<F>, samples: &[RoiSample], num_classes: usize, beta: f64) -> (f64, f64, Mat<F>) {
    let mut grad = Mat::zeros(head_out.rows(), head_out.cols());
    if samples.is_empty() {
        return (0.0, 0.0, grad);
    }
    let k1 = num_classes + 1;
    let norm = 1.0 / samples.len() as f64;
    let (mut cls, mut reg) = (0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        let row: Vec<f64> = head_out.row(i).iter().map(|v| v.as_f64()).collect();
        let m = row[..k1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row[..k1].iter().map(|&l| libm::exp(l - m)).sum();
        cls += ((m - row[s.class]) + libm::log(z)) * norm;
        let g = grad.row_mut(i);
        for c in 0..k1 {
            let p = libm::exp(row[c] - m) / z;
            let t = if c == s.class { 1.0 } else { 0.0 };
            g[c] = F::lit((p - t) * norm);
        }
        if s.class > 0 {
            for k in 0..4 {
                let (l, d) = smooth_l1(row[k1 + k] - s.deltas[k], beta);
                reg += l * norm;
                g[k1 + k] = F::lit(d * norm);
            }
        }
    }
    (cls, reg, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_tiny_loss() {
        let mut out = Tensor3::<f64>::zeros(5, 1, 2);
        let samples = [
            AnchorSample { cell: 0, positive: true, deltas: [0.1, -0.2, 0.3, 0.0] },
            AnchorSample { cell: 1, positive: false, deltas: [0.0; 4] },
        ];
        out.data[0] = 40.0;
        out.data[1] = -40.0;
        for k in 0..4 {
            out.data[(k + 1) * 2] = samples[0].deltas[k];
        }
        let (obj, reg, _) = rpn_loss(&out, &samples, 1.0 / 9.0);
        assert!(obj < 1e-12);
        assert_eq!(reg, 0.0);

        let mut head = Mat::<f64>::zeros(2, 8);
        let rois = [
            RoiSample { roi: BoundingBox::new(0.0, 0.0, 4.0, 4.0), class: 2, deltas: [0.5, 0.5, -0.1, 0.2] },
            RoiSample { roi: BoundingBox::new(0.0, 0.0, 4.0, 4.0), class: 0, deltas: [0.0; 4] },
        ];
        head.set(0, 2, 40.0);
        for k in 0..4 {
            head.set(0, 4 + k, rois[0].deltas[k]);
        }
        head.set(1, 0, 40.0);
        let (cls, reg, _) = roi_loss(&head, &rois, 3, 1.0 / 9.0);
        assert!(cls < 1e-12);
        assert_eq!(reg, 0.0);
    }

    #[test]
    fn total_is_component_sum() {
        let d = DetectionLoss::new(0.25, 0.5, 1.125, 2.0);
        assert_eq!(d.total, 0.25 + 0.5 + 1.125 + 2.0);
        let m = DetectionLoss::mean(&[d, DetectionLoss::new(1.0, 0.0, 0.0, 0.5)]);
        assert_eq!(m.total, m.rpn_objectness + m.rpn_box + m.roi_cls + m.roi_box);
    }

    #[test]
    fn single_anchor_matches_scalar_oracle() {
        let logit: f64 = 0.7;
        let delta = [0.3, -0.05, 0.02, 0.4];
        let target = [0.1, 0.0, 0.5, 0.45];
        let mut out = Tensor3::<f64>::zeros(5, 1, 1);
        out.data[0] = logit;
        out.data[1..].copy_from_slice(&delta);
        let s = [AnchorSample { cell: 0, positive: true, deltas: target }];
        let beta = 1.0 / 9.0;
        let (obj, reg, grad) = rpn_loss(&out, &s, beta);
        // scalar oracle
        let p = 1.0 / (1.0 + (-logit).exp());
        let obj_ref = -(p.ln());
        let mut reg_ref = 0.0;
        for k in 0..4 {
            let x: f64 = delta[k] - target[k];
            reg_ref += if x.abs() < beta { 0.5 * x * x / beta } else { x.abs() - 0.5 * beta };
        }
        assert!((obj - obj_ref).abs() < 1e-10);
        assert!((reg - reg_ref).abs() < 1e-10);
        assert!((grad.data[0] - (p - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn rpn_targets_force_best_anchor_positive() {
        let config = DetectorConfig::default();
        let anchors = [BoundingBox::new(0.0, 0.0, 28.0, 28.0), BoundingBox::new(100.0, 100.0, 128.0, 128.0)];
        let gt = [BoundingBox::new(8.0, 8.0, 20.0, 20.0).with_category(1)];
        let mut rng = CounterRng::new(0);
        let s = rpn_targets(&anchors, &gt, &config, &mut rng);
        assert_eq!(s.len(), 2);
        assert!(s[0].positive && s[0].cell == 0);
        assert!(!s[1].positive && s[1].cell == 1);
    }

    #[test]
    fn roi_targets_include_ground_truth() {
        let config = DetectorConfig::default();
        let gt = [BoundingBox::new(8.0, 8.0, 30.0, 30.0).with_category(2)];
        let mut rng = CounterRng::new(0);
        let s = roi_targets(&[BoundingBox::new(90.0, 90.0, 100.0, 100.0)], &gt, &config, &mut rng);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].class, 3);
        assert_eq!(s[0].deltas, [0.0; 4]);
        assert_eq!(s[1].class, 0);
    }
}
