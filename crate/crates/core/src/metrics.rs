//! COCO-style detection metrics.
//!
//! Detections are matched greedily in descending score order (ties keep input
//! order). Each detection takes the unmatched ground truth box with the highest
//! IoU at or above the threshold, lowest index first on ties. Precision is made
//! monotone from the right and integrated over every recall step.

use alloc::vec;
use alloc::vec::Vec;

pub use crate::geometry::iou;
use crate::geometry::BoundingBox;

pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    core::array::from_fn(|i| 0.5 + 0.05 * i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn of_area(area: f64) -> Self {
        if area < SMALL_AREA {
            Self::Small
        } else if area < MEDIUM_AREA {
            Self::Medium
        } else {
            Self::Large
        }
    }

    pub fn of(b: &BoundingBox) -> Self {
        Self::of_area(b.area())
    }
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageResult {
    pub detections: Vec<BoundingBox>,
    pub ground_truth: Vec<BoundingBox>,
}

/// Scored match outcomes of one class pooled over images.
#[derive(Debug, Clone, PartialEq, Default)]
struct Matches {
    /// (score, is true positive) for every non-ignored detection.
    scored: Vec<(f64, bool)>,
    num_gt: usize,
}

fn match_image(dets: &[BoundingBox], gts: &[BoundingBox], threshold: f64, bucket: Option<SizeBucket>, out: &mut Matches) {
    let in_range = |b: &BoundingBox| bucket.is_none_or(|k| SizeBucket::of(b) == k);
    let ignored: Vec<bool> = gts.iter().map(|g| !in_range(g)).collect();
    out.num_gt += ignored.iter().filter(|&&i| !i).count();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (dets[a].score.unwrap_or(0.0), dets[b].score.unwrap_or(0.0));
        sb.partial_cmp(&sa).unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut taken = vec![false; gts.len()];
    for d in order {
        let det = &dets[d];
        // best unmatched GT, preferring counted boxes over ignored ones
        let mut best: Option<(bool, f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(det, gt);
            if v < threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bv, _)) => (!ignored[g] && bi) || (ignored[g] == bi && v > bv),
            };
            if better {
                best = Some((ignored[g], v, g));
            }
        }
        let score = det.score.unwrap_or(0.0);
        match best {
            Some((true, _, g)) => taken[g] = true,
            Some((false, _, g)) => {
                taken[g] = true;
                out.scored.push((score, true));
            }
            None => {
                if in_range(det) {
                    out.scored.push((score, false));
                }
            }
        }
    }
}

/// All-point interpolated AP from pooled matches; `None` without ground truth.
fn ap_from_matches(m: &Matches) -> Option<f64> {
    if m.num_gt == 0 {
        return None;
    }
    let mut scored = m.scored.clone();
    // stable: equal scores keep image then detection order
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    let n = m.num_gt as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    for &(_, hit) in &scored {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev) * p;
        prev = *r;
    }
    Some(ap)
}

/// AP of one class on one image at a single IoU threshold. Returns 0 when
/// there is no ground truth.
pub fn average_precision(detections: &[BoundingBox], ground_truth: &[BoundingBox], iou_threshold: f64) -> f64 {
    let mut m = Matches::default();
    match_image(detections, ground_truth, iou_threshold, None, &mut m);
    ap_from_matches(&m).unwrap_or(0.0)
}

/// AP pooled over several images of one class.
pub fn average_precision_multi(images: &[ImageResult], iou_threshold: f64, bucket: Option<SizeBucket>) -> Option<f64> {
    let mut m = Matches::default();
    for im in images {
        match_image(&im.detections, &im.ground_truth, iou_threshold, bucket, &mut m);
    }
    ap_from_matches(&m)
}

pub const METRIC_NAMES: [&str; 6] = ["AP", "AP50", "AP75", "APs", "APm", "APl"];

/// The six reported metrics; `None` where no ground truth contributes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub aps: Option<f64>,
    pub apm: Option<f64>,
    pub apl: Option<f64>,
}

impl MetricSet {
    pub fn values(&self) -> [Option<f64>; 6] {
        [self.ap, self.ap50, self.ap75, self.aps, self.apm, self.apl]
    }

    pub fn from_values(v: [Option<f64>; 6]) -> Self {
        Self { ap: v[0], ap50: v[1], ap75: v[2], aps: v[3], apm: v[4], apl: v[5] }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassMetrics {
    pub metrics: MetricSet,
    pub num_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApReport {
    pub per_class: Vec<ClassMetrics>,
    /// Arithmetic mean over classes that have ground truth for each metric.
    pub mean: MetricSet,
}

fn mean_over_thresholds(images: &[ImageResult], bucket: Option<SizeBucket>) -> Option<f64> {
    let vals: Option<Vec<f64>> = coco_thresholds().iter().map(|&t| average_precision_multi(images, t, bucket)).collect();
    vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Computes the report; `category` on every box must be `< num_classes`.
pub fn evaluate_detections(images: &[ImageResult], num_classes: usize) -> ApReport {
    let mut per_class = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let of_class = |v: &[BoundingBox]| v.iter().filter(|b| b.category == Some(k)).copied().collect();
        let sub: Vec<ImageResult> = images
            .iter()
            .map(|im| ImageResult { detections: of_class(&im.detections), ground_truth: of_class(&im.ground_truth) })
            .collect();
        let num_instances = sub.iter().map(|im| im.ground_truth.len()).sum();
        let metrics = MetricSet {
            ap: mean_over_thresholds(&sub, None),
            ap50: average_precision_multi(&sub, 0.5, None),
            ap75: average_precision_multi(&sub, 0.75, None),
            aps: mean_over_thresholds(&sub, Some(SizeBucket::Small)),
            apm: mean_over_thresholds(&sub, Some(SizeBucket::Medium)),
            apl: mean_over_thresholds(&sub, Some(SizeBucket::Large)),
        };
        per_class.push(ClassMetrics { metrics, num_instances });
    }
    let mean = MetricSet::from_values(core::array::from_fn(|i| {
        let vals: Vec<f64> = per_class.iter().filter_map(|c| c.metrics.values()[i]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }));
    ApReport { per_class, mean }
}
