//! Axis-aligned boxes in pixel coordinates.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Box with corners `(x1, y1)` (inclusive) and `(x2, y2)` (exclusive edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: Option<f64>,
    pub category: Option<usize>,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2, score: None, category: None }
    }

    /// Validated constructor; rejects empty or inverted boxes.
    pub fn checked(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self::new(x1, y1, x2, y2);
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::contract(alloc::format!(
                "degenerate box ({}, {}, {}, {})",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        Ok(())
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_category(mut self, category: usize) -> Self {
        self.category = Some(category);
        self
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn clip(&self, width: f64, height: f64) -> Self {
        Self {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
            ..*self
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self { x1: self.x1 + dx, x2: self.x2 + dx, y1: self.y1 + dy, y2: self.y2 + dy, ..*self }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order (ties keep input order).
pub fn nms(boxes: &[BoundingBox], threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (boxes[a].score.unwrap_or(0.0), boxes[b].score.unwrap_or(0.0));
        sb.partial_cmp(&sa).unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= threshold) {
            keep.push(i);
        }
    }
    keep
}

/// Scales applied to `(dx, dy, dw, dh)` regression targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaWeights(pub [f64; 4]);

/// Largest `dw`/`dh` accepted when decoding, `ln(1000 / 16)`.
pub const MAX_LOG_SCALE: f64 = 4.135_166_556_742_356;

/// Regression target that turns `reference` into `target`.
pub fn encode_deltas(reference: &BoundingBox, target: &BoundingBox, w: DeltaWeights) -> [f64; 4] {
    let (rx, ry) = reference.center();
    let (tx, ty) = target.center();
    let (rw, rh) = (reference.width(), reference.height());
    [
        w.0[0] * (tx - rx) / rw,
        w.0[1] * (ty - ry) / rh,
        w.0[2] * libm::log(target.width() / rw),
        w.0[3] * libm::log(target.height() / rh),
    ]
}

/// Inverse of [`encode_deltas`], with the log-scales clamped to [`MAX_LOG_SCALE`].
pub fn decode_deltas(reference: &BoundingBox, deltas: [f64; 4], w: DeltaWeights) -> BoundingBox {
    let (rx, ry) = reference.center();
    let (rw, rh) = (reference.width(), reference.height());
    let dx = deltas[0] / w.0[0];
    let dy = deltas[1] / w.0[1];
    let dw = (deltas[2] / w.0[2]).min(MAX_LOG_SCALE);
    let dh = (deltas[3] / w.0[3]).min(MAX_LOG_SCALE);
    let (cx, cy) = (rx + dx * rw, ry + dy * rh);
    let (pw, ph) = (rw * libm::exp(dw), rh * libm::exp(dh));
    BoundingBox::new(cx - 0.5 * pw, cy - 0.5 * ph, cx + 0.5 * pw, cy + 0.5 * ph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BoundingBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        let b = BoundingBox::new(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn deltas_round_trip() {
        let w = DeltaWeights([10.0, 10.0, 5.0, 5.0]);
        let r = BoundingBox::new(10.0, 12.0, 30.0, 40.0);
        let t = BoundingBox::new(14.0, 9.0, 28.5, 47.0);
        let back = decode_deltas(&r, encode_deltas(&r, &t, w), w);
        for (x, y) in back.coords().iter().zip(t.coords()) {
            assert!((x - y).abs() < 1e-9);
        }
        let same = decode_deltas(&r, [0.0; 4], w);
        assert_eq!(same.coords(), r.coords());
    }

    #[test]
    fn nms_keeps_highest_of_overlaps() {
        let boxes = [
            BoundingBox::new(0.0, 0.0, 10.0, 10.0).with_score(0.6),
            BoundingBox::new(1.0, 1.0, 11.0, 11.0).with_score(0.9),
            BoundingBox::new(20.0, 20.0, 30.0, 30.0).with_score(0.5),
        ];
        assert_eq!(nms(&boxes, 0.5), alloc::vec![1, 2]);
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(BoundingBox::checked(3.0, 0.0, 3.0, 1.0).is_err());
        assert!(BoundingBox::checked(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::checked(0.0, 0.0, 1.0, 1.0).is_ok());
    }
}
