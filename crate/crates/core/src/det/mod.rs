//! Toy two-stage detector: convolutional backbone, single-anchor proposal
//! head, ROI Align, box head and the instance encoder used for matching.

pub mod layers;
pub mod model;
pub mod params;
pub mod roi_align;
pub mod targets;

use alloc::vec::Vec;

use crate::geometry::BoundingBox;

pub use model::{DetectorConfig, DetectorModel};
pub use params::{ParamRef, ParamSpec, ParamStore};
pub use roi_align::RoiAlign;
pub use targets::DetectionLoss;

/// Proposals of one frame, sorted by descending objectness.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet {
    pub boxes: Vec<BoundingBox>,
    pub frame_id: i64,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Keeps proposals with score ≥ `threshold`, preserving order, capped at `max_count`.
pub fn select_proposals(proposals: &ProposalSet, threshold: f64, max_count: usize) -> ProposalSet {
    let boxes = proposals
        .boxes
        .iter()
        .filter(|b| b.score.unwrap_or(0.0) >= threshold)
        .take(max_count)
        .copied()
        .collect();
    ProposalSet { boxes, frame_id: proposals.frame_id }
}
