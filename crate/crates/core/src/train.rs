//! Joint detection + auxiliary-task optimisation.
//!
//! A step runs every frame forward, evaluates the detection loss and the
//! configured auxiliary loss, then backpropagates
//! `det.total + w · ssl` where `w` is `gamma` for out-of-domain training and
//! `lambda_rot` for the unsupervised adaptation mode. The detection loss is the
//! mean over labelled frames; the matching loss is the mean over frame pairs
//! that kept at least one proposal on both sides; image-level pretext losses
//! are averaged per frame group (source, target) and the group means summed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cycmatch::{cycle_loss, matching_entropy, CycleConfig, InstanceEmbeddings, Polarity};
use crate::det::model::{BackboneCache, BoxHeadCache, EncoderCache, JigsawCache, RotationCache};
use crate::det::targets::{roi_loss, roi_targets, rpn_loss, rpn_targets, AnchorSample, RoiSample};
use crate::det::{select_proposals, DetectionLoss, DetectorModel, ProposalSet};
use crate::geometry::BoundingBox;
use crate::optim::{LrSchedule, Sgd, SgdConfig};
use crate::rng::CounterRng;
use crate::ssl_tasks::{jigsaw_loss, jigsaw_shuffle, rotate_and_label, rotation_loss, CropWindow, JIGSAW_CLASSES, ROTATION_CLASSES};
use crate::tensor::{Mat, Tensor3};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SslTask {
    CycConf,
    CycleConsistency,
    Rotation,
    Jigsaw,
    None,
}

impl SslTask {
    pub const ALL: [SslTask; 5] = [Self::CycConf, Self::CycleConsistency, Self::Rotation, Self::Jigsaw, Self::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CycConf => "cycconf",
            Self::CycleConsistency => "cycle_consistency",
            Self::Rotation => "rotation",
            Self::Jigsaw => "jigsaw",
            Self::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Matching polarity for the two cycle tasks.
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Self::CycConf => Some(Polarity::Confusion),
            Self::CycleConsistency => Some(Polarity::Consistency),
            _ => None,
        }
    }

    pub fn is_frame_based(self) -> bool {
        matches!(self, Self::Rotation | Self::Jigsaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Ood,
    Uda,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ood => "ood",
            Self::Uda => "uda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ood" => Some(Self::Ood),
            "uda" => Some(Self::Uda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub ssl_task: SslTask,
    /// Weight of the auxiliary loss in out-of-domain training.
    pub gamma: f64,
    /// Weight of the rotation losses in adaptation mode.
    pub lambda_rot: f64,
    /// Objectness threshold for proposals entering the matching task.
    pub score_threshold: f64,
    pub temperature: f64,
    pub symmetric: bool,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Frame pairs per step.
    pub batch_size: usize,
    pub total_iters: usize,
    pub lr_milestones: Vec<usize>,
    pub seed: u64,
    pub pair_gap: usize,
    /// Side of the square crop used by the rotation and jigsaw tasks.
    pub ssl_crop: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Ood,
            ssl_task: SslTask::CycConf,
            gamma: 0.01,
            lambda_rot: 0.5,
            score_threshold: 0.8,
            temperature: 1.0,
            symmetric: false,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 4,
            total_iters: 2000,
            lr_milestones: vec![1200, 1600],
            seed: 0,
            pair_gap: 1,
            ssl_crop: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.lambda_rot.is_finite() && self.lambda_rot >= 0.0) {
            return bad(format!("lambda_rot must be finite and >= 0, got {}", self.lambda_rot));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return bad(format!("score threshold must lie in [0, 1], got {}", self.score_threshold));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("lr, momentum and weight_decay out of range".into());
        }
        if self.batch_size == 0 || self.pair_gap == 0 {
            return bad("batch_size and pair_gap must be positive".into());
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lr milestones must be strictly increasing".into());
        }
        if self.lr_milestones.last().is_some_and(|&m| m >= self.total_iters) {
            return bad(format!("lr milestones must be below total_iters ({})", self.total_iters));
        }
        if self.ssl_crop < 16 || !self.ssl_crop.is_multiple_of(2) {
            return bad(format!("ssl_crop must be even and >= 16, got {}", self.ssl_crop));
        }
        if self.mode == TrainMode::Uda && self.ssl_task.polarity().is_some() {
            return bad(format!("task {} needs frame pairs and cannot run in uda mode", self.ssl_task.as_str()));
        }
        Ok(())
    }

    /// Weight applied to the auxiliary loss in the combined objective.
    pub fn ssl_weight(&self) -> f64 {
        match self.mode {
            TrainMode::Ood => self.gamma,
            TrainMode::Uda => self.lambda_rot,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { momentum: self.momentum, weight_decay: self.weight_decay }
    }

    pub fn cycle(&self) -> CycleConfig {
        CycleConfig { temperature: self.temperature, symmetric: self.symmetric }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub image: Tensor3<f32>,
    /// Ground truth with zero-based categories.
    pub boxes: Vec<BoundingBox>,
    /// Position inside its sequence.
    pub index: usize,
    pub frame_id: i64,
}

/// A target-domain frame; it carries no annotations by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledFrame {
    pub image: Tensor3<f32>,
    pub frame_id: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub sequence: usize,
    pub t0: LabeledFrame,
    pub t1: LabeledFrame,
    pub gap: usize,
}

impl FramePair {
    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 || self.t1.index != self.t0.index + self.gap {
            return Err(Error::contract(format!(
                "pair frames {} and {} do not match gap {}",
                self.t0.index, self.t1.index, self.gap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub det: DetectionLoss,
    pub ssl: f64,
    pub ssl_weight: f64,
    pub total: f64,
    pub iteration: usize,
    pub skipped_ssl: bool,
    /// Mean number of proposals at or above the threshold on the first and
    /// second frame of each pair.
    pub n_proposals_t0: f64,
    pub n_proposals_t1: f64,
    /// Mean entropy of the forward matching weights over non-skipped pairs.
    pub match_entropy: Option<f64>,
}

impl LossBundle {
    /// `det.total + ssl_weight · ssl`, or `det.total` when skipped.
    pub fn combine(det: DetectionLoss, ssl: f64, ssl_weight: f64, skipped: bool) -> (f64, f64) {
        if skipped {
            (0.0, det.total)
        } else {
            (ssl, det.total + ssl_weight * ssl)
        }
    }
}

/// Random decisions of one frame, fixed before differentiation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramePlan {
    pub proposals: ProposalSet,
    pub anchors: Vec<AnchorSample>,
    pub rois: Vec<RoiSample>,
    pub rotation: Option<(CropWindow, usize)>,
    pub jigsaw: Option<(CropWindow, usize)>,
}

/// One frame of a step.
#[derive(Debug, Clone, Copy)]
pub struct StepFrame<'a> {
    pub image: &'a Tensor3<f32>,
    /// Present for frames that contribute to the detection loss.
    pub gt: Option<&'a [BoundingBox]>,
    pub frame_id: i64,
    /// Averaging group of image-level pretext losses; `None` skips them.
    pub ssl_group: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    pub frames: Vec<StepFrame<'a>>,
    /// Frame index pairs for the matching tasks.
    pub pairs: Vec<(usize, usize)>,
    pub task: SslTask,
    pub ssl_weight: f64,
}

impl<'a> StepInput<'a> {
    /// Out-of-domain layout: both frames of every pair are labelled.
    pub fn ood(batch: &'a [FramePair], config: &TrainConfig) -> Self {
        let mut frames = Vec::with_capacity(2 * batch.len());
        let mut pairs = Vec::with_capacity(batch.len());
        for p in batch {
            for f in [&p.t0, &p.t1] {
                frames.push(StepFrame { image: &f.image, gt: Some(&f.boxes), frame_id: f.frame_id, ssl_group: Some(0) });
            }
            pairs.push((frames.len() - 2, frames.len() - 1));
        }
        Self { frames, pairs, task: config.ssl_task, ssl_weight: config.gamma }
    }

    /// Adaptation layout: labelled source frames first, then target frames
    /// that only feed the image-level pretext task.
    pub fn uda(source: &'a [FramePair], target: &'a [UnlabeledFrame], config: &TrainConfig) -> Self {
        let mut frames = Vec::with_capacity(2 * source.len() + target.len());
        let mut pairs = Vec::with_capacity(source.len());
        for p in source {
            for f in [&p.t0, &p.t1] {
                frames.push(StepFrame { image: &f.image, gt: Some(&f.boxes), frame_id: f.frame_id, ssl_group: Some(0) });
            }
            pairs.push((frames.len() - 2, frames.len() - 1));
        }
        for f in target {
            frames.push(StepFrame { image: &f.image, gt: None, frame_id: f.frame_id, ssl_group: Some(1) });
        }
        Self { frames, pairs, task: config.ssl_task, ssl_weight: config.lambda_rot }
    }
}

pub struct StepOutput<F> {
    pub bundle: LossBundle,
    pub grad: Option<Vec<F>>,
    pub plans: Vec<FramePlan>,
}

struct MainPass<F> {
    feat: Tensor3<F>,
    backbone: BackboneCache<F>,
    rpn: crate::det::model::RpnCache<F>,
    drpn: Option<Tensor3<F>>,
    head: Option<(BoxHeadCache<F>, Mat<F>)>,
}

struct CyclePass<F> {
    a: usize,
    b: usize,
    boxes: [Vec<BoundingBox>; 2],
    enc: [EncoderCache<F>; 2],
    grads: [Mat<F>; 2],
}

enum ImagePass<F> {
    Rotation { frame: usize, backbone: BackboneCache<F>, head: RotationCache<F>, dlogits: Vec<F> },
    Jigsaw { frame: usize, backbones: [BackboneCache<F>; 4], head: JigsawCache<F>, dlogits: Vec<F> },
}

fn scaled<F: Real>(v: &[F], s: F) -> Vec<F> {
    v.iter().map(|&x| x * s).collect()
}

fn plan_ssl(task: SslTask, frame: &StepFrame, crop: usize, rng: &mut CounterRng) -> Result<(Option<(CropWindow, usize)>, Option<(CropWindow, usize)>)> {
    if frame.ssl_group.is_none() {
        return Ok((None, None));
    }
    let (h, w) = (frame.image.h, frame.image.w);
    Ok(match task {
        SslTask::Rotation => {
            let win = CropWindow::random(rng, h, w, crop)?;
            (Some((win, rng.below(ROTATION_CLASSES))), None)
        }
        SslTask::Jigsaw => {
            let win = CropWindow::random(rng, h, w, crop)?;
            (None, Some((win, rng.below(JIGSAW_CLASSES))))
        }
        _ => (None, None),
    })
}

/// Forward pass, losses and (optionally) the parameter gradient of one step.
///
/// When `plans` is given, proposals, sampled targets and pretext crops are
/// taken from it instead of being drawn, which makes the objective a smooth
/// function of the parameters.
pub fn evaluate_step<F: Real>(
    model: &DetectorModel<F>,
    input: &StepInput,
    config: &TrainConfig,
    plans: Option<&[FramePlan]>,
    step_rng: &CounterRng,
    want_grad: bool,
) -> Result<StepOutput<F>> {
    let n = input.frames.len();
    if plans.is_some_and(|p| p.len() != n) {
        return Err(Error::contract("plan count does not match frame count"));
    }
    let dc = &model.config;
    let in_pair: Vec<bool> = (0..n)
        .map(|i| input.task.polarity().is_some() && input.pairs.iter().any(|&(a, b)| a == i || b == i))
        .collect();
    let mut out_plans: Vec<FramePlan> = Vec::with_capacity(n);
    let mut mains: Vec<Option<MainPass<F>>> = Vec::with_capacity(n);
    let mut det_losses = Vec::new();

    for (i, frame) in input.frames.iter().enumerate() {
        let frame_rng = step_rng.derive(i as u64);
        let mut det_rng = frame_rng.derive(0);
        let mut ssl_rng = frame_rng.derive(1);
        let mut plan = match plans {
            Some(p) => p[i].clone(),
            None => {
                let (rotation, jigsaw) = plan_ssl(input.task, frame, config.ssl_crop, &mut ssl_rng)?;
                FramePlan { rotation, jigsaw, ..FramePlan::default() }
            }
        };
        let needs_main = frame.gt.is_some() || in_pair[i];
        if !needs_main {
            mains.push(None);
            out_plans.push(plan);
            continue;
        }
        model.check_frame(frame.image)?;
        let (feat, backbone) = model.backbone_forward(frame.image)?;
        let (rpn_out, rpn) = model.rpn_forward(&feat)?;
        if plans.is_none() {
            plan.proposals = model.propose(&rpn_out, frame.image.h, frame.image.w, frame.frame_id);
        }
        let mut pass = MainPass { feat, backbone, rpn, drpn: None, head: None };
        if let Some(gt) = frame.gt {
            if plans.is_none() {
                let anchors = model.anchors(rpn_out.h, rpn_out.w);
                plan.anchors = rpn_targets(&anchors, gt, dc, &mut det_rng);
                plan.rois = roi_targets(&plan.proposals.boxes, gt, dc, &mut det_rng);
            }
            let (obj, rbox, drpn) = rpn_loss(&rpn_out, &plan.anchors, dc.smooth_l1_beta);
            pass.drpn = Some(drpn);
            let (mut cls, mut rreg) = (0.0, 0.0);
            if !plan.rois.is_empty() {
                let boxes: Vec<BoundingBox> = plan.rois.iter().map(|r| r.roi).collect();
                let pooled = model.roi_features(&pass.feat, &boxes)?;
                let (head_out, cache) = model.box_head_forward(pooled);
                let (c, r, dhead) = roi_loss(&head_out, &plan.rois, dc.num_classes, dc.smooth_l1_beta);
                cls = c;
                rreg = r;
                pass.head = Some((cache, dhead));
            }
            det_losses.push(DetectionLoss::new(obj, rbox, cls, rreg));
        }
        mains.push(Some(pass));
        out_plans.push(plan);
    }

    // proposal counts above the threshold, reported for every task
    let (mut n0, mut n1) = (0.0, 0.0);
    let counted: Vec<&(usize, usize)> = input.pairs.iter().filter(|&&(a, b)| mains[a].is_some() && mains[b].is_some()).collect();
    let select = |i: usize| select_proposals(&out_plans[i].proposals, config.score_threshold, dc.max_ssl_proposals);
    for &&(a, b) in &counted {
        n0 += select(a).len() as f64;
        n1 += select(b).len() as f64;
    }
    if !counted.is_empty() {
        n0 /= counted.len() as f64;
        n1 /= counted.len() as f64;
    }

    let mut cycles: Vec<CyclePass<F>> = Vec::new();
    let mut cycle_losses = Vec::new();
    let mut entropies = Vec::new();
    if let Some(polarity) = input.task.polarity() {
        for &(a, b) in &input.pairs {
            let boxes = [select(a).boxes, select(b).boxes];
            if boxes[0].is_empty() || boxes[1].is_empty() {
                continue;
            }
            let (Some(ma), Some(mb)) = (&mains[a], &mains[b]) else { continue };
            let (ea, ca) = model.encoder_forward(&model.roi_features(&ma.feat, &boxes[0])?)?;
            let (eb, cb) = model.encoder_forward(&model.roi_features(&mb.feat, &boxes[1])?)?;
            let u = InstanceEmbeddings::new(ea, input.frames[a].frame_id)?;
            let v = InstanceEmbeddings::new(eb, input.frames[b].frame_id)?;
            let res = cycle_loss(&u, &v, polarity, &config.cycle())?;
            if let Some(w) = &res.forward_weights {
                entropies.push(matching_entropy(w)?.as_f64());
            }
            cycle_losses.push(res.loss.as_f64());
            cycles.push(CyclePass { a, b, boxes, enc: [ca, cb], grads: [res.grads_u, res.grads_v] });
        }
    }

    let mut images: Vec<ImagePass<F>> = Vec::new();
    let mut group_losses: Vec<(usize, f64)> = Vec::new();
    for (i, frame) in input.frames.iter().enumerate() {
        let Some(group) = frame.ssl_group else { continue };
        let plan = &out_plans[i];
        if let Some((win, angle)) = plan.rotation {
            let s = rotate_and_label(frame.image, angle, win)?;
            let (feat, backbone) = model.backbone_forward(&s.image)?;
            let (logits, head) = model.rotation_head_forward(&feat);
            let (loss, dlogits) = rotation_loss(&logits, s.label)?;
            group_losses.push((group, loss.as_f64()));
            images.push(ImagePass::Rotation { frame: i, backbone, head, dlogits });
        }
        if let Some((win, perm)) = plan.jigsaw {
            let s = jigsaw_shuffle(frame.image, perm, win)?;
            let mut feats = Vec::with_capacity(4);
            let mut caches = Vec::with_capacity(4);
            for t in &s.tiles {
                let (f, c) = model.backbone_forward(t)?;
                feats.push(f);
                caches.push(c);
            }
            let (logits, head) = model.jigsaw_head_forward([&feats[0], &feats[1], &feats[2], &feats[3]]);
            let (loss, dlogits) = jigsaw_loss(&logits, s.label)?;
            group_losses.push((group, loss.as_f64()));
            let backbones: [BackboneCache<F>; 4] = caches.try_into().map_err(|_| Error::contract("jigsaw tiles"))?;
            images.push(ImagePass::Jigsaw { frame: i, backbones, head, dlogits });
        }
    }

    let det = DetectionLoss::mean(&det_losses);
    let mut group_count = [0usize; 2];
    let mut group_sum = [0.0f64; 2];
    for &(g, l) in &group_losses {
        group_count[g.min(1)] += 1;
        group_sum[g.min(1)] += l;
    }
    let (ssl_raw, skipped) = if input.task.polarity().is_some() {
        let k = cycle_losses.len();
        (cycle_losses.iter().sum::<f64>() / k.max(1) as f64, k == 0)
    } else if input.task.is_frame_based() {
        let s: f64 = (0..2).filter(|&g| group_count[g] > 0).map(|g| group_sum[g] / group_count[g] as f64).sum();
        (s, group_losses.is_empty())
    } else {
        (0.0, true)
    };
    let (ssl, total) = LossBundle::combine(det, ssl_raw, input.ssl_weight, skipped);
    let match_entropy = (!entropies.is_empty()).then(|| entropies.iter().sum::<f64>() / entropies.len() as f64);
    let bundle = LossBundle {
        det,
        ssl,
        ssl_weight: input.ssl_weight,
        total,
        iteration: 0,
        skipped_ssl: skipped,
        n_proposals_t0: n0,
        n_proposals_t1: n1,
        match_entropy,
    };
    if !(total.is_finite() && det.total.is_finite() && ssl.is_finite()) {
        return Err(Error::NonFinite(format!(
            "loss: rpn_objectness={} rpn_box={} roi_cls={} roi_box={} ssl={}",
            det.rpn_objectness, det.rpn_box, det.roi_cls, det.roi_box, ssl_raw
        )));
    }
    if !want_grad {
        return Ok(StepOutput { bundle, grad: None, plans: out_plans });
    }

    let mut grad = model.params.zeros_like();
    let det_scale = F::lit(1.0 / det_losses.len().max(1) as f64);
    let mut dfeats: Vec<Option<Tensor3<F>>> =
        mains.iter().map(|m| m.as_ref().map(|m| Tensor3::zeros(m.feat.c, m.feat.h, m.feat.w))).collect();
    for (i, m) in mains.iter().enumerate() {
        let (Some(m), Some(df)) = (m, dfeats[i].as_mut()) else { continue };
        if let Some(drpn) = &m.drpn {
            let d = drpn.map(|v| v * det_scale);
            let g = model.rpn_backward(&m.rpn, &d, &mut grad);
            df.data.iter_mut().zip(&g.data).for_each(|(a, &b)| *a += b);
        }
        if let Some((cache, dhead)) = &m.head {
            let d = dhead.map(|v| v * det_scale);
            let dpooled = model.box_head_backward(cache, &d, &mut grad);
            let boxes: Vec<BoundingBox> = out_plans[i].rois.iter().map(|r| r.roi).collect();
            model.roi_align().backward(df, &boxes, &dpooled)?;
        }
    }
    if input.ssl_weight > 0.0 && !skipped {
        let cyc_scale = F::lit(input.ssl_weight / cycles.len().max(1) as f64);
        for c in &cycles {
            for side in 0..2 {
                let frame = if side == 0 { c.a } else { c.b };
                let d = c.grads[side].map(|v| v * cyc_scale);
                let dpooled = model.encoder_backward(&c.enc[side], &d, &mut grad);
                let df = dfeats[frame].as_mut().expect("paired frames run the main pass");
                model.roi_align().backward(df, &c.boxes[side], &dpooled)?;
            }
        }
        for p in &images {
            let frame = match p {
                ImagePass::Rotation { frame, .. } | ImagePass::Jigsaw { frame, .. } => *frame,
            };
            let g = input.frames[frame].ssl_group.unwrap_or(0).min(1);
            let s = F::lit(input.ssl_weight / group_count[g] as f64);
            match p {
                ImagePass::Rotation { backbone, head, dlogits, .. } => {
                    let df = model.rotation_head_backward(head, &scaled(dlogits, s), &mut grad);
                    model.backbone_backward(backbone, df, &mut grad);
                }
                ImagePass::Jigsaw { backbones, head, dlogits, .. } => {
                    let dfs = model.jigsaw_head_backward(head, &scaled(dlogits, s), &mut grad);
                    for (cache, df) in backbones.iter().zip(dfs) {
                        model.backbone_backward(cache, df, &mut grad);
                    }
                }
            }
        }
    }
    for (m, df) in mains.iter().zip(dfeats) {
        if let (Some(m), Some(df)) = (m, df) {
            model.backbone_backward(&m.backbone, df, &mut grad);
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("parameter gradient"));
    }
    Ok(StepOutput { bundle, grad: Some(grad), plans: out_plans })
}

/// Stateful optimisation loop: model, SGD state and the learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Trainer<F> {
    pub model: DetectorModel<F>,
    pub config: TrainConfig,
    optimizer: Sgd<F>,
    schedule: LrSchedule,
    iteration: usize,
}

const STEP_STREAM: u64 = 0x7374_6570;

impl<F: Real> Trainer<F> {
    pub fn new(model: DetectorModel<F>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Sgd::new(config.sgd(), model.params.len());
        let schedule = LrSchedule::new(config.lr, config.lr_milestones.clone())?;
        Ok(Self { model, config, optimizer, schedule, iteration: 0 })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr_at(self.iteration)
    }

    /// Random stream of the current iteration.
    pub fn step_rng(&self) -> CounterRng {
        CounterRng::new(self.config.seed).derive(STEP_STREAM).derive(self.iteration as u64)
    }

    fn apply(&mut self, input: &StepInput) -> Result<LossBundle> {
        let rng = self.step_rng();
        let out = evaluate_step(&self.model, input, &self.config, None, &rng, true)?;
        let grad = out.grad.expect("gradient requested");
        let lr = self.lr();
        self.optimizer.step(self.model.params.values_mut(), &grad, lr)?;
        let mut bundle = out.bundle;
        bundle.iteration = self.iteration;
        self.iteration += 1;
        Ok(bundle)
    }

    /// One update on `det + gamma · ssl` over a batch of labelled pairs.
    pub fn joint_step(&mut self, batch: &[FramePair]) -> Result<LossBundle> {
        for p in batch {
            p.validate()?;
        }
        let input = StepInput::ood(batch, &self.config);
        self.apply(&input)
    }

    /// One update on `det(source) + lambda · (ssl(source) + ssl(target))`.
    pub fn uda_step(&mut self, source: &[FramePair], target: &[UnlabeledFrame]) -> Result<LossBundle> {
        if self.config.ssl_task.polarity().is_some() {
            return Err(Error::contract("adaptation mode needs a frame-based pretext task"));
        }
        for p in source {
            p.validate()?;
        }
        let input = StepInput::uda(source, target, &self.config);
        self.apply(&input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_is_exact() {
        let det = DetectionLoss::new(0.5, 0.5, 0.75, 0.25);
        assert_eq!(det.total, 2.0);
        let (ssl, total) = LossBundle::combine(det, 3.0, 0.01, false);
        assert_eq!(ssl, 3.0);
        assert_eq!(total, 2.0 + 0.01 * 3.0);
        assert!((total - 2.03).abs() < 1e-15);
        assert_eq!(LossBundle::combine(det, 3.0, 0.01, true), (0.0, 2.0));
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.gamma, 0.01);
        assert_eq!(c.lambda_rot, 0.5);
        assert!(TrainConfig { gamma: -1.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { score_threshold: 1.5, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { lr_milestones: alloc::vec![5, 3], ..c.clone() }.validate().is_err());
        assert!(TrainConfig { total_iters: 1000, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { mode: TrainMode::Uda, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { total_iters: 0, lr_milestones: alloc::vec![], ..c }.validate().is_ok());
    }
}
