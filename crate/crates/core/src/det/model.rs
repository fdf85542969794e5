use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{relu_backward_in_place, relu_in_place, Conv2d, Linear};
use super::params::{ParamRef, ParamStore};
use super::roi_align::RoiAlign;
use super::{select_proposals, ProposalSet};
use crate::geometry::{decode_deltas, nms, BoundingBox, DeltaWeights};
use crate::rng::CounterRng;
use crate::tensor::{Mat, Tensor3};
use crate::{Error, Real, Result};

pub const RPN_DELTA_WEIGHTS: DeltaWeights = DeltaWeights([1.0, 1.0, 1.0, 1.0]);
pub const ROI_DELTA_WEIGHTS: DeltaWeights = DeltaWeights([10.0, 10.0, 5.0, 5.0]);

/// Architecture and sampling knobs of the toy detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub num_classes: usize,
    pub backbone_channels: [usize; 4],
    pub backbone_strides: [usize; 4],
    /// Side of the single square anchor placed at every feature cell.
    pub anchor_size: f64,
    /// Proposals kept after ranking by objectness.
    pub proposal_top_k: usize,
    /// Cap on proposals fed to the instance matching task per frame.
    pub max_ssl_proposals: usize,
    pub roi_size: usize,
    pub roi_sampling_ratio: usize,
    pub box_head_hidden: usize,
    pub encoder_hidden: usize,
    pub embedding_dim: usize,
    pub rpn_batch: usize,
    pub rpn_positive_fraction: f64,
    pub rpn_positive_iou: f64,
    pub rpn_negative_iou: f64,
    pub roi_batch: usize,
    pub roi_foreground_fraction: f64,
    pub roi_foreground_iou: f64,
    pub smooth_l1_beta: f64,
    pub score_floor: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            image_height: 128,
            image_width: 128,
            num_classes: 3,
            backbone_channels: [8, 16, 32, 32],
            backbone_strides: [2, 2, 2, 1],
            anchor_size: 28.0,
            proposal_top_k: 64,
            max_ssl_proposals: 64,
            roi_size: 7,
            roi_sampling_ratio: 2,
            box_head_hidden: 64,
            encoder_hidden: 16,
            embedding_dim: 128,
            rpn_batch: 64,
            rpn_positive_fraction: 0.5,
            rpn_positive_iou: 0.5,
            rpn_negative_iou: 0.3,
            roi_batch: 32,
            roi_foreground_fraction: 0.25,
            roi_foreground_iou: 0.5,
            smooth_l1_beta: 1.0 / 9.0,
            score_floor: 0.05,
            nms_iou: 0.5,
            max_detections: 100,
        }
    }
}

impl DetectorConfig {
    pub fn stride(&self) -> usize {
        self.backbone_strides.iter().product()
    }

    pub fn feature_channels(&self) -> usize {
        self.backbone_channels[3]
    }

    /// `ceil(size / stride)` for the stride-2, pad-1, 3×3 stack.
    pub fn feature_size(&self, h: usize, w: usize) -> (usize, usize) {
        self.backbone_strides.iter().fold((h, w), |(h, w), &s| {
            ((h + 2 - 3) / s + 1, (w + 2 - 3) / s + 1)
        })
    }
}

pub struct BackboneCache<F> {
    input: Tensor3<F>,
    cols: Vec<Vec<F>>,
    acts: Vec<Tensor3<F>>,
}

pub struct RpnCache<F> {
    col1: Vec<F>,
    hidden: Tensor3<F>,
    col2: Vec<F>,
    feat_h: usize,
    feat_w: usize,
}

pub struct BoxHeadCache<F> {
    input: Mat<F>,
    hidden: Vec<F>,
}

pub struct EncoderCache<F> {
    col: Vec<F>,
    hidden: Tensor3<F>,
    sums: Vec<F>,
    rois: usize,
}

pub struct RotationCache<F> {
    feat_h: usize,
    feat_w: usize,
    pooled: Vec<F>,
}

pub struct JigsawCache<F> {
    shapes: [(usize, usize); 4],
    pooled: Vec<F>,
}

/// Toy two-stage detector plus the auxiliary heads that share its backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel<F> {
    pub config: DetectorConfig,
    pub params: ParamStore<F>,
    backbone: [Conv2d; 4],
    rpn_conv: Conv2d,
    rpn_out: Conv2d,
    box_fc1: Linear,
    box_fc2: Linear,
    enc_conv: Conv2d,
    enc_proj: Linear,
    rot_fc: Linear,
    jig_fc: Linear,
    roi: RoiAlign,
}

fn conv(store: &mut ParamStore<impl Real>, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Conv2d {
    let weight = store.add(&format!("{name}.weight"), &[cout, cin, k, k]);
    let bias = store.add(&format!("{name}.bias"), &[cout]);
    Conv2d { weight, bias, cin, cout, kernel: k, stride, pad }
}

fn linear(store: &mut ParamStore<impl Real>, name: &str, fan_in: usize, fan_out: usize) -> Linear {
    let weight = store.add(&format!("{name}.weight"), &[fan_out, fan_in]);
    let bias = store.add(&format!("{name}.bias"), &[fan_out]);
    Linear { weight, bias, fan_in, fan_out }
}

/// Inclusive-exclusive input rows covered by kernel offset `k` of a 3×3,
/// pad-1 convolution over an `r`-wide map.
fn window(k: usize, r: usize) -> core::ops::Range<usize> {
    match k {
        0 => 0..r - 1,
        1 => 0..r,
        _ => 1..r,
    }
}

impl<F: Real> DetectorModel<F> {
    fn layout(config: &DetectorConfig) -> Result<Self> {
        if config.num_classes == 0 || config.roi_size < 2 || config.embedding_dim == 0 {
            return Err(Error::contract("invalid detector configuration"));
        }
        let mut store = ParamStore::default();
        let ch = config.backbone_channels;
        let st = config.backbone_strides;
        let backbone = [
            conv(&mut store, "backbone.0", 3, ch[0], 3, st[0], 1),
            conv(&mut store, "backbone.1", ch[0], ch[1], 3, st[1], 1),
            conv(&mut store, "backbone.2", ch[1], ch[2], 3, st[2], 1),
            conv(&mut store, "backbone.3", ch[2], ch[3], 3, st[3], 1),
        ];
        let c = ch[3];
        let rpn_conv = conv(&mut store, "rpn.conv", c, c, 3, 1, 1);
        let rpn_out = conv(&mut store, "rpn.out", c, 5, 1, 1, 0);
        let pooled = c * config.roi_size * config.roi_size;
        let box_fc1 = linear(&mut store, "box_head.fc1", pooled, config.box_head_hidden);
        let box_fc2 = linear(&mut store, "box_head.fc2", config.box_head_hidden, config.num_classes + 1 + 4);
        let enc_conv = conv(&mut store, "encoder.conv1", c, config.encoder_hidden, 3, 1, 1);
        let enc_proj = linear(&mut store, "encoder.conv2", config.encoder_hidden * 9, config.embedding_dim);
        let rot_fc = linear(&mut store, "rotation_head.fc", c * 16, 4);
        let jig_fc = linear(&mut store, "jigsaw_head.fc", c * 4, 24);
        let roi = RoiAlign {
            size: config.roi_size,
            sampling_ratio: config.roi_sampling_ratio,
            spatial_scale: 1.0 / config.stride() as f64,
        };
        Ok(Self {
            config: config.clone(),
            params: store,
            backbone,
            rpn_conv,
            rpn_out,
            box_fc1,
            box_fc2,
            enc_conv,
            enc_proj,
            rot_fc,
            jig_fc,
            roi,
        })
    }

    /// Fresh model with He-normal hidden layers, small-variance output heads
    /// and zero biases, all drawn from `seed`.
    pub fn new(config: DetectorConfig, seed: u64) -> Result<Self> {
        let mut model = Self::layout(&config)?;
        let mut rng = CounterRng::new(seed);
        let init = |store: &mut ParamStore<F>, r: ParamRef, std: f64, rng: &mut CounterRng| {
            for v in store.get_mut(r) {
                *v = F::lit(std * rng.normal());
            }
        };
        let he = |fan_in: usize| libm::sqrt(2.0 / fan_in as f64);
        for c in model.backbone.iter().chain([&model.rpn_conv, &model.enc_conv]) {
            init(&mut model.params, c.weight, he(c.cin * 9), &mut rng);
        }
        init(&mut model.params, model.rpn_out.weight, 0.01, &mut rng);
        init(&mut model.params, model.box_fc1.weight, he(model.box_fc1.fan_in), &mut rng);
        init(&mut model.params, model.box_fc2.weight, 0.01, &mut rng);
        let lecun = |fan_in: usize| libm::sqrt(1.0 / fan_in as f64);
        init(&mut model.params, model.enc_proj.weight, lecun(model.enc_proj.fan_in), &mut rng);
        init(&mut model.params, model.rot_fc.weight, lecun(model.rot_fc.fan_in), &mut rng);
        init(&mut model.params, model.jig_fc.weight, lecun(model.jig_fc.fan_in), &mut rng);
        Ok(model)
    }

    /// Rebuilds a model around stored parameters; the layout must match `config`.
    pub fn from_params(config: DetectorConfig, params: ParamStore<F>) -> Result<Self> {
        let mut model = Self::layout(&config)?;
        if model.params.specs() != params.specs() {
            return Err(Error::contract("parameter layout does not match the detector configuration"));
        }
        model.params = params;
        Ok(model)
    }

    pub fn cast<G: Real>(&self) -> DetectorModel<G> {
        DetectorModel {
            config: self.config.clone(),
            params: self.params.cast(),
            backbone: self.backbone,
            rpn_conv: self.rpn_conv,
            rpn_out: self.rpn_out,
            box_fc1: self.box_fc1,
            box_fc2: self.box_fc2,
            enc_conv: self.enc_conv,
            enc_proj: self.enc_proj,
            rot_fc: self.rot_fc,
            jig_fc: self.jig_fc,
            roi: self.roi,
        }
    }

    pub fn roi_align(&self) -> RoiAlign {
        self.roi
    }

    /// Full frames must match the configured size; pretext crops may be smaller.
    pub fn check_frame(&self, image: &Tensor3<f32>) -> Result<()> {
        let c = &self.config;
        if image.c != 3 || image.h != c.image_height || image.w != c.image_width {
            return Err(Error::contract(format!(
                "expected a 3x{}x{} frame, got {}x{}x{}",
                c.image_height, c.image_width, image.c, image.h, image.w
            )));
        }
        Ok(())
    }

    /// Backbone feature map (stride 8 by default). The image is standardised
    /// to zero mean and unit variance over all pixels first.
    pub fn backbone_forward(&self, image: &Tensor3<f32>) -> Result<(Tensor3<F>, BackboneCache<F>)> {
        if image.c != 3 || image.h == 0 || image.w == 0 {
            return Err(Error::contract(format!(
                "backbone expects a 3-channel image, got {}x{}x{}",
                image.c, image.h, image.w
            )));
        }
        let p = self.params.values();
        let n = image.data.len() as f64;
        let mean = image.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = image.data.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
        let scale = 1.0 / libm::sqrt(var + 1e-6);
        let input = image.map(|v| F::lit((v as f64 - mean) * scale));
        let mut cols = Vec::with_capacity(4);
        let mut acts: Vec<Tensor3<F>> = Vec::with_capacity(4);
        for layer in &self.backbone {
            let x = acts.last().unwrap_or(&input);
            let (mut y, col) = layer.forward(p, x)?;
            relu_in_place(&mut y.data);
            cols.push(col);
            acts.push(y);
        }
        let feat = acts[3].clone();
        Ok((feat, BackboneCache { input, cols, acts }))
    }

    pub fn backbone_backward(&self, cache: &BackboneCache<F>, dfeat: Tensor3<F>, grad: &mut [F]) {
        let p = self.params.values();
        let mut g = dfeat;
        for i in (0..4).rev() {
            relu_backward_in_place(&cache.acts[i].data, &mut g.data);
            let x = if i == 0 { &cache.input } else { &cache.acts[i - 1] };
            match self.backbone[i].backward(p, x.h, x.w, &cache.cols[i], &g, grad, i > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }

    /// Objectness logit (channel 0) and box deltas (channels 1..5) per cell.
    pub fn rpn_forward(&self, feat: &Tensor3<F>) -> Result<(Tensor3<F>, RpnCache<F>)> {
        let p = self.params.values();
        let (mut hidden, col1) = self.rpn_conv.forward(p, feat)?;
        relu_in_place(&mut hidden.data);
        let (out, col2) = self.rpn_out.forward(p, &hidden)?;
        Ok((out, RpnCache { col1, hidden, col2, feat_h: feat.h, feat_w: feat.w }))
    }

    pub fn rpn_backward(&self, cache: &RpnCache<F>, dout: &Tensor3<F>, grad: &mut [F]) -> Tensor3<F> {
        let p = self.params.values();
        let h = &cache.hidden;
        let mut dh = self.rpn_out.backward(p, h.h, h.w, &cache.col2, dout, grad, true).expect("input grad");
        relu_backward_in_place(&h.data, &mut dh.data);
        self.rpn_conv
            .backward(p, cache.feat_h, cache.feat_w, &cache.col1, &dh, grad, true)
            .expect("input grad")
    }

    /// One anchor per feature cell, row-major, centred on the cell.
    pub fn anchors(&self, feat_h: usize, feat_w: usize) -> Vec<BoundingBox> {
        let s = self.config.stride() as f64;
        let half = 0.5 * self.config.anchor_size;
        let mut out = Vec::with_capacity(feat_h * feat_w);
        for y in 0..feat_h {
            for x in 0..feat_w {
                let (cx, cy) = ((x as f64 + 0.5) * s, (y as f64 + 0.5) * s);
                out.push(BoundingBox::new(cx - half, cy - half, cx + half, cy + half));
            }
        }
        out
    }

    /// Decodes every anchor, ranks by objectness and keeps the top K, clipped
    /// to the image. No NMS.
    pub fn propose(&self, rpn_out: &Tensor3<F>, image_h: usize, image_w: usize, frame_id: i64) -> ProposalSet {
        let anchors = self.anchors(rpn_out.h, rpn_out.w);
        let plane = rpn_out.h * rpn_out.w;
        let mut scored: Vec<(usize, f64)> = (0..plane)
            .map(|i| {
                let logit = rpn_out.data[i].as_f64();
                (i, 1.0 / (1.0 + libm::exp(-logit)))
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
        let mut boxes = Vec::new();
        for (i, score) in scored {
            if boxes.len() >= self.config.proposal_top_k {
                break;
            }
            let d = [1, 2, 3, 4].map(|c| rpn_out.data[c * plane + i].as_f64());
            let b = decode_deltas(&anchors[i], d, RPN_DELTA_WEIGHTS).clip(image_w as f64, image_h as f64);
            if b.width() >= 1.0 && b.height() >= 1.0 {
                boxes.push(b.with_score(score));
            }
        }
        ProposalSet { boxes, frame_id }
    }

    /// Pooled `C×R×R` features for each box, one row per box.
    pub fn roi_features(&self, feat: &Tensor3<F>, boxes: &[BoundingBox]) -> Result<Mat<F>> {
        self.roi.forward(feat, boxes)
    }

    /// Class logits (`num_classes + 1`, background first) followed by 4
    /// class-agnostic deltas, one row per ROI.
    pub fn box_head_forward(&self, pooled: Mat<F>) -> (Mat<F>, BoxHeadCache<F>) {
        let p = self.params.values();
        let n = pooled.rows();
        let mut hidden = self.box_fc1.forward(p, pooled.as_slice(), n);
        relu_in_place(&mut hidden);
        let out = self.box_fc2.forward(p, &hidden, n);
        let out = Mat::from_vec(n, self.box_fc2.fan_out, out).expect("shape");
        (out, BoxHeadCache { input: pooled, hidden })
    }

    pub fn box_head_backward(&self, cache: &BoxHeadCache<F>, dout: &Mat<F>, grad: &mut [F]) -> Mat<F> {
        let p = self.params.values();
        let n = dout.rows();
        let mut dh = self.box_fc2.backward(p, &cache.hidden, dout.as_slice(), n, grad, true).expect("input grad");
        relu_backward_in_place(&cache.hidden, &mut dh);
        let dx = self.box_fc1.backward(p, cache.input.as_slice(), &dh, n, grad, true).expect("input grad");
        Mat::from_vec(n, self.box_fc1.fan_in, dx).expect("shape")
    }

    /// Two 3×3 convolutions and average pooling over each pooled ROI.
    ///
    /// The second convolution is linear and directly followed by the average,
    /// so it is evaluated on per-offset window sums of the first layer's output;
    /// the result is identical to running the convolution and pooling.
    ///
    /// All ROIs go through the first convolution at once: they are laid side
    /// by side with one zero column between neighbours, which is exactly the
    /// padding each ROI would see on its own. Outputs on separator columns
    /// are never read.
    pub fn encoder_forward(&self, pooled: &Mat<F>) -> Result<(Mat<F>, EncoderCache<F>)> {
        let c = self.config.feature_channels();
        let r = self.config.roi_size;
        if pooled.cols() != c * r * r {
            return Err(Error::contract(format!(
                "encoder expects {}x{r}x{r} ROI features, got rows of length {}",
                c,
                pooled.cols()
            )));
        }
        let p = self.params.values();
        let e = self.config.encoder_hidden;
        let n = pooled.rows();
        if n == 0 {
            let cache = EncoderCache { col: Vec::new(), hidden: Tensor3::zeros(e, r, 0), sums: Vec::new(), rois: 0 };
            return Ok((Mat::zeros(0, self.config.embedding_dim), cache));
        }
        let wide_w = n * (r + 1) - 1;
        let mut wide = Tensor3::zeros(c, r, wide_w);
        for i in 0..n {
            let row = pooled.row(i);
            for ch in 0..c {
                for y in 0..r {
                    let dst = (ch * r + y) * wide_w + i * (r + 1);
                    wide.data[dst..dst + r].copy_from_slice(&row[(ch * r + y) * r..][..r]);
                }
            }
        }
        let (mut h, col) = self.enc_conv.forward(p, &wide)?;
        relu_in_place(&mut h.data);
        let norm = F::one() / F::lit((r * r) as f64);
        let mut sums = vec![F::zero(); n * e * 9];
        for i in 0..n {
            let x0 = i * (r + 1);
            let s = &mut sums[i * e * 9..(i + 1) * e * 9];
            for ch in 0..e {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut acc = F::zero();
                        for y in window(ky, r) {
                            for x in window(kx, r) {
                                acc += h.at(ch, y, x0 + x);
                            }
                        }
                        s[(ch * 3 + ky) * 3 + kx] = acc * norm;
                    }
                }
            }
        }
        let emb = self.enc_proj.forward(p, &sums, n);
        Ok((Mat::from_vec(n, self.config.embedding_dim, emb)?, EncoderCache { col, hidden: h, sums, rois: n }))
    }

    pub fn encoder_backward(&self, cache: &EncoderCache<F>, demb: &Mat<F>, grad: &mut [F]) -> Mat<F> {
        let p = self.params.values();
        let (c, r, e) = (self.config.feature_channels(), self.config.roi_size, self.config.encoder_hidden);
        let n = cache.rois;
        let mut dpooled = Mat::zeros(n, c * r * r);
        if n == 0 {
            return dpooled;
        }
        let norm = F::one() / F::lit((r * r) as f64);
        let dsums = self.enc_proj.backward(p, &cache.sums, demb.as_slice(), n, grad, true).expect("input grad");
        let h = &cache.hidden;
        let mut dh = Tensor3::zeros(e, r, h.w);
        for i in 0..n {
            let x0 = i * (r + 1);
            let ds = &dsums[i * e * 9..(i + 1) * e * 9];
            for ch in 0..e {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let g = ds[(ch * 3 + ky) * 3 + kx] * norm;
                        for y in window(ky, r) {
                            for x in window(kx, r) {
                                *dh.at_mut(ch, y, x0 + x) += g;
                            }
                        }
                    }
                }
            }
        }
        relu_backward_in_place(&h.data, &mut dh.data);
        let dx = self.enc_conv.backward(p, r, h.w, &cache.col, &dh, grad, true).expect("input grad");
        for i in 0..n {
            let row = dpooled.row_mut(i);
            for ch in 0..c {
                for y in 0..r {
                    let src = (ch * r + y) * h.w + i * (r + 1);
                    row[(ch * r + y) * r..][..r].copy_from_slice(&dx.data[src..src + r]);
                }
            }
        }
        dpooled
    }

    /// Embeds a single `C×R×R` ROI feature tensor.
    pub fn instance_encoder(&self, roi: &Tensor3<F>) -> Result<Vec<F>> {
        let (c, r) = (self.config.feature_channels(), self.config.roi_size);
        if roi.c != c || roi.h != r || roi.w != r {
            return Err(Error::contract(format!(
                "instance encoder expects {c}x{r}x{r}, got {}x{}x{}",
                roi.c, roi.h, roi.w
            )));
        }
        let pooled = Mat::from_vec(1, c * r * r, roi.data.clone())?;
        Ok(self.encoder_forward(&pooled)?.0.into_vec())
    }

    /// Rotation logits from a 4×4 adaptive average pool of the feature map.
    pub fn rotation_head_forward(&self, feat: &Tensor3<F>) -> (Vec<F>, RotationCache<F>) {
        let c = feat.c;
        let mut pooled = vec![F::zero(); c * 16];
        for ch in 0..c {
            for by in 0..4 {
                let (y0, y1) = (by * feat.h / 4, ((by + 1) * feat.h).div_ceil(4));
                for bx in 0..4 {
                    let (x0, x1) = (bx * feat.w / 4, ((bx + 1) * feat.w).div_ceil(4));
                    let mut acc = F::zero();
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += feat.at(ch, y, x);
                        }
                    }
                    pooled[ch * 16 + by * 4 + bx] = acc / F::lit(((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        let logits = self.rot_fc.forward(self.params.values(), &pooled, 1);
        let cache = RotationCache { feat_h: feat.h, feat_w: feat.w, pooled };
        (logits, cache)
    }

    pub fn rotation_head_backward(&self, cache: &RotationCache<F>, dlogits: &[F], grad: &mut [F]) -> Tensor3<F> {
        let dp = self.rot_fc.backward(self.params.values(), &cache.pooled, dlogits, 1, grad, true).expect("input grad");
        let (h, w) = (cache.feat_h, cache.feat_w);
        let c = self.config.feature_channels();
        let mut dfeat = Tensor3::zeros(c, h, w);
        for ch in 0..c {
            for by in 0..4 {
                let (y0, y1) = (by * h / 4, ((by + 1) * h).div_ceil(4));
                for bx in 0..4 {
                    let (x0, x1) = (bx * w / 4, ((bx + 1) * w).div_ceil(4));
                    let g = dp[ch * 16 + by * 4 + bx] / F::lit(((y1 - y0) * (x1 - x0)) as f64);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            *dfeat.at_mut(ch, y, x) += g;
                        }
                    }
                }
            }
        }
        dfeat
    }

    /// Permutation logits from the globally pooled features of four tiles,
    /// concatenated in presentation order.
    pub fn jigsaw_head_forward(&self, tiles: [&Tensor3<F>; 4]) -> (Vec<F>, JigsawCache<F>) {
        let c = self.config.feature_channels();
        let mut pooled = vec![F::zero(); 4 * c];
        for (t, f) in tiles.iter().enumerate() {
            let n = F::lit((f.h * f.w) as f64);
            for ch in 0..c {
                pooled[t * c + ch] = f.channel(ch).iter().copied().sum::<F>() / n;
            }
        }
        let logits = self.jig_fc.forward(self.params.values(), &pooled, 1);
        let shapes = tiles.map(|f| (f.h, f.w));
        (logits, JigsawCache { shapes, pooled })
    }

    pub fn jigsaw_head_backward(&self, cache: &JigsawCache<F>, dlogits: &[F], grad: &mut [F]) -> [Tensor3<F>; 4] {
        let c = self.config.feature_channels();
        let dp = self.jig_fc.backward(self.params.values(), &cache.pooled, dlogits, 1, grad, true).expect("input grad");
        core::array::from_fn(|t| {
            let (h, w) = cache.shapes[t];
            let mut d = Tensor3::zeros(c, h, w);
            let n = F::lit((h * w) as f64);
            for ch in 0..c {
                let g = dp[t * c + ch] / n;
                d.data[ch * h * w..(ch + 1) * h * w].iter_mut().for_each(|v| *v = g);
            }
            d
        })
    }

    /// Proposals at or above `threshold` (capped at `max_ssl_proposals`) and
    /// their instance embeddings, one row per proposal.
    pub fn embed_proposals(&self, image: &Tensor3<f32>, threshold: f64, frame_id: i64) -> Result<(ProposalSet, Mat<F>)> {
        self.check_frame(image)?;
        let (feat, _) = self.backbone_forward(image)?;
        let (rpn, _) = self.rpn_forward(&feat)?;
        let all = self.propose(&rpn, image.h, image.w, frame_id);
        let kept = select_proposals(&all, threshold, self.config.max_ssl_proposals);
        let pooled = self.roi_features(&feat, &kept.boxes)?;
        let (emb, _) = self.encoder_forward(&pooled)?;
        Ok((kept, emb))
    }

    /// Full inference: proposals, box head, per-class score floor and NMS.
    /// Categories on the returned boxes are zero-based.
    pub fn detect(&self, image: &Tensor3<f32>) -> Result<Vec<BoundingBox>> {
        self.check_frame(image)?;
        let (feat, _) = self.backbone_forward(image)?;
        let (rpn_out, _) = self.rpn_forward(&feat)?;
        let proposals = self.propose(&rpn_out, image.h, image.w, 0);
        if proposals.boxes.is_empty() {
            return Ok(Vec::new());
        }
        let pooled = self.roi_features(&feat, &proposals.boxes)?;
        let (out, _) = self.box_head_forward(pooled);
        let k = self.config.num_classes;
        let mut per_class: Vec<Vec<BoundingBox>> = vec![Vec::new(); k];
        for (i, prop) in proposals.boxes.iter().enumerate() {
            let row: Vec<f64> = out.row(i).iter().map(|v| v.as_f64()).collect();
            let logits = &row[..k + 1];
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|&l| libm::exp(l - m)).sum();
            let deltas = [row[k + 1], row[k + 2], row[k + 3], row[k + 4]];
            let b = decode_deltas(prop, deltas, ROI_DELTA_WEIGHTS).clip(image.w as f64, image.h as f64);
            if b.width() < 1.0 || b.height() < 1.0 {
                continue;
            }
            for (cls, bucket) in per_class.iter_mut().enumerate() {
                let score = libm::exp(logits[cls + 1] - m) / z;
                if score >= self.config.score_floor {
                    bucket.push(b.with_score(score).with_category(cls));
                }
            }
        }
        let mut dets = Vec::new();
        for bucket in per_class {
            for i in nms(&bucket, self.config.nms_iou) {
                dets.push(bucket[i]);
            }
        }
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(core::cmp::Ordering::Equal));
        dets.truncate(self.config.max_detections);
        Ok(dets)
    }
}
