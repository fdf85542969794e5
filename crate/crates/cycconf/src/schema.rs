//! Serde mirrors of the core configuration types.

use cycconf_core::det::DetectorConfig;
use cycconf_core::synth::{DomainConfig, SceneConfig, TimeOfDay};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainJson {
    pub time_of_day: String,
    pub fog_alpha: f64,
    pub camera_shift_px: usize,
    pub brightness_scale: f64,
    pub noise_sigma: f64,
}

impl From<&DomainConfig> for DomainJson {
    fn from(d: &DomainConfig) -> Self {
        Self {
            time_of_day: d.time_of_day.as_str().into(),
            fog_alpha: d.fog_alpha,
            camera_shift_px: d.camera_shift_px,
            brightness_scale: d.brightness_scale,
            noise_sigma: d.noise_sigma,
        }
    }
}

impl DomainJson {
    pub fn to_config(&self) -> Result<DomainConfig, String> {
        let time_of_day =
            TimeOfDay::parse(&self.time_of_day).ok_or_else(|| format!("unknown time_of_day {:?}", self.time_of_day))?;
        let d = DomainConfig {
            time_of_day,
            fog_alpha: self.fog_alpha,
            camera_shift_px: self.camera_shift_px,
            brightness_scale: self.brightness_scale,
            noise_sigma: self.noise_sigma,
        };
        d.validate().map_err(|e| e.to_string())?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneJson {
    pub width: usize,
    pub height: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_size: f64,
    pub max_size: f64,
    pub max_speed: f64,
    pub jitter: f64,
}

impl Default for SceneJson {
    fn default() -> Self {
        (&SceneConfig::default()).into()
    }
}

impl From<&SceneConfig> for SceneJson {
    fn from(s: &SceneConfig) -> Self {
        Self {
            width: s.width,
            height: s.height,
            min_frames: s.min_frames,
            max_frames: s.max_frames,
            min_objects: s.min_objects,
            max_objects: s.max_objects,
            min_size: s.min_size,
            max_size: s.max_size,
            max_speed: s.max_speed,
            jitter: s.jitter,
        }
    }
}

impl SceneJson {
    pub fn to_config(&self) -> Result<SceneConfig, String> {
        let s = SceneConfig {
            width: self.width,
            height: self.height,
            min_frames: self.min_frames,
            max_frames: self.max_frames,
            min_objects: self.min_objects,
            max_objects: self.max_objects,
            min_size: self.min_size,
            max_size: self.max_size,
            max_speed: self.max_speed,
            jitter: self.jitter,
        };
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorJson {
    pub image_height: usize,
    pub image_width: usize,
    pub num_classes: usize,
    pub backbone_channels: [usize; 4],
    pub backbone_strides: [usize; 4],
    pub anchor_size: f64,
    pub proposal_top_k: usize,
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

impl From<&DetectorConfig> for DetectorJson {
    fn from(c: &DetectorConfig) -> Self {
        Self {
            image_height: c.image_height,
            image_width: c.image_width,
            num_classes: c.num_classes,
            backbone_channels: c.backbone_channels,
            backbone_strides: c.backbone_strides,
            anchor_size: c.anchor_size,
            proposal_top_k: c.proposal_top_k,
            max_ssl_proposals: c.max_ssl_proposals,
            roi_size: c.roi_size,
            roi_sampling_ratio: c.roi_sampling_ratio,
            box_head_hidden: c.box_head_hidden,
            encoder_hidden: c.encoder_hidden,
            embedding_dim: c.embedding_dim,
            rpn_batch: c.rpn_batch,
            rpn_positive_fraction: c.rpn_positive_fraction,
            rpn_positive_iou: c.rpn_positive_iou,
            rpn_negative_iou: c.rpn_negative_iou,
            roi_batch: c.roi_batch,
            roi_foreground_fraction: c.roi_foreground_fraction,
            roi_foreground_iou: c.roi_foreground_iou,
            smooth_l1_beta: c.smooth_l1_beta,
            score_floor: c.score_floor,
            nms_iou: c.nms_iou,
            max_detections: c.max_detections,
        }
    }
}

impl From<&DetectorJson> for DetectorConfig {
    fn from(c: &DetectorJson) -> Self {
        Self {
            image_height: c.image_height,
            image_width: c.image_width,
            num_classes: c.num_classes,
            backbone_channels: c.backbone_channels,
            backbone_strides: c.backbone_strides,
            anchor_size: c.anchor_size,
            proposal_top_k: c.proposal_top_k,
            max_ssl_proposals: c.max_ssl_proposals,
            roi_size: c.roi_size,
            roi_sampling_ratio: c.roi_sampling_ratio,
            box_head_hidden: c.box_head_hidden,
            encoder_hidden: c.encoder_hidden,
            embedding_dim: c.embedding_dim,
            rpn_batch: c.rpn_batch,
            rpn_positive_fraction: c.rpn_positive_fraction,
            rpn_positive_iou: c.rpn_positive_iou,
            rpn_negative_iou: c.rpn_negative_iou,
            roi_batch: c.roi_batch,
            roi_foreground_fraction: c.roi_foreground_fraction,
            roi_foreground_iou: c.roi_foreground_iou,
            smooth_l1_beta: c.smooth_l1_beta,
            score_floor: c.score_floor,
            nms_iou: c.nms_iou,
            max_detections: c.max_detections,
        }
    }
}
