//! Dataset ingestion, attribute splits and frame-pair sampling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cycconf_core::geometry::BoundingBox;
use cycconf_core::rng::CounterRng;
use cycconf_core::synth::{DomainConfig, Frame, FrameAnnotation, SceneConfig, ATTRIBUTES};
use cycconf_core::train::{FramePair, LabeledFrame, UnlabeledFrame};

use crate::error::{Error, Result};
use crate::fsutil::{read_json, sha256_file};
use crate::imageio::read_png;
use crate::synthvid::{AnnotationFile, DatasetManifest, SequenceEntry};

/// Attributes accepted by [`split_by_attribute`]: the manifest's domain name
/// and split, plus the attributes derived from the domain configuration.
pub const SPLIT_ATTRIBUTES: [&str; 5] = ["domain", "split", ATTRIBUTES[0], ATTRIBUTES[1], ATTRIBUTES[2]];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub sequence_id: String,
    pub domain_name: String,
    pub split: String,
    pub domain: DomainConfig,
    pub seed: u64,
    pub frame_paths: Vec<PathBuf>,
    pub annotation_path: PathBuf,
    pub frames: Vec<Frame>,
    /// `None` when loaded without labels.
    pub annotations: Option<Vec<FrameAnnotation>>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn attribute(&self, key: &str) -> Option<String> {
        match key {
            "domain" => Some(self.domain_name.clone()),
            "split" => Some(self.split.clone()),
            _ => self.domain.attribute(key).map(String::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub manifest_sha256: String,
    pub scene: SceneConfig,
    pub sequences: Vec<Arc<SequenceRecord>>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.sequences.iter().map(|s| s.sequence_id.as_str()).collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.sequences.iter().all(|s| s.annotations.is_some())
    }

    /// Attribute value → sequence ids, for one attribute.
    pub fn attribute_index(&self, attribute: &str) -> Result<BTreeMap<String, Vec<String>>> {
        check_attribute(attribute)?;
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for s in &self.sequences {
            let v = s.attribute(attribute).expect("checked attribute");
            out.entry(v).or_default().push(s.sequence_id.clone());
        }
        Ok(out)
    }

    /// Both frames of a pair with ground truth; panics on an unlabelled index.
    pub fn labeled_frame(&self, sequence: usize, t: usize) -> LabeledFrame {
        let s = &self.sequences[sequence];
        let ann = s.annotations.as_ref().expect("labelled dataset");
        LabeledFrame { image: s.frames[t].to_tensor(), boxes: ann[t].boxes.clone(), index: t, frame_id: frame_id(sequence, t) }
    }
}

/// Unique id of frame `t` of the `sequence`-th sequence of an index.
pub fn frame_id(sequence: usize, t: usize) -> i64 {
    (sequence as i64) * 1_000_000 + t as i64
}

fn check_attribute(attribute: &str) -> Result<()> {
    if SPLIT_ATTRIBUTES.contains(&attribute) {
        Ok(())
    } else {
        Err(Error::Usage(format!("unknown attribute {attribute:?}; expected one of {}", SPLIT_ATTRIBUTES.join(", "))))
    }
}

/// Loads and validates a dataset with its annotations.
pub fn load_dataset(dir: &Path) -> Result<DatasetIndex> {
    load(dir, true)
}

/// Loads frames only. Annotation files are never opened, so they may be
/// absent.
pub fn load_unlabeled(dir: &Path) -> Result<DatasetIndex> {
    load(dir, false)
}

fn load(dir: &Path, labeled: bool) -> Result<DatasetIndex> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let manifest_path = dir.join("manifest.json");
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let scene = manifest.scene.to_config().map_err(|m| Error::format(&manifest_path, m))?;
    let mut ids = std::collections::BTreeSet::new();
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        if !ids.insert(entry.sequence_id.as_str()) {
            return Err(Error::format(&manifest_path, format!("duplicate sequence id {}", entry.sequence_id)));
        }
        sequences.push(Arc::new(load_sequence(dir, &manifest_path, entry, &scene, labeled)?));
    }
    Ok(DatasetIndex { root: dir.to_path_buf(), manifest_sha256: sha256_file(&manifest_path)?, scene, sequences })
}

fn load_sequence(
    dir: &Path,
    manifest_path: &Path,
    entry: &SequenceEntry,
    scene: &SceneConfig,
    labeled: bool,
) -> Result<SequenceRecord> {
    let domain = entry.domain.to_config().map_err(|m| Error::format(manifest_path, format!("{}: {m}", entry.sequence_id)))?;
    if entry.frames.len() < 2 {
        return Err(Error::format(manifest_path, format!("sequence {} has fewer than 2 frames", entry.sequence_id)));
    }
    let frame_paths: Vec<PathBuf> = entry.frames.iter().map(|f| dir.join(f)).collect();
    let mut frames = Vec::with_capacity(frame_paths.len());
    for p in &frame_paths {
        let f = read_png(p)?;
        if (f.width, f.height) != (scene.width, scene.height) {
            return Err(Error::format(p, format!("frame is {}x{}, scene is {}x{}", f.width, f.height, scene.width, scene.height)));
        }
        frames.push(f);
    }
    let annotation_path = dir.join(&entry.annotations);
    let annotations = if labeled {
        Some(load_annotations(&annotation_path, entry, scene)?)
    } else {
        None
    };
    Ok(SequenceRecord {
        sequence_id: entry.sequence_id.clone(),
        domain_name: entry.domain_name.clone(),
        split: entry.split.clone(),
        domain,
        seed: entry.seed,
        frame_paths,
        annotation_path,
        frames,
        annotations,
    })
}

fn load_annotations(path: &Path, entry: &SequenceEntry, scene: &SceneConfig) -> Result<Vec<FrameAnnotation>> {
    let file: AnnotationFile = read_json(path)?;
    if file.sequence_id != entry.sequence_id {
        return Err(Error::format(path, format!("annotations belong to {}, expected {}", file.sequence_id, entry.sequence_id)));
    }
    if file.frames.len() != entry.frames.len() {
        return Err(Error::format(path, format!("{} annotated frames for {} images", file.frames.len(), entry.frames.len())));
    }
    let (w, h) = (scene.width as f64, scene.height as f64);
    let mut out = Vec::with_capacity(file.frames.len());
    for (t, f) in file.frames.iter().enumerate() {
        if f.index != t {
            return Err(Error::format(path, format!("frame entry {t} carries index {}", f.index)));
        }
        if f.boxes.len() != f.categories.len() {
            return Err(Error::format(path, format!("frame {t}: {} boxes but {} categories", f.boxes.len(), f.categories.len())));
        }
        let mut boxes = Vec::with_capacity(f.boxes.len());
        for (&[x1, y1, x2, y2], &c) in f.boxes.iter().zip(&f.categories) {
            let b = BoundingBox::checked(x1, y1, x2, y2)
                .map_err(|e| Error::format(path, format!("frame {t}: box {:?}: {e}", [x1, y1, x2, y2])))?;
            if x1 < 0.0 || y1 < 0.0 || x2 > w || y2 > h {
                return Err(Error::format(path, format!("frame {t}: box {:?} leaves the {w}x{h} frame", [x1, y1, x2, y2])));
            }
            if c >= scene_classes() {
                return Err(Error::format(path, format!("frame {t}: category {c} out of range")));
            }
            boxes.push(b.with_category(c));
        }
        out.push(FrameAnnotation { index: t, boxes });
    }
    Ok(out)
}

fn scene_classes() -> usize {
    cycconf_core::synth::CATEGORY_NAMES.len()
}

/// Sequences whose `attribute` equals `value`; the complement is the same
/// call with every other value.
pub fn split_by_attribute(index: &DatasetIndex, attribute: &str, value: &str) -> Result<DatasetIndex> {
    check_attribute(attribute)?;
    let sequences =
        index.sequences.iter().filter(|s| s.attribute(attribute).as_deref() == Some(value)).cloned().collect();
    Ok(DatasetIndex { sequences, ..index.clone() })
}

/// Uniform sequence among those with more than `gap` frames, then uniform
/// `t0` among its valid starts.
pub fn sample_frame_pair(index: &DatasetIndex, rng: &mut CounterRng, gap: usize) -> Result<FramePair> {
    let (s, t0) = sample_pair_position(index, rng, gap)?;
    Ok(FramePair { sequence: s, t0: index.labeled_frame(s, t0), t1: index.labeled_frame(s, t0 + gap), gap })
}

/// The `(sequence, t0)` drawn by [`sample_frame_pair`] without loading images.
pub fn sample_pair_position(index: &DatasetIndex, rng: &mut CounterRng, gap: usize) -> Result<(usize, usize)> {
    if gap == 0 {
        return Err(Error::Usage("pair gap must be at least 1".into()));
    }
    let valid: Vec<usize> = (0..index.len()).filter(|&i| index.sequences[i].len() > gap).collect();
    if valid.is_empty() {
        return Err(Error::Runtime(format!("no sequence in {} has more than {gap} frames", index.root.display())));
    }
    let s = valid[rng.below(valid.len())];
    let t0 = rng.below(index.sequences[s].len() - gap);
    Ok((s, t0))
}

/// Uniform sequence, then uniform frame; labels are never touched.
pub fn sample_unlabeled_frame(index: &DatasetIndex, rng: &mut CounterRng) -> Result<UnlabeledFrame> {
    if index.is_empty() {
        return Err(Error::Runtime(format!("target dataset {} is empty", index.root.display())));
    }
    let s = rng.below(index.len());
    let t = rng.below(index.sequences[s].len());
    Ok(UnlabeledFrame { image: index.sequences[s].frames[t].to_tensor(), frame_id: frame_id(s, t) })
}
