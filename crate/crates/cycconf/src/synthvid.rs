//! Synthetic benchmark trees on disk.
//!
//! ```text
//! <out>/manifest.json                          every sequence of every split
//! <out>/<domain>/<split>/manifest.json         the sequences of one split
//! <out>/<domain>/<split>/<id>/frame_0000.png   8-bit RGB frames
//! <out>/<domain>/<split>/<id>/annotations.json
//! ```
//!
//! Every manifest is a complete dataset on its own: paths inside it are
//! relative to the directory holding it, so a split directory can be passed
//! anywhere a dataset is expected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use cycconf_core::rng::CounterRng;
use cycconf_core::synth::{generate_sequence, DomainConfig, SceneConfig, Sequence};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};
use crate::fsutil::{prepare_out_dir, read_json, sha256_hex, write_json, SCHEMA_VERSION};
use crate::imageio::write_png;
use crate::schema::{DomainJson, SceneJson};

pub const SPLITS: [&str; 2] = ["train", "val"];

/// Generation request. `domains` are generated in the listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default)]
    pub scene: SceneJson,
    #[serde(default)]
    pub domains: Vec<DomainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    /// One of `day`, `night`, `fog`, `camera_shift`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<DomainJson>,
    #[serde(default)]
    pub train: usize,
    #[serde(default)]
    pub val: usize,
}

impl DomainSpec {
    fn preset(name: &str, preset: &str, train: usize, val: usize) -> Self {
        Self { name: name.into(), preset: Some(preset.into()), config: None, train, val }
    }

    pub fn domain(&self) -> std::result::Result<DomainConfig, String> {
        match (&self.preset, &self.config) {
            (Some(p), None) => preset(p).ok_or_else(|| format!("unknown preset {p:?}")),
            (None, Some(c)) => c.to_config(),
            _ => Err(format!("domain {:?} needs exactly one of `preset` or `config`", self.name)),
        }
    }

    fn count(&self, split: &str) -> usize {
        match split {
            "train" => self.train,
            _ => self.val,
        }
    }
}

pub fn preset(name: &str) -> Option<DomainConfig> {
    match name {
        "day" => Some(DomainConfig::day()),
        "night" => Some(DomainConfig::night()),
        "fog" => Some(DomainConfig::fog()),
        "camera_shift" => Some(DomainConfig::camera_shift()),
        _ => None,
    }
}

impl Default for BenchmarkSpec {
    /// Day and night train/val, fog train/val and a shifted-camera val split.
    fn default() -> Self {
        Self {
            scene: SceneJson::default(),
            domains: vec![
                DomainSpec::preset("day", "day", 20, 5),
                DomainSpec::preset("night", "night", 10, 5),
                DomainSpec::preset("fog", "fog", 10, 5),
                DomainSpec::preset("camshift", "camera_shift", 0, 5),
            ],
        }
    }
}

impl BenchmarkSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = read_json(path)?;
        spec.validate().map_err(|m| Error::format(path, m))?;
        Ok(spec)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.scene.to_config()?;
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            let ok = !d.name.is_empty()
                && d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(format!("domain name {:?} must be non-empty [A-Za-z0-9_-]", d.name));
            }
            if !seen.insert(&d.name) {
                return Err(format!("domain {:?} listed twice", d.name));
            }
            d.domain()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub domain: String,
    pub split: String,
    /// Directory of the split, relative to the manifest.
    pub path: String,
    pub num_sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub sequence_id: String,
    pub domain_name: String,
    pub split: String,
    pub domain: DomainJson,
    pub seed: u64,
    /// Paths relative to the manifest.
    pub annotations: String,
    pub frames: Vec<String>,
    /// SHA-256 over the annotation file and every frame file, in order.
    pub content_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub scene: SceneJson,
    pub splits: Vec<SplitEntry>,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub index: usize,
    pub boxes: Vec<[f64; 4]>,
    pub categories: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub schema_version: u32,
    pub sequence_id: String,
    pub domain: DomainJson,
    pub frames: Vec<FrameJson>,
}

impl AnnotationFile {
    pub fn from_sequence(seq: &Sequence) -> Self {
        let frames = seq
            .annotations
            .iter()
            .map(|a| FrameJson { index: a.index, boxes: a.boxes.iter().map(|b| b.coords()).collect(), categories: a.categories() })
            .collect();
        Self { schema_version: SCHEMA_VERSION, sequence_id: seq.sequence_id.clone(), domain: (&seq.domain).into(), frames }
    }
}

/// Per-sequence seed: the master stream derived by the first 8 bytes of the
/// SHA-256 of the sequence id.
pub fn sequence_seed(master_seed: u64, sequence_id: &str) -> u64 {
    let h = Sha256::digest(sequence_id.as_bytes());
    let key = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
    CounterRng::new(master_seed).derive(key).next_u64()
}

/// Writes the frames and annotations of `seq` under `root/rel` and returns
/// the manifest entry with paths relative to `root`.
pub fn write_sequence(root: &Path, rel: &str, seq: &Sequence, domain_name: &str, split: &str) -> Result<SequenceEntry> {
    let dir = root.join(rel);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut hasher = Sha256::new();
    let ann_path = dir.join("annotations.json");
    write_json(&ann_path, &AnnotationFile::from_sequence(seq))?;
    hasher.update(fs::read(&ann_path).map_err(io_err(&ann_path))?);
    let mut frames = Vec::with_capacity(seq.frames.len());
    for (t, frame) in seq.frames.iter().enumerate() {
        let name = format!("frame_{t:04}.png");
        let path = dir.join(&name);
        write_png(&path, frame)?;
        hasher.update(fs::read(&path).map_err(io_err(&path))?);
        frames.push(format!("{rel}/{name}"));
    }
    Ok(SequenceEntry {
        sequence_id: seq.sequence_id.clone(),
        domain_name: domain_name.into(),
        split: split.into(),
        domain: (&seq.domain).into(),
        seed: seq.seed,
        annotations: format!("{rel}/annotations.json"),
        frames,
        content_sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
    pub num_sequences: usize,
}

/// Renders every split of `spec` into `out`. Refuses a non-empty `out`
/// unless `force`; with `force` files are overwritten in place.
pub fn generate_benchmark(spec: &BenchmarkSpec, out: &Path, master_seed: u64, force: bool) -> Result<BenchmarkSummary> {
    spec.validate().map_err(Error::Usage)?;
    let scene: SceneConfig = spec.scene.to_config().map_err(Error::Usage)?;
    prepare_out_dir(out, force)?;
    let mut splits = Vec::new();
    let mut all = Vec::new();
    for d in &spec.domains {
        let domain = d.domain().map_err(Error::Usage)?;
        for split in SPLITS {
            let n = d.count(split);
            if n == 0 {
                continue;
            }
            let split_rel = format!("{}/{split}", d.name);
            let split_dir = out.join(&split_rel);
            let mut local = Vec::with_capacity(n);
            for i in 0..n {
                let id = format!("{}-{split}-{i:03}", d.name);
                let seq = generate_sequence(&id, &scene, &domain, sequence_seed(master_seed, &id))?;
                local.push(write_sequence(&split_dir, &id, &seq, &d.name, split)?);
            }
            for e in &local {
                let mut e = e.clone();
                e.annotations = format!("{split_rel}/{}", e.annotations);
                e.frames.iter_mut().for_each(|f| *f = format!("{split_rel}/{f}"));
                all.push(e);
            }
            let entry = |path: &str| SplitEntry { domain: d.name.clone(), split: split.into(), path: path.into(), num_sequences: n };
            let split_manifest = DatasetManifest {
                schema_version: SCHEMA_VERSION,
                master_seed,
                scene: spec.scene.clone(),
                splits: vec![entry(".")],
                sequences: local,
            };
            write_json(&split_dir.join("manifest.json"), &split_manifest)?;
            splits.push(entry(&split_rel));
        }
    }
    let manifest =
        DatasetManifest { schema_version: SCHEMA_VERSION, master_seed, scene: spec.scene.clone(), splits, sequences: all };
    let manifest_path = out.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    let bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    Ok(BenchmarkSummary { manifest_path, manifest_sha256: sha256_hex(&bytes), num_sequences: manifest.sequences.len() })
}
