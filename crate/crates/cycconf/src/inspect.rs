//! Matching diagnostics for a trained checkpoint.
//!
//! For each sampled frame pair the proposals at or above the threshold are
//! embedded on both frames and the forward matching weights between them are
//! written as a CSV heatmap (`heatmaps/pair_NNNN.csv`, rows are t0 proposals,
//! columns t1 proposals). `entropy_summary.csv` has one row per pair, and
//! `embeddings.csv` holds every embedded proposal. Pairs without proposals on
//! either side keep their summary row with an empty entropy.

use std::fs;
use std::path::{Path, PathBuf};

use cycconf_core::cycmatch::{forward_match_weights_with, matching_entropy, pairwise_sq_dist, InstanceEmbeddings, Polarity};
use cycconf_core::rng::CounterRng;
use cycconf_core::train::SslTask;
use serde::Serialize;

use crate::checkpoint;
use crate::datapipe::{frame_id, load_unlabeled, sample_pair_position};
use crate::error::{io_err, Error, Result};
use crate::fsutil::{prepare_out_dir, write_json, SCHEMA_VERSION};

pub const SUMMARY_FILE: &str = "entropy_summary.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const HEATMAP_DIR: &str = "heatmaps";
pub const INSPECT_FILE: &str = "inspect.json";

const PAIR_STREAM: u64 = 0x7061_6972;

#[derive(Debug, Clone)]
pub struct InspectJob {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub pairs: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub gap: usize,
    /// Defaults to the checkpoint's training threshold, else 0.8.
    pub threshold: Option<f64>,
    /// Defaults to the checkpoint's matching task, else confusion.
    pub polarity: Option<Polarity>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub pair: usize,
    pub sequence_id: String,
    pub t0: usize,
    pub t1: usize,
    pub n0: usize,
    pub n1: usize,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub schema_version: u32,
    pub checkpoint: String,
    pub dataset: String,
    pub polarity: String,
    pub threshold: f64,
    pub temperature: f64,
    pub num_pairs: usize,
    pub num_matched: usize,
    /// Mean over pairs with proposals on both frames.
    pub mean_entropy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InspectOutcome {
    pub report: InspectReport,
    pub pairs: Vec<PairSummary>,
    pub warnings: Vec<String>,
}

fn polarity_name(p: Polarity) -> &'static str {
    match p {
        Polarity::Confusion => "confusion",
        Polarity::Consistency => "consistency",
    }
}

pub fn parse_polarity(s: &str) -> Option<Polarity> {
    match s {
        "confusion" => Some(Polarity::Confusion),
        "consistency" => Some(Polarity::Consistency),
        _ => None,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

pub fn inspect_matching(job: &InspectJob) -> Result<InspectOutcome> {
    let ckpt = checkpoint::load(&job.ckpt)?;
    let index = load_unlabeled(&job.data)?;
    let train_cfg = &ckpt.header.train_config;
    let from_ckpt = |k: &str| train_cfg.get(k).and_then(|v| v.parse::<f64>().ok());
    let threshold = job.threshold.or_else(|| from_ckpt("score_threshold")).unwrap_or(0.8);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Usage(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let temperature = from_ckpt("temperature").unwrap_or(1.0);
    let polarity = job
        .polarity
        .or_else(|| train_cfg.get("ssl_task").and_then(|t| SslTask::parse(t)).and_then(SslTask::polarity))
        .unwrap_or(Polarity::Confusion);
    prepare_out_dir(&job.out, job.force)?;
    let heat_dir = job.out.join(HEATMAP_DIR);
    fs::create_dir_all(&heat_dir).map_err(io_err(&heat_dir))?;

    let model = &ckpt.model;
    let dim = model.config.embedding_dim;
    let emb_path = job.out.join(EMBEDDINGS_FILE);
    let mut emb_csv = csv::Writer::from_path(&emb_path).map_err(csv_err(&emb_path))?;
    let mut header = vec!["pair".to_string(), "frame".into(), "frame_id".into(), "proposal".into(), "score".into()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    emb_csv.write_record(&header).map_err(csv_err(&emb_path))?;

    let mut rng = CounterRng::new(job.seed).derive(PAIR_STREAM);
    let mut pairs = Vec::with_capacity(job.pairs);
    let mut warnings = Vec::new();
    for p in 0..job.pairs {
        let (s, t0) = sample_pair_position(&index, &mut rng, job.gap)?;
        let t1 = t0 + job.gap;
        let seq = &index.sequences[s];
        let mut embedded = Vec::with_capacity(2);
        for (slot, t) in [(0usize, t0), (1, t1)] {
            let (props, emb) = model.embed_proposals(&seq.frames[t].to_tensor(), threshold, frame_id(s, t))?;
            for (i, b) in props.boxes.iter().enumerate() {
                let mut row = vec![p.to_string(), slot.to_string(), frame_id(s, t).to_string(), i.to_string()];
                row.push(b.score.unwrap_or(0.0).to_string());
                row.extend(emb.row(i).iter().map(|v| v.to_string()));
                emb_csv.write_record(&row).map_err(csv_err(&emb_path))?;
            }
            embedded.push(InstanceEmbeddings::new(emb.map(|x| x as f64), frame_id(s, t))?);
        }
        let (u, v) = (&embedded[0], &embedded[1]);
        let mut summary = PairSummary { pair: p, sequence_id: seq.sequence_id.clone(), t0, t1, n0: u.len(), n1: v.len(), entropy: None };
        if u.is_empty() || v.is_empty() {
            warnings.push(format!("pair {p} ({} t={t0}): no proposals above {threshold} on one frame", seq.sequence_id));
        } else {
            let d = pairwise_sq_dist(u, v)?;
            let alpha = forward_match_weights_with(&d, polarity, temperature)?;
            summary.entropy = Some(matching_entropy(&alpha)?);
            let path = heat_dir.join(format!("pair_{p:04}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            let mut head = vec!["t0_proposal".to_string()];
            head.extend((0..v.len()).map(|j| format!("t1_{j}")));
            w.write_record(&head).map_err(csv_err(&path))?;
            for i in 0..alpha.0.rows() {
                let mut row = vec![i.to_string()];
                row.extend(alpha.0.row(i).iter().map(|x| x.to_string()));
                w.write_record(&row).map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        pairs.push(summary);
    }
    emb_csv.flush().map_err(io_err(&emb_path))?;

    let sum_path = job.out.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&sum_path).map_err(csv_err(&sum_path))?;
    if pairs.is_empty() {
        w.write_record(["pair", "sequence_id", "t0", "t1", "n0", "n1", "entropy"]).map_err(csv_err(&sum_path))?;
    }
    for s in &pairs {
        w.serialize(s).map_err(csv_err(&sum_path))?;
    }
    w.flush().map_err(io_err(&sum_path))?;

    let matched: Vec<f64> = pairs.iter().filter_map(|s| s.entropy).collect();
    if job.pairs > 0 && matched.is_empty() {
        warnings.push("no sampled pair had proposals above the threshold on both frames".into());
    }
    let report = InspectReport {
        schema_version: SCHEMA_VERSION,
        checkpoint: job.ckpt.display().to_string(),
        dataset: job.data.display().to_string(),
        polarity: polarity_name(polarity).into(),
        threshold,
        temperature,
        num_pairs: pairs.len(),
        num_matched: matched.len(),
        mean_entropy: (!matched.is_empty()).then(|| matched.iter().sum::<f64>() / matched.len() as f64),
    };
    write_json(&job.out.join(INSPECT_FILE), &report)?;
    Ok(InspectOutcome { report, pairs, warnings })
}
