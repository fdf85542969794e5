//! Training runs on disk.
//!
//! A run writes, inside its output directory:
//!
//! * `experiment.json` before the first step (atomically),
//! * `loss_trace.csv` with one row per iteration,
//! * `checkpoint.bin` after the last step,
//! * `nan_dump.json` instead of a checkpoint when a loss or gradient stops
//!   being finite.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cycconf_core::det::{DetectorConfig, DetectorModel};
use cycconf_core::rng::CounterRng;
use cycconf_core::train::{LossBundle, TrainConfig, TrainMode, Trainer};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::to_pairs;
use crate::datapipe::{load_dataset, load_unlabeled, sample_frame_pair, sample_unlabeled_frame, DatasetIndex};
use crate::error::{io_err, Error, Result};
use crate::fsutil::{prepare_out_dir, write_json, SCHEMA_VERSION, TOOL_VERSION};
use crate::schema::DetectorJson;

pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const NAN_DUMP_FILE: &str = "nan_dump.json";

const DATA_STREAM: u64 = 0x6461_7461;

#[derive(Debug, Clone)]
pub struct TrainJob {
    /// Labelled source dataset; every sequence in it is used.
    pub data: PathBuf,
    /// Unlabelled target dataset, required in adaptation mode.
    pub target_data: Option<PathBuf>,
    pub out: PathBuf,
    pub config: TrainConfig,
    pub detector: DetectorConfig,
    pub force: bool,
    /// Print a progress line to stderr every this many iterations.
    pub log_every: Option<usize>,
}

impl TrainJob {
    pub fn new(data: &Path, out: &Path, config: TrainConfig) -> Self {
        Self {
            data: data.to_path_buf(),
            target_data: None,
            out: out.to_path_buf(),
            config,
            detector: DetectorConfig::default(),
            force: false,
            log_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub checkpoint: String,
    pub loss_trace: String,
    pub nan_dump: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub detector: DetectorJson,
    pub dataset: DatasetRef,
    pub target_dataset: Option<DatasetRef>,
    /// Relative to the run directory.
    pub outputs: OutputPaths,
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub det_total: f64,
    pub ssl: f64,
    pub total: f64,
    pub lr: f64,
    pub n_proposals_t0: f64,
    pub n_proposals_t1: f64,
    pub match_entropy: Option<f64>,
}

impl TraceRow {
    pub fn new(b: &LossBundle, lr: f64) -> Self {
        Self {
            iteration: b.iteration,
            det_total: b.det.total,
            ssl: b.ssl,
            total: b.total,
            lr,
            n_proposals_t0: b.n_proposals_t0,
            n_proposals_t1: b.n_proposals_t1,
            match_entropy: b.match_entropy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundles: Vec<LossBundle>,
    pub trace: Vec<TraceRow>,
    pub model: DetectorModel<f32>,
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub loss_trace: PathBuf,
    pub experiment: PathBuf,
}

fn dataset_ref(index: &DatasetIndex) -> DatasetRef {
    DatasetRef { path: index.root.display().to_string(), manifest_sha256: index.manifest_sha256.clone() }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path)(source),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Runs `job` to completion. Single-threaded and deterministic given the seed.
pub fn train(job: &TrainJob) -> Result<TrainOutcome> {
    let config = &job.config;
    config.validate().map_err(|e| Error::Usage(format!("invalid training configuration: {e}")))?;
    if config.mode == TrainMode::Uda && job.target_data.is_none() {
        return Err(Error::Usage("adaptation mode needs --target-data".into()));
    }
    let source = load_dataset(&job.data)?;
    if source.is_empty() {
        return Err(Error::Runtime(format!("training dataset {} has no sequences", job.data.display())));
    }
    let target = match (&job.target_data, config.mode) {
        (Some(dir), TrainMode::Uda) => Some(load_unlabeled(dir)?),
        _ => None,
    };
    if target.as_ref().is_some_and(|t| t.is_empty()) {
        return Err(Error::Runtime("target dataset has no sequences".into()));
    }
    prepare_out_dir(&job.out, job.force)?;
    let outputs = OutputPaths {
        checkpoint: CHECKPOINT_FILE.into(),
        loss_trace: TRACE_FILE.into(),
        nan_dump: NAN_DUMP_FILE.into(),
    };
    let manifest = ExperimentManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        seed: config.seed,
        config: to_pairs(config),
        detector: (&job.detector).into(),
        dataset: dataset_ref(&source),
        target_dataset: target.as_ref().map(dataset_ref),
        outputs,
    };
    let experiment = job.out.join(EXPERIMENT_FILE);
    write_json(&experiment, &manifest)?;

    let model = DetectorModel::<f32>::new(job.detector.clone(), config.seed)?;
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut data_rng = CounterRng::new(config.seed).derive(DATA_STREAM);
    let trace_path = job.out.join(TRACE_FILE);
    let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut bundles = Vec::with_capacity(config.total_iters);
    let mut trace = Vec::with_capacity(config.total_iters);
    for it in 0..config.total_iters {
        let batch = (0..config.batch_size)
            .map(|_| sample_frame_pair(&source, &mut data_rng, config.pair_gap))
            .collect::<Result<Vec<_>>>()?;
        let lr = trainer.lr();
        let step = match &target {
            None => trainer.joint_step(&batch),
            Some(t) => {
                let frames = (0..2 * config.batch_size)
                    .map(|_| sample_unlabeled_frame(t, &mut data_rng))
                    .collect::<Result<Vec<_>>>()?;
                trainer.uda_step(&batch, &frames)
            }
        };
        let bundle = match step {
            Ok(b) => b,
            Err(e @ cycconf_core::Error::NonFinite(_)) => {
                writer.flush().map_err(io_err(&trace_path))?;
                return Err(dump_divergence(&job.out, it, &e.to_string(), config, &trace));
            }
            Err(e) => return Err(e.into()),
        };
        let row = TraceRow::new(&bundle, lr);
        writer.serialize(row).map_err(|e| csv_err(&trace_path, e))?;
        if job.log_every.is_some_and(|k| k > 0 && (it % k == 0 || it + 1 == config.total_iters)) {
            eprintln!(
                "iter {it:>5}  det {:.4}  ssl {:.4}  total {:.4}  lr {lr}  proposals {:.1}/{:.1}",
                row.det_total, row.ssl, row.total, row.n_proposals_t0, row.n_proposals_t1
            );
        }
        bundles.push(bundle);
        trace.push(row);
    }
    if config.total_iters == 0 {
        writer.write_record(TRACE_HEADER).map_err(|e| csv_err(&trace_path, e))?;
    }
    writer.flush().map_err(io_err(&trace_path))?;
    let checkpoint_path = job.out.join(CHECKPOINT_FILE);
    checkpoint::save(&checkpoint_path, &trainer.model, to_pairs(config), trainer.iteration())?;
    Ok(TrainOutcome {
        bundles,
        trace,
        model: trainer.model,
        run_dir: job.out.clone(),
        checkpoint: checkpoint_path,
        loss_trace: trace_path,
        experiment,
    })
}

pub const TRACE_HEADER: [&str; 8] =
    ["iteration", "det_total", "ssl", "total", "lr", "n_proposals_t0", "n_proposals_t1", "match_entropy"];

#[derive(Serialize)]
struct NanDump<'a> {
    schema_version: u32,
    iteration: usize,
    error: &'a str,
    config: BTreeMap<String, String>,
    last_rows: &'a [TraceRow],
}

fn dump_divergence(out: &Path, iteration: usize, msg: &str, config: &TrainConfig, trace: &[TraceRow]) -> Error {
    let path = out.join(NAN_DUMP_FILE);
    let dump = NanDump {
        schema_version: SCHEMA_VERSION,
        iteration,
        error: msg,
        config: to_pairs(config),
        last_rows: &trace[trace.len().saturating_sub(20)..],
    };
    match write_json(&path, &dump) {
        Ok(()) => Error::Diverged { iteration, msg: msg.into(), dump: path },
        Err(e) => e,
    }
}
