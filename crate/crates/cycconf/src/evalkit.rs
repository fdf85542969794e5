//! Dataset evaluation and the in-domain versus out-of-domain report.
//!
//! Metric values are fractions in `[0, 1]`; the text table shows them ×100.
//! `null` marks a metric without any contributing ground truth. Deltas are
//! `test − train`, so a degradation is negative.

use std::path::{Path, PathBuf};

use cycconf_core::det::DetectorModel;
use cycconf_core::metrics::{evaluate_detections, ApReport, ImageResult, MetricSet, METRIC_NAMES};
use cycconf_core::synth::CATEGORY_NAMES;
use serde::{Deserialize, Serialize};

use crate::datapipe::DatasetIndex;
use crate::error::{io_err, Error, Result};
use crate::fsutil::{write_atomic, write_json, SCHEMA_VERSION};

pub const REPORT_FILE: &str = "ood_report.json";
pub const TABLE_FILE: &str = "ood_report.txt";
pub const PER_CATEGORY_FILE: &str = "per_category.csv";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsJson {
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "AP75")]
    pub ap75: Option<f64>,
    #[serde(rename = "APs")]
    pub aps: Option<f64>,
    #[serde(rename = "APm")]
    pub apm: Option<f64>,
    #[serde(rename = "APl")]
    pub apl: Option<f64>,
}

impl From<MetricSet> for MetricsJson {
    fn from(m: MetricSet) -> Self {
        Self { ap: m.ap, ap50: m.ap50, ap75: m.ap75, aps: m.aps, apm: m.apm, apl: m.apl }
    }
}

impl From<MetricsJson> for MetricSet {
    fn from(m: MetricsJson) -> Self {
        Self { ap: m.ap, ap50: m.ap50, ap75: m.ap75, aps: m.aps, apm: m.apm, apl: m.apl }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub category: String,
    pub num_instances: usize,
    pub metrics: MetricsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub dataset: String,
    pub num_images: usize,
    pub num_instances: usize,
    /// Mean over classes with at least one ground-truth instance.
    pub mean: MetricsJson,
    pub per_class: Vec<ClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub schema_version: u32,
    pub metrics: Vec<String>,
    pub train_domain: DomainReport,
    pub test_domain: DomainReport,
    pub delta: MetricsJson,
}

/// Runs inference on every frame of `index`.
pub fn predict(model: &DetectorModel<f32>, index: &DatasetIndex) -> Result<Vec<ImageResult>> {
    if index.num_frames() == 0 {
        return Err(Error::Runtime(format!("cannot evaluate on empty dataset {}", index.root.display())));
    }
    let mut images = Vec::with_capacity(index.num_frames());
    for s in &index.sequences {
        let ann = s
            .annotations
            .as_ref()
            .ok_or_else(|| Error::Runtime(format!("sequence {} has no annotations", s.sequence_id)))?;
        for (frame, a) in s.frames.iter().zip(ann) {
            let detections = model.detect(&frame.to_tensor())?;
            images.push(ImageResult { detections, ground_truth: a.boxes.clone() });
        }
    }
    Ok(images)
}

pub fn evaluate(model: &DetectorModel<f32>, index: &DatasetIndex) -> Result<ApReport> {
    Ok(evaluate_detections(&predict(model, index)?, model.config.num_classes))
}

pub fn domain_report(report: &ApReport, index: &DatasetIndex) -> DomainReport {
    let per_class: Vec<ClassReport> = report
        .per_class
        .iter()
        .enumerate()
        .map(|(k, c)| ClassReport {
            category: CATEGORY_NAMES.get(k).map_or_else(|| format!("class{k}"), |s| s.to_string()),
            num_instances: c.num_instances,
            metrics: c.metrics.into(),
        })
        .collect();
    DomainReport {
        dataset: index.root.display().to_string(),
        num_images: index.num_frames(),
        num_instances: per_class.iter().map(|c| c.num_instances).sum(),
        mean: report.mean.into(),
        per_class,
    }
}

/// `test − train` per metric; `None` where either side is missing.
pub fn metric_deltas(train: &MetricSet, test: &MetricSet) -> MetricSet {
    let (a, b) = (train.values(), test.values());
    MetricSet::from_values(std::array::from_fn(|i| Some(b[i]? - a[i]?)))
}

pub fn ood_report(model: &DetectorModel<f32>, train: &DatasetIndex, test: &DatasetIndex) -> Result<OodReport> {
    let r_train = evaluate(model, train)?;
    let r_test = evaluate(model, test)?;
    Ok(OodReport {
        schema_version: SCHEMA_VERSION,
        metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        delta: metric_deltas(&r_train.mean, &r_test.mean).into(),
        train_domain: domain_report(&r_train, train),
        test_domain: domain_report(&r_test, test),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.2}", 100.0 * x))
}

/// Fixed-width table: one row per domain plus the delta row.
pub fn text_table(report: &OodReport) -> String {
    let mut out = format!("{:<8}", "domain");
    for m in METRIC_NAMES {
        out.push_str(&format!("{m:>9}"));
    }
    out.push('\n');
    let rows = [
        ("train", report.train_domain.mean),
        ("test", report.test_domain.mean),
        ("delta", report.delta),
    ];
    for (name, m) in rows {
        out.push_str(&format!("{name:<8}"));
        for v in MetricSet::from(m).values() {
            out.push_str(&format!("{:>9}", cell(v)));
        }
        out.push('\n');
    }
    out
}

/// `domain,AP,AP50,AP75,<category AP>...`, values ×100 with two decimals.
pub fn per_category_csv(report: &OodReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["domain".to_string(), "AP".into(), "AP50".into(), "AP75".into()];
    header.extend(report.train_domain.per_class.iter().map(|c| c.category.clone()));
    let csv_err = |e: csv::Error| Error::Runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (name, d) in [("train", &report.train_domain), ("test", &report.test_domain)] {
        let mut row = vec![name.to_string(), cell(d.mean.ap), cell(d.mean.ap50), cell(d.mean.ap75)];
        row.extend(d.per_class.iter().map(|c| cell(c.metrics.ap)));
        w.write_record(&row).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Runtime(e.to_string()))?).map_err(|e| Error::Runtime(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub table: PathBuf,
    pub per_category: PathBuf,
}

pub fn write_report(report: &OodReport, out: &Path) -> Result<ReportPaths> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let paths = ReportPaths {
        json: out.join(REPORT_FILE),
        table: out.join(TABLE_FILE),
        per_category: out.join(PER_CATEGORY_FILE),
    };
    write_json(&paths.json, report)?;
    write_atomic(&paths.table, text_table(report).as_bytes())?;
    write_atomic(&paths.per_category, per_category_csv(report)?.as_bytes())?;
    Ok(paths)
}
