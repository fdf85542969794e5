//! Flat `key = value` training configuration files.
//!
//! Keys are the [`TrainConfig`] field names. Blank lines and lines starting
//! with `#` are ignored; `lr_milestones` is a comma-separated list (empty for
//! none). Values are layered: built-in defaults, then the file, then command
//! line flags. The seed falls back to `CYCCONF_SEED` only when neither the
//! file nor a flag sets it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cycconf_core::train::{SslTask, TrainConfig, TrainMode};

use crate::error::{io_err, Error, Result};

pub const SEED_ENV: &str = "CYCCONF_SEED";

pub const KEYS: [&str; 16] = [
    "mode",
    "ssl_task",
    "gamma",
    "lambda_rot",
    "score_threshold",
    "temperature",
    "symmetric",
    "lr",
    "momentum",
    "weight_decay",
    "batch_size",
    "total_iters",
    "lr_milestones",
    "seed",
    "pair_gap",
    "ssl_crop",
];

/// Parses `key = value` lines; duplicate or unknown keys are errors.
pub fn parse_pairs(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown key {k:?}", n + 1));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: key {k:?} set twice", n + 1));
        }
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_pairs(&text).map_err(|m| Error::format(path, m))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

/// Sets one field from its textual value.
pub fn apply(config: &mut TrainConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    match key {
        "mode" => config.mode = TrainMode::parse(value).ok_or_else(|| format!("mode: unknown {value:?}"))?,
        "ssl_task" => config.ssl_task = SslTask::parse(value).ok_or_else(|| format!("ssl_task: unknown {value:?}"))?,
        "gamma" => config.gamma = num(key, value)?,
        "lambda_rot" => config.lambda_rot = num(key, value)?,
        "score_threshold" => config.score_threshold = num(key, value)?,
        "temperature" => config.temperature = num(key, value)?,
        "symmetric" => config.symmetric = num(key, value)?,
        "lr" => config.lr = num(key, value)?,
        "momentum" => config.momentum = num(key, value)?,
        "weight_decay" => config.weight_decay = num(key, value)?,
        "batch_size" => config.batch_size = num(key, value)?,
        "total_iters" => config.total_iters = num(key, value)?,
        "lr_milestones" => {
            config.lr_milestones =
                value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect::<std::result::Result<_, _>>()?
        }
        "seed" => config.seed = num(key, value)?,
        "pair_gap" => config.pair_gap = num(key, value)?,
        "ssl_crop" => config.ssl_crop = num(key, value)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

/// Every field as text; `apply` over the result reproduces `config` exactly.
pub fn to_pairs(config: &TrainConfig) -> BTreeMap<String, String> {
    let milestones: Vec<String> = config.lr_milestones.iter().map(|m| m.to_string()).collect();
    let values = [
        config.mode.as_str().to_string(),
        config.ssl_task.as_str().to_string(),
        config.gamma.to_string(),
        config.lambda_rot.to_string(),
        config.score_threshold.to_string(),
        config.temperature.to_string(),
        config.symmetric.to_string(),
        config.lr.to_string(),
        config.momentum.to_string(),
        config.weight_decay.to_string(),
        config.batch_size.to_string(),
        config.total_iters.to_string(),
        milestones.join(","),
        config.seed.to_string(),
        config.pair_gap.to_string(),
        config.ssl_crop.to_string(),
    ];
    KEYS.iter().map(|k| k.to_string()).zip(values).collect()
}

pub fn to_text(config: &TrainConfig) -> String {
    to_pairs(config).iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Resolves a configuration from the layers. `flags` are applied last;
/// `env_seed` is consulted only when no layer sets `seed`.
pub fn resolve(
    file: Option<&BTreeMap<String, String>>,
    flags: &BTreeMap<String, String>,
    env_seed: Option<&str>,
) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    let mut seeded = false;
    for layer in file.into_iter().chain([flags]) {
        for (k, v) in layer {
            apply(&mut config, k, v).map_err(Error::Usage)?;
            seeded |= k == "seed";
        }
    }
    if !seeded {
        if let Some(s) = env_seed {
            config.seed = s.trim().parse().map_err(|_| Error::Usage(format!("{SEED_ENV}={s:?} is not an integer")))?;
        }
    }
    config.validate().map_err(|e| Error::Usage(format!("invalid training configuration: {e}")))?;
    Ok(config)
}
