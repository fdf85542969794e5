#![allow(dead_code)]

use std::path::Path;

use cycconf::schema::SceneJson;
use cycconf::synthvid::{generate_benchmark, BenchmarkSpec, BenchmarkSummary};

/// Full-size frames with short sequences so that IO tests stay fast.
pub fn short_scene() -> SceneJson {
    SceneJson { min_frames: 3, max_frames: 5, ..SceneJson::default() }
}

pub fn spec_json(domains: &str) -> String {
    format!(r#"{{"scene": {}, "domains": [{domains}]}}"#, serde_json::to_string(&short_scene()).unwrap())
}

pub fn spec(domains: &str) -> BenchmarkSpec {
    serde_json::from_str(&spec_json(domains)).unwrap()
}

/// Day train/val plus a fog train split.
pub fn small_benchmark(out: &Path, seed: u64) -> BenchmarkSummary {
    let s = spec(
        r#"{"name": "day", "preset": "day", "train": 4, "val": 2},
           {"name": "fog", "preset": "fog", "train": 2}"#,
    );
    generate_benchmark(&s, out, seed, false).unwrap()
}

pub fn cli(args: &[&str]) -> i32 {
    cycconf::cli::run(std::iter::once("cycconf").chain(args.iter().copied()))
}
