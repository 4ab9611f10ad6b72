#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use affect::corpus::{save_dataset, Track};
use affect::pipeline::{cmd_eval, cmd_prepare, cmd_train, EvalReport, Method, PipelineError, Run, RunConfig};
use affect::synthetic::toy_split;

/// Writes the toy corpus plus one config per method into `dir`.
pub fn toy_workspace(dir: &Path, track: Track, n_train: usize, n_test: usize, seed: u64) {
    let (train, test) = toy_split(track, n_train, n_test, seed);
    save_dataset(dir.join("train.csv"), &train).unwrap();
    save_dataset(dir.join("test.csv"), &test).unwrap();
    for m in [Method::Sp, Method::Crc, Method::Dpo, Method::Simpo] {
        write_config(dir, &RunConfig::toy(track, m, seed));
    }
}

pub fn write_config(dir: &Path, config: &RunConfig) -> PathBuf {
    let p = dir.join(format!("{}.toml", config.run.method));
    std::fs::write(&p, config.to_toml()).unwrap();
    p
}

pub fn load(dir: &Path, method: Method) -> Run {
    Run::load(dir.join(format!("{method}.toml"))).unwrap()
}

pub fn run_all(dir: &Path, method: Method) -> Result<EvalReport, PipelineError> {
    let run = load(dir, method);
    cmd_prepare(&run)?;
    cmd_train(&run)?;
    cmd_eval(&run)
}

/// Relative path → bytes for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn count_records(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .count()
}
