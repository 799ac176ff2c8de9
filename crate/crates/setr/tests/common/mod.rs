#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A configuration small enough to train in well under a second per stage.
pub const TINY: &str = "\
# tiny experiment
mode = plain, pkd, direct
k = 4
epochs = 2
batch-size = 4
folds = 2
seeds = 5
tokens = 4
hidden = 8
heads = 2
layers = 1
mlp-hidden = 16
synthetic.patients = 8
synthetic.samples-per-patient = 1
synthetic.frames-min = 12
synthetic.frames-max = 20
";

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("experiment.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

/// Relative path → contents of every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
