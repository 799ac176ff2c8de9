//! Helpers shared by the acceptance report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setr_core::flow::Frame;

/// Smooth random texture built from plane waves so that exact shifts are
/// available analytically.
pub struct Texture(Vec<(f64, f64, f64, f64)>);

impl Texture {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Texture(
            (0..12)
                .map(|_| {
                    let k = rng.random_range(0.12..0.5);
                    let dir = rng.random_range(0.0..std::f64::consts::TAU);
                    (
                        k * dir.cos(),
                        k * dir.sin(),
                        rng.random_range(0.02..0.05),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect(),
        )
    }

    /// The texture moved by `(dx, dy)`, sampled on a `w × h` grid.
    pub fn frame(&self, w: usize, h: usize, dx: f64, dy: f64) -> Frame {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 - dx, (i / w) as f64 - dy);
                let s: f64 = self.0.iter().map(|(kx, ky, a, p)| a * (kx * x + ky * y + p).sin()).sum();
                (0.5 + s).clamp(0.0, 1.0)
            })
            .collect();
        Frame::new(w, h, data).expect("size matches")
    }
}

/// Relative path → contents of every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable directory") {
            let p = e.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}
