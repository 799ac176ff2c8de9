//! Human-readable `key = value` configuration files.
//!
//! Blank lines and text after `#` are ignored. Lists are comma-separated.
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use setr_core::distill::DistillConfig;
use setr_core::harness::{Arm, Fraction, Representation, SyntheticSpec};
use setr_core::model::SetrConfig;

use crate::error::{Result, SetrError};

/// Parsed `key = value` pairs, remembering the line of each key.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SetrError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(SetrError::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(SetrError::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SetrError::Config(format!("cannot read {}: {e}", path.display())))?;
        KeyValues::parse(&text).map_err(|e| match e {
            SetrError::Config(m) => SetrError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| SetrError::Config(format!("line {line}: cannot parse {key} = {v:?}"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| SetrError::Config(format!("line {line}: cannot parse {s:?} in {key}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A directory of feature files.
    Directory(PathBuf),
    /// A generated cohort. Without a fixed seed each run seed generates
    /// its own cohort.
    Synthetic { spec: SyntheticSpec, fixed_seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arms: Vec<Arm>,
    pub k: usize,
    pub distill: DistillConfig,
    pub model: SetrConfig,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub stratified: bool,
    pub fractions: Vec<Fraction>,
    /// Share of training patients held out for checkpoint selection.
    pub val_share: f64,
    pub data: DataSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arms: vec![Arm::Pkd],
            k: 4,
            distill: DistillConfig::default(),
            model: SetrConfig::default(),
            seeds: vec![0],
            folds: 5,
            stratified: true,
            fractions: Fraction::quarters(),
            val_share: 0.125,
            data: DataSource::Synthetic {
                spec: SyntheticSpec::default(),
                fixed_seed: None,
            },
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "k",
    "tau",
    "alpha",
    "beta",
    "epochs",
    "batch-size",
    "lr",
    "weight-decay",
    "warm-start",
    "seeds",
    "folds",
    "stratified",
    "fractions",
    "val-share",
    "dataset",
    "tokens",
    "hidden",
    "heads",
    "layers",
    "mlp-hidden",
    "dropout",
    "literal-attention",
    "synthetic.patients",
    "synthetic.samples-per-patient",
    "synthetic.frames-min",
    "synthetic.frames-max",
    "synthetic.fps",
    "synthetic.noise",
    "synthetic.background",
    "synthetic.seed",
    "synthetic.flow-size",
];

impl ExperimentConfig {
    /// Builds a configuration from parsed pairs; relative dataset paths
    /// resolve against `base`.
    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self> {
        if let Some(bad) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(SetrError::Config(format!("unknown key {bad}")));
        }
        let mut c = ExperimentConfig::default();
        if let Some(arms) = kv.list::<Arm>("mode")? {
            c.arms = arms;
        }
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(c.k, "k");
        set!(c.distill.tau, "tau");
        set!(c.distill.alpha, "alpha");
        set!(c.distill.beta, "beta");
        set!(c.distill.epochs, "epochs");
        set!(c.distill.batch_size, "batch-size");
        set!(c.distill.lr, "lr");
        set!(c.distill.weight_decay, "weight-decay");
        set!(c.folds, "folds");
        set!(c.val_share, "val-share");
        set!(c.model.tokens, "tokens");
        set!(c.model.hidden, "hidden");
        set!(c.model.heads, "heads");
        set!(c.model.layers, "layers");
        set!(c.model.mlp_hidden, "mlp-hidden");
        set!(c.model.dropout, "dropout");
        for (key, field) in [
            ("warm-start", &mut c.distill.warm_start),
            ("stratified", &mut c.stratified),
            ("literal-attention", &mut c.model.literal_attention),
        ] {
            if let Some(v) = kv.raw(key) {
                *field = parse_bool(v).ok_or_else(|| SetrError::Config(format!("{key} must be true or false")))?;
            }
        }
        if let Some(seeds) = kv.list("seeds")? {
            c.seeds = seeds;
        }
        if let Some(fr) = kv.list("fractions")? {
            c.fractions = fr;
        }

        c.data = match kv.raw("dataset") {
            Some(p) if p != "synthetic" => {
                if kv.keys().any(|k| k.starts_with("synthetic.")) {
                    return Err(SetrError::Config("synthetic.* keys need dataset = synthetic".into()));
                }
                DataSource::Directory(base.join(p))
            }
            _ => {
                let mut spec = SyntheticSpec::default();
                set!(spec.patients, "synthetic.patients");
                set!(spec.samples_per_patient, "synthetic.samples-per-patient");
                set!(spec.frames.0, "synthetic.frames-min");
                set!(spec.frames.1, "synthetic.frames-max");
                set!(spec.frames_per_second, "synthetic.fps");
                set!(spec.noise, "synthetic.noise");
                set!(spec.background, "synthetic.background");
                if let Some(n) = kv.get::<usize>("synthetic.flow-size")? {
                    spec.representation = Representation::Flow { width: n, height: n };
                }
                DataSource::Synthetic {
                    spec,
                    fixed_seed: kv.get("synthetic.seed")?,
                }
            }
        };
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_kv(&kv, base)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(SetrError::Config(m));
        if self.arms.is_empty() {
            return cfg("mode lists no arms".into());
        }
        if self.k == 0 {
            return cfg("k must be positive".into());
        }
        if self.seeds.is_empty() {
            return cfg("seeds must not be empty".into());
        }
        if self.folds < 2 {
            return cfg("evaluation needs at least 2 folds".into());
        }
        if self.fractions.is_empty() {
            return cfg("fractions must not be empty".into());
        }
        if !(0.0..1.0).contains(&self.val_share) {
            return cfg("val-share must be in [0, 1)".into());
        }
        for f in &self.fractions {
            f.level(self.k).map_err(|e| SetrError::Config(e.to_string()))?;
        }
        self.model.validate().map_err(|e| SetrError::Config(e.to_string()))?;
        self.distill.validate().map_err(|e| SetrError::Config(e.to_string()))?;
        if let DataSource::Synthetic { spec, .. } = &self.data {
            spec.validate().map_err(|e| SetrError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: Vec<String>| v.join(", ");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", list(self.arms.iter().map(|a| a.name().to_string()).collect()));
        kv("k", self.k.to_string());
        kv("tau", self.distill.tau.to_string());
        kv("alpha", self.distill.alpha.to_string());
        kv("beta", self.distill.beta.to_string());
        kv("epochs", self.distill.epochs.to_string());
        kv("batch-size", self.distill.batch_size.to_string());
        kv("lr", self.distill.lr.to_string());
        kv("weight-decay", self.distill.weight_decay.to_string());
        kv("warm-start", self.distill.warm_start.to_string());
        kv("seeds", list(self.seeds.iter().map(u64::to_string).collect()));
        kv("folds", self.folds.to_string());
        kv("stratified", self.stratified.to_string());
        kv("fractions", list(self.fractions.iter().map(|f| f.to_string()).collect()));
        kv("val-share", self.val_share.to_string());
        kv("tokens", self.model.tokens.to_string());
        kv("hidden", self.model.hidden.to_string());
        kv("heads", self.model.heads.to_string());
        kv("layers", self.model.layers.to_string());
        kv("mlp-hidden", self.model.mlp_hidden.to_string());
        kv("dropout", self.model.dropout.to_string());
        kv("literal-attention", self.model.literal_attention.to_string());
        match &self.data {
            DataSource::Directory(p) => kv("dataset", p.display().to_string()),
            DataSource::Synthetic { spec, fixed_seed } => {
                kv("dataset", "synthetic".into());
                kv("synthetic.patients", spec.patients.to_string());
                kv("synthetic.samples-per-patient", spec.samples_per_patient.to_string());
                kv("synthetic.frames-min", spec.frames.0.to_string());
                kv("synthetic.frames-max", spec.frames.1.to_string());
                kv("synthetic.fps", spec.frames_per_second.to_string());
                kv("synthetic.noise", spec.noise.to_string());
                kv("synthetic.background", spec.background.to_string());
                if let Some(seed) = fixed_seed {
                    kv("synthetic.seed", seed.to_string());
                }
                if let Representation::Flow { width, .. } = spec.representation {
                    kv("synthetic.flow-size", width.to_string());
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_comments_and_defaults() {
        let text = "# experiment\nmode = pkd, direct\nk = 8   # segments\nseeds = 1, 2,3\nfractions = 1/8, 1/4, 1\nstratified = no\n";
        let c = ExperimentConfig::from_kv(&KeyValues::parse(text).unwrap(), Path::new(".")).unwrap();
        assert_eq!(c.arms, vec![Arm::Pkd, Arm::Direct]);
        assert_eq!(c.k, 8);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.fractions.len(), 3);
        assert!(!c.stratified);
        assert_eq!(c.distill.tau, 10.0);
        assert_eq!(c.distill.epochs, 50);
    }

    #[test]
    fn text_rendering_round_trips() {
        let text = "mode = plain\nk = 8\nfractions = 1/8, 3/4\nsynthetic.noise = 0.25\nsynthetic.seed = 4\nlr = 0.002\n";
        let c = ExperimentConfig::from_kv(&KeyValues::parse(text).unwrap(), Path::new(".")).unwrap();
        let again = ExperimentConfig::from_kv(&KeyValues::parse(&c.to_text()).unwrap(), Path::new(".")).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_malformed_input() {
        let bad = |t: &str| ExperimentConfig::from_kv(&KeyValues::parse(t)?, Path::new("."));
        assert!(bad("k 4").is_err());
        assert!(bad("k = four").is_err());
        assert!(bad("colour = red").is_err());
        assert!(bad("k = 4\nk = 8").is_err());
        assert!(bad("k = 4\nfractions = 1/8").is_err());
        assert!(bad("mode = magic").is_err());
        assert!(bad("folds = 1").is_err());
        assert!(bad("dataset = data\nsynthetic.noise = 1").is_err());
        for e in ["k 4", "colour = red", "mode = magic"].map(|t| bad(t).unwrap_err()) {
            assert_eq!(e.exit_code(), 1);
        }
    }

    #[test]
    fn dataset_paths_resolve_against_the_config_directory() {
        let kv = KeyValues::parse("dataset = feats").unwrap();
        let c = ExperimentConfig::from_kv(&kv, Path::new("/tmp/exp")).unwrap();
        assert_eq!(c.data, DataSource::Directory(PathBuf::from("/tmp/exp/feats")));
    }
}
