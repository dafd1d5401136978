//! Flat `key = value` training config.
//!
//! ```text
//! # comments and blank lines are ignored
//! schema = tfn-train/1        # optional; must match when present
//! task = tetris               # required: tetris | gravity | inertia | missing-point
//! seed = 0
//! l_max = 2                   # must cover the highest order the architecture uses
//! channels = 4                # hidden width (tetris, missing-point)
//! num_basis = 30              # radial Gaussians
//! r_min = 0.0
//! r_max = 3.0
//! hidden = 32                 # radial network width
//! lr = 0.01
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! epochs = 250
//! batch_size = 1
//! max_steps = 1000            # optional cap on optimizer steps
//! train_count = 8             # generated training samples, ignored with `data`
//! data = train.jsonl          # optional dataset from gen-data
//! out_dir = runs/tetris
//! ```
//!
//! Omitted keys take the per-task defaults. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use tfn::autodiff::AdamConfig;
use tfn::layers::RadialConfig;
use tfn::tasks::{task_defaults, TaskKind, TrainConfig};

pub const CONFIG_SCHEMA: &str = "tfn-train/1";

const KEYS: &[&str] = &[
    "schema",
    "task",
    "seed",
    "l_max",
    "channels",
    "num_basis",
    "r_min",
    "r_max",
    "hidden",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "epochs",
    "batch_size",
    "max_steps",
    "train_count",
    "data",
    "out_dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub l_max: usize,
    pub channels: usize,
    pub radial: RadialConfig,
    pub train: TrainConfig,
    pub train_count: usize,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| anyhow!("`{key}`: cannot parse {raw:?}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key `{k}`", i + 1);
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: key `{k}` given twice", i + 1);
            }
        }
        if let Some(s) = kv.get("schema") {
            if s != CONFIG_SCHEMA {
                bail!("config schema {s:?}, expected {CONFIG_SCHEMA:?}");
            }
        }
        let task: TaskKind = parse_value("task", kv.get("task").ok_or_else(|| anyhow!("missing required key `task`"))?)?;
        let d = task_defaults(task);
        let get = |k: &str| kv.get(k).map(String::as_str);
        macro_rules! field {
            ($key:literal, $default:expr) => {
                match get($key) {
                    Some(raw) => parse_value($key, raw)?,
                    None => $default,
                }
            };
        }
        let radial = RadialConfig {
            num_basis: field!("num_basis", d.radial.num_basis),
            r_min: field!("r_min", d.radial.r_min),
            r_max: field!("r_max", d.radial.r_max),
            hidden: field!("hidden", d.radial.hidden),
        };
        let seed: u64 = field!("seed", d.train.seed);
        let adam = AdamConfig {
            lr: field!("lr", d.train.adam.lr),
            beta1: field!("beta1", d.train.adam.beta1),
            beta2: field!("beta2", d.train.adam.beta2),
            eps: field!("eps", d.train.adam.eps),
        };
        let train = TrainConfig {
            seed,
            epochs: field!("epochs", d.train.epochs),
            batch_size: field!("batch_size", d.train.batch_size),
            max_steps: match get("max_steps") {
                Some(raw) => Some(parse_value("max_steps", raw)?),
                None => d.train.max_steps,
            },
            adam,
        };
        let cfg = Self {
            task,
            seed,
            l_max: field!("l_max", 2),
            channels: field!("channels", d.channels),
            radial,
            train,
            train_count: field!("train_count", d.train_count),
            data: get("data").map(PathBuf::from),
            out_dir: get("out_dir").map_or_else(|| PathBuf::from("."), PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        self.radial.validate()?;
        let a = &self.train.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            bail!("`lr` must be positive, got {}", a.lr);
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            bail!("`beta1` and `beta2` must lie in [0, 1)");
        }
        if !(a.eps > 0.0) {
            bail!("`eps` must be positive");
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 || self.channels == 0 || self.train_count == 0 {
            bail!("`epochs`, `batch_size`, `channels` and `train_count` must be positive");
        }
        if self.train.max_steps == Some(0) {
            bail!("`max_steps` must be positive when given");
        }
        let needed = self.spec().layers.iter().filter_map(max_order).max().unwrap_or(0);
        if self.l_max < needed {
            bail!("`l_max` = {} but the {} architecture uses order {needed}", self.l_max, self.task);
        }
        Ok(())
    }

    pub fn spec(&self) -> tfn::tasks::ModelSpec {
        tfn::tasks::ModelSpec::default_for(self.task, self.channels, self.radial)
    }

    /// Every resolved field except `out_dir`, one `key=value` per line in key order.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("task", self.task.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("l_max", self.l_max.to_string());
        kv.insert("channels", self.channels.to_string());
        kv.insert("num_basis", self.radial.num_basis.to_string());
        kv.insert("r_min", format!("{:e}", self.radial.r_min));
        kv.insert("r_max", format!("{:e}", self.radial.r_max));
        kv.insert("hidden", self.radial.hidden.to_string());
        kv.insert("lr", format!("{:e}", t.adam.lr));
        kv.insert("beta1", format!("{:e}", t.adam.beta1));
        kv.insert("beta2", format!("{:e}", t.adam.beta2));
        kv.insert("eps", format!("{:e}", t.adam.eps));
        kv.insert("epochs", t.epochs.to_string());
        kv.insert("batch_size", t.batch_size.to_string());
        kv.insert("max_steps", t.max_steps.map_or_else(|| "none".into(), |m| m.to_string()));
        kv.insert("train_count", self.train_count.to_string());
        kv.insert("data", self.data.as_ref().map_or_else(|| "generated".into(), |p| p.display().to_string()));
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }
}

fn max_order(layer: &tfn::layers::LayerSpec) -> Option<usize> {
    use tfn::layers::LayerSpec::*;
    match layer {
        Convolution { paths, .. } => paths.iter().map(|p| p.l_in.max(p.l_filter).max(p.l_out)).max(),
        SelfInteraction { channels, .. } | MDependentSelfInteraction { channels, .. } => channels.keys().max().copied(),
        Nonlinearity { .. } => None,
    }
}

/// Hex SHA-256 of a canonical description.
pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse("task = gravity\n").unwrap();
        assert_eq!(c.train, task_defaults(TaskKind::Gravity).train);
        assert_eq!(c.l_max, 2);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(RunConfig::parse("task = tetris\nlearning_rate = 1\n").unwrap_err().to_string().contains("unknown key"));
        assert!(RunConfig::parse("task = tetris\nseed = 1\nseed = 2\n").unwrap_err().to_string().contains("twice"));
        assert!(RunConfig::parse("seed = 1\n").is_err());
        assert!(RunConfig::parse("task = cubes\n").is_err());
        assert!(RunConfig::parse("schema = other/1\ntask = tetris\n").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in ["lr = -1", "epochs = 0", "r_max = -2", "beta1 = 1.0", "l_max = 1", "seed = x", "max_steps = 0"] {
            let text = format!("task = inertia\n{bad}\n");
            assert!(RunConfig::parse(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_spelling_and_output_location() {
        let a = RunConfig::parse("task = tetris\nlr = 0.01\nout_dir = a\n").unwrap();
        let b = RunConfig::parse("# same run\nout_dir=b\n  lr = 1e-2  \ntask=tetris").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse("task = tetris\nlr = 0.02\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
