use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Tetris,
    Gravity,
    Inertia,
    MissingPoint,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Tetris, TaskKind::Gravity, TaskKind::Inertia, TaskKind::MissingPoint];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Tetris => "tetris",
            TaskKind::Gravity => "gravity",
            TaskKind::Inertia => "inertia",
            TaskKind::MissingPoint => "missing-point",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid("task", format!("unknown task {s:?}; expected tetris, gravity, inertia or missing-point")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    /// One Cartesian vector per point.
    Vectors(Vec<[f64; 3]>),
    /// Row-major 3×3.
    Matrix([[f64; 3]; 3]),
    Missing { position: [f64; 3], kind: usize },
}

impl Target {
    pub fn task(&self) -> TaskKind {
        match self {
            Target::Class(_) => TaskKind::Tetris,
            Target::Vectors(_) => TaskKind::Gravity,
            Target::Matrix(_) => TaskKind::Inertia,
            Target::Missing { .. } => TaskKind::MissingPoint,
        }
    }
}

/// One input cloud with its target.
///
/// `query` is the point at which an inertia tensor is requested; `shape` is
/// the Tetris class a missing-point context was cut from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSample {
    pub task: TaskKind,
    pub seed: u64,
    pub cloud: PointCloud,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<usize>,
    pub target: Target,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        if self.target.task() != self.task {
            return Err(Error::Incompatible(format!(
                "{} sample carries a {} target",
                self.task,
                self.target.task()
            )));
        }
        let n = self.cloud.len();
        match (&self.target, self.task) {
            (Target::Vectors(v), _) if v.len() != n => {
                return Err(Error::shape("LabeledSample", &[n, 3], &[v.len(), 3]));
            }
            (_, TaskKind::Gravity | TaskKind::Inertia) if self.cloud.masses().is_none() => {
                return Err(Error::invalid("LabeledSample", "masses required"));
            }
            (_, TaskKind::Inertia) if self.query.is_none_or(|q| q >= n) => {
                return Err(Error::invalid("LabeledSample", "inertia sample needs a query point inside the cloud"));
            }
            (_, TaskKind::MissingPoint) if self.shape.is_none() || self.cloud.types().is_none() => {
                return Err(Error::invalid("LabeledSample", "missing-point sample needs a shape class and point types"));
            }
            _ => {}
        }
        Ok(())
    }
}

pub const DATASET_SCHEMA: &str = "tfn-dataset/1";

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub schema: String,
    pub task: TaskKind,
    pub seed: u64,
    pub count: usize,
    pub config_hash: String,
}

pub fn write_jsonl<W: Write>(mut w: W, header: &DatasetHeader, samples: &[LabeledSample]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<(DatasetHeader, Vec<LabeledSample>)> {
    let mut lines = r.lines();
    let header: DatasetHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::invalid("dataset", "empty file")),
    };
    if header.schema != DATASET_SCHEMA {
        return Err(Error::Incompatible(format!("dataset schema {:?}, expected {DATASET_SCHEMA:?}", header.schema)));
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSample = serde_json::from_str(&line)?;
        if s.task != header.task {
            return Err(Error::Incompatible(format!("{} sample in a {} dataset", s.task, header.task)));
        }
        s.validate()?;
        samples.push(s);
    }
    if samples.len() != header.count {
        return Err(Error::invalid(
            "dataset",
            format!("header declares {} samples, found {}", header.count, samples.len()),
        ));
    }
    Ok((header, samples))
}
