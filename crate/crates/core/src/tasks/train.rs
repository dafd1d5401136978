use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledSample, TaskKind, Target};
use super::missing::HIT_RADIUS;
use super::model::{Model, Prediction};
use crate::autodiff::{Adam, AdamConfig, NdArray, ParamStore, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 1,
            max_steps: None,
            adam: AdamConfig::default(),
        }
    }
}

/// One row of the metrics log. `metric` is the running task metric over the
/// epoch, measured before each update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub metric: f64,
}

/// Accumulates the task metric over predictions.
#[derive(Clone, Debug, Default)]
struct MetricAcc {
    count: usize,
    hits: usize,
    type_hits: usize,
    abs_err: f64,
    sq_target: f64,
    entries: usize,
    distance: f64,
}

impl MetricAcc {
    fn add(&mut self, pred: &Prediction, target: &Target) -> Result<()> {
        self.count += 1;
        let mut entrywise = |p: &mut dyn Iterator<Item = f64>, t: &mut dyn Iterator<Item = f64>| {
            for (a, b) in p.zip(t) {
                self.abs_err += (a - b).abs();
                self.sq_target += b * b;
                self.entries += 1;
            }
        };
        match (pred, target) {
            (Prediction::Logits(z), &Target::Class(c)) => self.hits += usize::from(Prediction::argmax(z) == c),
            (Prediction::Vectors(p), Target::Vectors(t)) => {
                entrywise(&mut p.iter().flatten().copied(), &mut t.iter().flatten().copied())
            }
            (Prediction::Matrix(p), Target::Matrix(t)) => {
                entrywise(&mut p.iter().flatten().copied(), &mut t.iter().flatten().copied())
            }
            (Prediction::Missing { position, type_logits }, &Target::Missing { position: m, kind }) => {
                let d = (0..3).map(|i| (position[i] - m[i]).powi(2)).sum::<f64>().sqrt();
                self.distance += d;
                self.hits += usize::from(d < HIT_RADIUS);
                self.type_hits += usize::from(Prediction::argmax(type_logits) == kind);
            }
            _ => return Err(Error::Incompatible("prediction does not match target".into())),
        }
        Ok(())
    }

    fn primary(&self, task: TaskKind) -> f64 {
        match task {
            TaskKind::Tetris | TaskKind::MissingPoint => self.hits as f64 / self.count.max(1) as f64,
            TaskKind::Gravity | TaskKind::Inertia => self.abs_err / self.entries.max(1) as f64,
        }
    }
}

pub fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Tetris => "accuracy",
        TaskKind::Gravity => "vector_mae",
        TaskKind::Inertia => "matrix_mae",
        TaskKind::MissingPoint => "replacement_accuracy",
    }
}

/// Adam on per-sample losses, gradients averaged over each batch. Aborts
/// on the first non-finite loss.
pub fn train(model: &Model, params: &mut ParamStore, data: &[LabeledSample], cfg: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    train_with(model, params, data, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch.
pub fn train_with(
    model: &Model,
    params: &mut ParamStore,
    data: &[LabeledSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if data.is_empty() {
        return Err(Error::invalid("train", "empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("train", "batch_size must be positive"));
    }
    if let Some(s) = data.iter().find(|s| s.task != model.task()) {
        return Err(Error::Incompatible(format!("{} model given a {} sample", model.task(), s.task)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut steps = 0;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = MetricAcc::default();
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                if seen > 0 {
                    push(&mut log, &mut on_epoch, epoch, steps, loss_sum / seen as f64, acc.primary(model.task()));
                }
                break 'epochs;
            }
            let mut grads: BTreeMap<String, NdArray> = BTreeMap::new();
            for &i in batch {
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape);
                let (loss, pred) = model.loss(&mut tape, &bound, &data[i])?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss { loss: value, epoch, step: b });
                }
                loss_sum += value;
                seen += 1;
                acc.add(&pred, &data[i].target)?;
                for (name, g) in tape.backward(loss)?.by_name() {
                    match grads.get_mut(&name) {
                        Some(a) => a.add_assign(&g),
                        None => {
                            grads.insert(name, g);
                        }
                    }
                }
            }
            if batch.len() > 1 {
                let k = 1.0 / batch.len() as f64;
                for g in grads.values_mut() {
                    *g = g.map(|v| v * k);
                }
            }
            adam.step(params, &grads)?;
            steps += 1;
        }
        push(&mut log, &mut on_epoch, epoch, steps, loss_sum / seen.max(1) as f64, acc.primary(model.task()));
    }
    Ok(log)
}

fn push(log: &mut Vec<EpochMetrics>, f: &mut impl FnMut(&EpochMetrics), epoch: usize, steps: usize, loss: f64, metric: f64) {
    let m = EpochMetrics { epoch, steps, loss, metric };
    f(&m);
    log.push(m);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub count: usize,
    pub metric_name: String,
    pub metric: f64,
    pub details: BTreeMap<String, f64>,
}

pub fn evaluate(model: &Model, params: &ParamStore, data: &[LabeledSample]) -> Result<EvalReport> {
    let mut acc = MetricAcc::default();
    for s in data {
        if s.task != model.task() {
            return Err(Error::Incompatible(format!("{} model given a {} sample", model.task(), s.task)));
        }
        acc.add(&model.predict(params, s)?, &s.target)?;
    }
    let task = model.task();
    let mut details = BTreeMap::new();
    match task {
        TaskKind::Gravity | TaskKind::Inertia => {
            let rms = (acc.sq_target / acc.entries.max(1) as f64).sqrt();
            details.insert("target_rms".into(), rms);
            details.insert("mae_over_rms".into(), acc.primary(task) / rms);
        }
        TaskKind::MissingPoint => {
            details.insert("type_accuracy".into(), acc.type_hits as f64 / acc.count.max(1) as f64);
            details.insert("mean_distance".into(), acc.distance / acc.count.max(1) as f64);
        }
        TaskKind::Tetris => {}
    }
    Ok(EvalReport {
        task,
        count: acc.count,
        metric_name: metric_name(task).into(),
        metric: acc.primary(task),
        details,
    })
}

/// `# config_hash=…`, then `epoch,steps,loss,<metric>` rows.
pub fn write_metrics_csv<W: Write>(mut w: W, task: TaskKind, config_hash: &str, log: &[EpochMetrics]) -> Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "epoch,steps,loss,{}", metric_name(task))?;
    for m in log {
        writeln!(w, "{},{},{:e},{:e}", m.epoch, m.steps, m.loss, m.metric)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::RadialConfig;
    use crate::tasks::{gen_gravity_set, ModelSpec};

    fn small_gravity() -> (Model, Vec<LabeledSample>) {
        let m = Model::new(ModelSpec::gravity(RadialConfig::default())).unwrap();
        (m, gen_gravity_set(1, 12))
    }

    #[test]
    fn same_seed_same_log() {
        let (m, data) = small_gravity();
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        let run = || {
            let mut p = m.init_params(5);
            train(&m, &mut p, &data, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn max_steps_stops_early() {
        let (m, data) = small_gravity();
        let cfg = TrainConfig { epochs: 10, max_steps: Some(5), ..Default::default() };
        let mut p = m.init_params(5);
        let log = train(&m, &mut p, &data, &cfg).unwrap();
        assert_eq!(log.last().unwrap().steps, 5);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (m, data) = small_gravity();
        let mut p = m.init_params(5);
        p.get_mut("conv.radial.b2").unwrap().data_mut()[0] = f64::NAN;
        let err = train(&m, &mut p, &data, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, step: 0, .. }));
    }

    #[test]
    fn csv_has_hash_header() {
        let mut buf = Vec::new();
        let log = [EpochMetrics { epoch: 0, steps: 1, loss: 0.5, metric: 1.0 }];
        write_metrics_csv(&mut buf, TaskKind::Tetris, "h", &log).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# config_hash=h\nepoch,steps,loss,accuracy\n0,1,"));
    }
}
