use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledSample, TaskKind, Target};
use super::missing::{INPUT_CHANNELS as MISSING_INPUT, NUM_TYPES};
use super::physics::traceless_basis;
use super::tetris::NUM_CLASSES;
use crate::autodiff::{Bound, Checkpoint, NdArray, ParamStore, Tape, Var};
use crate::equivariance::{Output, PointMap};
use crate::error::{Error, Result};
use crate::layers::{
    global_pool, sh_vector_to_xyz, vote_aggregate, FeatureMap, Features, LayerSpec, Network, PointCloud, RadialConfig,
};

pub const ARCHITECTURE_SCHEMA: &str = "tfn-architecture/1";
pub const MODEL_SCHEMA: &str = "tfn-model/1";

/// Layer stack plus the task, which fixes the input encoding and output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub schema: String,
    pub task: TaskKind,
    #[serde(with = "crate::layers::order_keys")]
    pub input_channels: BTreeMap<usize, usize>,
    pub layers: Vec<LayerSpec>,
}

fn module(tag: usize, inputs: &[usize], out_max: usize, channels: usize, radial: RadialConfig) -> Vec<LayerSpec> {
    let orders: Vec<(usize, usize)> = (0..=out_max).map(|l| (l, channels)).collect();
    vec![
        LayerSpec::convolution(format!("conv{tag}"), inputs, 1, out_max, radial),
        LayerSpec::self_interaction(format!("si{tag}"), &orders),
        LayerSpec::nonlinearity(format!("nl{tag}")),
    ]
}

impl ModelSpec {
    /// Three modules of convolution (all paths through orders 0 and 1),
    /// self-interaction and nonlinearity; the last keeps order 0 only.
    pub fn tetris(channels: usize, radial: RadialConfig) -> Self {
        let mut layers = module(1, &[0], 1, channels, radial);
        layers.extend(module(2, &[0, 1], 1, channels, radial));
        layers.extend(module(3, &[0, 1], 0, channels, radial));
        Self {
            schema: ARCHITECTURE_SCHEMA.into(),
            task: TaskKind::Tetris,
            input_channels: BTreeMap::from([(0, 1)]),
            layers,
        }
    }

    /// A single order-1 convolution of the masses.
    pub fn gravity(radial: RadialConfig) -> Self {
        Self {
            schema: ARCHITECTURE_SCHEMA.into(),
            task: TaskKind::Gravity,
            input_channels: BTreeMap::from([(0, 1)]),
            layers: vec![LayerSpec::convolution("conv", &[0], 1, 1, radial).only_paths(&[(0, 1, 1)])],
        }
    }

    /// Single layer of order-0 and order-2 convolutions of the masses.
    pub fn inertia(radial: RadialConfig) -> Self {
        Self {
            schema: ARCHITECTURE_SCHEMA.into(),
            task: TaskKind::Inertia,
            input_channels: BTreeMap::from([(0, 1)]),
            layers: vec![LayerSpec::convolution("conv", &[0], 2, 2, radial).only_paths(&[(0, 0, 0), (0, 2, 2)])],
        }
    }

    /// Two modules, then a convolution and a self-interaction down to
    /// `NUM_TYPES` type logits plus one confidence (order 0) and one
    /// displacement (order 1).
    pub fn missing_point(channels: usize, radial: RadialConfig) -> Self {
        let mut layers = module(1, &[0], 1, channels, radial);
        layers.extend(module(2, &[0, 1], 1, channels, radial));
        layers.push(LayerSpec::convolution("conv3", &[0, 1], 1, 1, radial));
        layers.push(LayerSpec::SelfInteraction {
            name: "out".into(),
            channels: BTreeMap::from([(0, NUM_TYPES + 1), (1, 1)]),
            bias: true,
        });
        Self {
            schema: ARCHITECTURE_SCHEMA.into(),
            task: TaskKind::MissingPoint,
            input_channels: BTreeMap::from([(0, MISSING_INPUT)]),
            layers,
        }
    }

    pub fn default_for(task: TaskKind, channels: usize, radial: RadialConfig) -> Self {
        match task {
            TaskKind::Tetris => Self::tetris(channels, radial),
            TaskKind::Gravity => Self::gravity(radial),
            TaskKind::Inertia => Self::inertia(radial),
            TaskKind::MissingPoint => Self::missing_point(channels, radial),
        }
    }
}

impl LayerSpec {
    /// Restricts a convolution to the listed `(l_in, l_filter, l_out)` paths.
    pub fn only_paths(self, keep: &[(usize, usize, usize)]) -> Self {
        match self {
            LayerSpec::Convolution { name, paths, radial, cutoff } => LayerSpec::Convolution {
                name,
                paths: paths
                    .into_iter()
                    .filter(|p| keep.contains(&(p.l_in, p.l_filter, p.l_out)))
                    .collect(),
                radial,
                cutoff,
            },
            other => other,
        }
    }
}

/// Numeric model output for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Logits(Vec<f64>),
    Vectors(Vec<[f64; 3]>),
    Matrix([[f64; 3]; 3]),
    Missing { position: [f64; 3], type_logits: Vec<f64> },
}

impl Prediction {
    pub fn argmax(v: &[f64]) -> usize {
        v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
    }
}

/// Output head values on the tape.
#[derive(Clone, Copy, Debug)]
enum Head {
    Logits(Var),
    Vectors(Var),
    Matrix(Var),
    Missing { position: Var, type_logits: Var },
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    network: Network,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.schema != ARCHITECTURE_SCHEMA {
            return Err(Error::Incompatible(format!(
                "architecture schema {:?}, expected {ARCHITECTURE_SCHEMA:?}",
                spec.schema
            )));
        }
        let want_in = match spec.task {
            TaskKind::MissingPoint => MISSING_INPUT,
            _ => 1,
        };
        if spec.input_channels != BTreeMap::from([(0, want_in)]) {
            return Err(Error::Incompatible(format!(
                "{} models take {want_in} order-0 input channel(s), got {:?}",
                spec.task, spec.input_channels
            )));
        }
        let network = Network::new(spec.input_channels.clone(), &spec.layers)?;
        let out = network.output_channels();
        let ok = match spec.task {
            TaskKind::Tetris => out.contains_key(&0),
            TaskKind::Gravity => out.get(&1) == Some(&1),
            TaskKind::Inertia => out.get(&0) == Some(&1) && out.get(&2) == Some(&1),
            TaskKind::MissingPoint => out.get(&0) == Some(&(NUM_TYPES + 1)) && out.get(&1) == Some(&1),
        };
        if !ok {
            return Err(Error::Incompatible(format!("{} head cannot read network outputs {out:?}", spec.task)));
        }
        Ok(Self { spec, network })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn task(&self) -> TaskKind {
        self.spec.task
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    fn head_channels(&self) -> usize {
        self.network.output_channels().get(&0).copied().unwrap_or(0)
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        self.network.init_params(&mut store, &mut rng);
        if self.task() == TaskKind::Tetris {
            let c = self.head_channels();
            store.insert("head.w", NdArray::randn(&[NUM_CLASSES, c], 1.0 / (c as f64).sqrt(), &mut rng));
            store.insert("head.b", NdArray::zeros(&[NUM_CLASSES]));
        }
        store
    }

    /// Per-point input encoding of a sample.
    pub fn input_features(&self, sample: &LabeledSample) -> Result<Features> {
        let n = sample.cloud.len();
        match self.task() {
            TaskKind::Tetris => Ok(Features::scalars(&vec![1.0; n])),
            TaskKind::Gravity | TaskKind::Inertia => Ok(Features::scalars(
                sample.cloud.masses().ok_or_else(|| Error::invalid("input_features", "masses required"))?,
            )),
            TaskKind::MissingPoint => {
                let class = sample.shape.ok_or_else(|| Error::invalid("input_features", "shape class required"))?;
                let types = sample.cloud.types().ok_or_else(|| Error::invalid("input_features", "types required"))?;
                if class >= NUM_CLASSES || types.iter().any(|&t| t >= NUM_TYPES) {
                    return Err(Error::invalid("input_features", "class or type out of range"));
                }
                let mut x = NdArray::zeros(&[n, MISSING_INPUT, 1]);
                for (a, &t) in types.iter().enumerate() {
                    x.set(&[a, class, 0], 1.0);
                    x.set(&[a, NUM_CLASSES + t, 0], 1.0);
                }
                Features::per_point(BTreeMap::from([(0, x)]))
            }
        }
    }

    fn param(bound: &Bound, name: &str) -> Result<Var> {
        bound.get(name).copied().ok_or_else(|| Error::Parameter {
            name: name.into(),
            msg: "not bound on the tape".into(),
        })
    }

    fn head(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cloud: &PointCloud,
        features: &Features,
        query: Option<usize>,
    ) -> Result<Head> {
        let x = FeatureMap::from_features(tape, features)?;
        let y = self.network.forward(tape, bound, cloud, &x)?;
        let n = cloud.len();
        Ok(match self.task() {
            TaskKind::Tetris => {
                let pooled = global_pool(tape, &y)?;
                let w = Self::param(bound, "head.w")?;
                let b = Self::param(bound, "head.b")?;
                let z = tape.matmul(w, pooled[&0])?;
                let z = tape.reshape(z, &[NUM_CLASSES])?;
                Head::Logits(tape.add(z, b)?)
            }
            TaskKind::Gravity => {
                let v = tape.reshape(y.get(1)?, &[n, 3])?;
                Head::Vectors(sh_vector_to_xyz(tape, v)?)
            }
            TaskKind::Inertia => {
                let q = query.ok_or_else(|| Error::invalid("inertia head", "query point required"))?;
                if q >= n {
                    return Err(Error::invalid("inertia head", format!("query {q} outside a {n}-point cloud")));
                }
                let s = tape.gather(y.get(0)?, &[q])?;
                let s = tape.reshape(s, &[1, 1])?;
                let t = tape.gather(y.get(2)?, &[q])?;
                let t = tape.reshape(t, &[1, 5])?;
                let st = tape.concat(&[s, t], 1)?;
                let basis = tape.constant(embedding_matrix());
                let m = tape.matmul(st, basis)?;
                Head::Matrix(tape.reshape(m, &[9])?)
            }
            TaskKind::MissingPoint => {
                let s = y.get(0)?;
                let types = tape.narrow(s, 1, 0, NUM_TYPES)?;
                let types = tape.reshape(types, &[n, NUM_TYPES])?;
                let conf = tape.narrow(s, 1, NUM_TYPES, 1)?;
                let (position, w) = vote_aggregate(tape, cloud, conf, y.get(1)?)?;
                let w = tape.reshape(w, &[n, 1])?;
                let weighted = tape.mul(types, w)?;
                Head::Missing { position, type_logits: tape.sum_axis(weighted, 0)? }
            }
        })
    }

    fn prediction(tape: &Tape, head: Head) -> Prediction {
        match head {
            Head::Logits(v) => Prediction::Logits(tape.value(v).data().to_vec()),
            Head::Vectors(v) => Prediction::Vectors(tape.value(v).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()),
            Head::Matrix(v) => {
                let d = tape.value(v).data();
                Prediction::Matrix([[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]])
            }
            Head::Missing { position, type_logits } => {
                let p = tape.value(position).data();
                Prediction::Missing {
                    position: [p[0], p[1], p[2]],
                    type_logits: tape.value(type_logits).data().to_vec(),
                }
            }
        }
    }

    fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
        let lp = tape.log_softmax(logits, 0)?;
        let picked = tape.gather(lp, &[label])?;
        let s = tape.sum_all(picked)?;
        Ok(tape.scale(s, -1.0))
    }

    fn mse(tape: &mut Tape, pred: Var, target: Vec<f64>) -> Result<Var> {
        let k = 1.0 / target.len() as f64;
        let t = tape.constant(NdArray::new(tape.shape(pred).to_vec(), target)?);
        let d = tape.sub(pred, t)?;
        let sq = tape.square(d);
        let s = tape.sum_all(sq)?;
        Ok(tape.scale(s, k))
    }

    /// Scalar training loss for one sample, with the prediction it came from.
    pub fn loss(&self, tape: &mut Tape, bound: &Bound, sample: &LabeledSample) -> Result<(Var, Prediction)> {
        if sample.task != self.task() {
            return Err(Error::Incompatible(format!("{} model given a {} sample", self.task(), sample.task)));
        }
        let features = self.input_features(sample)?;
        let head = self.head(tape, bound, &sample.cloud, &features, sample.query)?;
        let loss = match (head, &sample.target) {
            (Head::Logits(z), &Target::Class(c)) => Self::cross_entropy(tape, z, c)?,
            (Head::Vectors(v), Target::Vectors(t)) => Self::mse(tape, v, t.iter().flatten().copied().collect())?,
            (Head::Matrix(m), Target::Matrix(t)) => Self::mse(tape, m, t.iter().flatten().copied().collect())?,
            (Head::Missing { position, type_logits }, &Target::Missing { position: target, kind }) => {
                let t = tape.constant(NdArray::vector(target.to_vec()));
                let d = tape.sub(position, t)?;
                let sq = tape.square(d);
                let dist = tape.sum_all(sq)?;
                let ce = Self::cross_entropy(tape, type_logits, kind)?;
                tape.add(dist, ce)?
            }
            _ => return Err(Error::Incompatible("target does not match the model head".into())),
        };
        Ok((loss, Self::prediction(tape, head)))
    }

    pub fn predict(&self, params: &ParamStore, sample: &LabeledSample) -> Result<Prediction> {
        let features = self.input_features(sample)?;
        self.predict_features(params, &sample.cloud, &features, sample.query)
    }

    pub fn predict_features(
        &self,
        params: &ParamStore,
        cloud: &PointCloud,
        features: &Features,
        query: Option<usize>,
    ) -> Result<Prediction> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let head = self.head(&mut tape, &bound, cloud, features, query)?;
        Ok(Self::prediction(&tape, head))
    }

    /// Parameters this model expects, with fresh values; used to check a checkpoint.
    pub fn param_template(&self) -> ParamStore {
        self.init_params(0)
    }
}

/// `[6, 9]`: row 0 is `I/√3`, rows 1..6 the flattened traceless basis.
fn embedding_matrix() -> NdArray {
    let mut data = Vec::with_capacity(54);
    let iso = 1.0 / 3f64.sqrt();
    data.extend((0..9).map(|k| if k % 4 == 0 { iso } else { 0.0 }));
    for e in traceless_basis() {
        data.extend(e.iter().flatten());
    }
    NdArray::new(vec![6, 9], data).expect("6 × 9")
}

/// The model as a point-cloud map for property checks: Tetris gives pooled
/// logits, gravity per-point accelerations (order 1), inertia the per-point
/// order 0 and 2 outputs the tensor is read from, missing point the voted
/// position.
pub struct ModelMap<'a> {
    pub model: &'a Model,
    pub params: &'a ParamStore,
}

impl PointMap for ModelMap<'_> {
    fn name(&self) -> String {
        format!("{} model", self.model.task())
    }

    fn output_orders(&self) -> Vec<usize> {
        match self.model.task() {
            TaskKind::Tetris => vec![0],
            TaskKind::Gravity | TaskKind::MissingPoint => vec![1],
            TaskKind::Inertia => vec![0, 2],
        }
    }

    fn apply(&self, cloud: &PointCloud, input: &Features) -> Result<Output> {
        match self.model.task() {
            TaskKind::Tetris => match self.model.predict_features(self.params, cloud, input, None)? {
                Prediction::Logits(z) => Ok(Output::Pooled(Features(BTreeMap::from([(
                    0,
                    NdArray::new(vec![z.len(), 1], z)?,
                )])))),
                _ => unreachable!(),
            },
            TaskKind::Gravity | TaskKind::Inertia => {
                Ok(Output::PerPoint(self.model.network.evaluate(self.params, cloud, input)?))
            }
            TaskKind::MissingPoint => match self.model.predict_features(self.params, cloud, input, None)? {
                Prediction::Missing { position, .. } => Ok(Output::Position(position)),
                _ => unreachable!(),
            },
        }
    }
}

/// Architecture, parameters and the hash of the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub config_hash: String,
    pub architecture: ModelSpec,
    pub checkpoint: Checkpoint,
}

impl ModelFile {
    pub fn new(model: &Model, params: &ParamStore, config_hash: impl Into<String>) -> Self {
        Self {
            schema: MODEL_SCHEMA.into(),
            config_hash: config_hash.into(),
            architecture: model.spec().clone(),
            checkpoint: params.to_checkpoint(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads and checks that the parameters fit the architecture.
    pub fn load(path: &Path) -> Result<(Self, Model, ParamStore)> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Incompatible(format!("model schema {:?}, expected {MODEL_SCHEMA:?}", file.schema)));
        }
        let (model, params) = file.instantiate()?;
        Ok((file, model, params))
    }

    pub fn instantiate(&self) -> Result<(Model, ParamStore)> {
        let model = Model::new(self.architecture.clone())?;
        let params = ParamStore::from_checkpoint(&self.checkpoint)?;
        params.check_compatible(&model.param_template())?;
        Ok((model, params))
    }
}
