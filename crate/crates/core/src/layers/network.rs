use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{ConvLayer, FilterSpec, Geometry};
use super::feature::{FeatureMap, Features, PointCloud};
use super::mixing::{Activation, MDependentSelfInteraction, NormNonlinearity, SelfInteraction};
use super::radial::RadialConfig;
use crate::autodiff::{Bound, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::so3::CgTable;

fn default_true() -> bool {
    true
}

/// Order-keyed maps as JSON objects; integer keys are not recovered through
/// an internally tagged enum otherwise.
pub(crate) mod order_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(map: &BTreeMap<usize, T>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>().serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, T>, D::Error> {
        BTreeMap::<String, T>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(|_| D::Error::custom(format!("order key {k:?} is not an integer"))))
            .collect()
    }
}

/// Serializable description of one layer; channel counts of inputs are
/// inferred from the layer below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Convolution {
        name: String,
        paths: Vec<FilterSpec>,
        #[serde(default)]
        radial: RadialConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// `channels`: output channels per order.
    SelfInteraction {
        name: String,
        #[serde(with = "order_keys")]
        channels: BTreeMap<usize, usize>,
        #[serde(default = "default_true")]
        bias: bool,
    },
    Nonlinearity {
        name: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "order_keys")]
        activations: BTreeMap<usize, Activation>,
    },
    MDependentSelfInteraction {
        name: String,
        #[serde(with = "order_keys")]
        channels: BTreeMap<usize, usize>,
    },
}

impl LayerSpec {
    /// Convolution with every path `l_in ⊗ l_f → l_o` for the given input
    /// orders, `l_f ≤ filter_max` and `l_o ≤ out_max`.
    pub fn convolution(
        name: impl Into<String>,
        input_orders: &[usize],
        filter_max: usize,
        out_max: usize,
        radial: RadialConfig,
    ) -> Self {
        let paths = input_orders
            .iter()
            .flat_map(|&li| (0..=filter_max).flat_map(move |lf| FilterSpec::fan_out(li, lf)))
            .filter(|p| p.l_out <= out_max)
            .collect();
        LayerSpec::Convolution {
            name: name.into(),
            paths,
            radial,
            cutoff: None,
        }
    }

    pub fn self_interaction(name: impl Into<String>, channels: &[(usize, usize)]) -> Self {
        LayerSpec::SelfInteraction {
            name: name.into(),
            channels: channels.iter().copied().collect(),
            bias: true,
        }
    }

    pub fn nonlinearity(name: impl Into<String>) -> Self {
        LayerSpec::Nonlinearity {
            name: name.into(),
            activations: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Convolution { name, .. }
            | LayerSpec::SelfInteraction { name, .. }
            | LayerSpec::Nonlinearity { name, .. }
            | LayerSpec::MDependentSelfInteraction { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Convolution(ConvLayer),
    SelfInteraction(SelfInteraction),
    Nonlinearity(NormNonlinearity),
    MDependentSelfInteraction(MDependentSelfInteraction),
}

impl Layer {
    fn build(spec: &LayerSpec, input: &BTreeMap<usize, usize>) -> Result<Self> {
        let pair = |out: &BTreeMap<usize, usize>| -> Result<BTreeMap<usize, (usize, usize)>> {
            out.iter()
                .map(|(&l, &c)| {
                    let cin = *input.get(&l).ok_or(Error::MissingOrder { order: l })?;
                    if c == 0 {
                        return Err(Error::invalid("Network", format!("{}: order {l} needs >= 1 output channel", spec.name())));
                    }
                    Ok((l, (cin, c)))
                })
                .collect()
        };
        Ok(match spec {
            LayerSpec::Convolution { name, paths, radial, cutoff } => {
                Layer::Convolution(ConvLayer::new(name.clone(), paths.clone(), input.clone(), *radial, *cutoff)?)
            }
            LayerSpec::SelfInteraction { name, channels, bias } => Layer::SelfInteraction(SelfInteraction {
                name: name.clone(),
                channels: pair(channels)?,
                bias: *bias,
            }),
            LayerSpec::Nonlinearity { name, activations } => Layer::Nonlinearity(NormNonlinearity {
                name: name.clone(),
                channels: input.clone(),
                activations: activations.clone(),
            }),
            LayerSpec::MDependentSelfInteraction { name, channels } => {
                Layer::MDependentSelfInteraction(MDependentSelfInteraction {
                    name: name.clone(),
                    channels: pair(channels)?,
                })
            }
        })
    }

    pub fn output_channels(&self) -> BTreeMap<usize, usize> {
        match self {
            Layer::Convolution(c) => c.output_channels(),
            Layer::SelfInteraction(s) => s.channels.iter().map(|(&l, &(_, c))| (l, c)).collect(),
            Layer::Nonlinearity(n) => n.channels.clone(),
            Layer::MDependentSelfInteraction(s) => s.channels.iter().map(|(&l, &(_, c))| (l, c)).collect(),
        }
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        match self {
            Layer::Convolution(c) => c.init_params(store, rng),
            Layer::SelfInteraction(s) => s.init_params(store, rng),
            Layer::Nonlinearity(n) => n.init_params(store, rng),
            Layer::MDependentSelfInteraction(s) => s.init_params(store, rng),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        geometry: &Geometry,
        cg: &CgTable,
        input: &FeatureMap,
    ) -> Result<FeatureMap> {
        match self {
            Layer::Convolution(c) => c.forward(tape, bound, geometry, cg, input),
            Layer::SelfInteraction(s) => s.forward(tape, bound, input),
            Layer::Nonlinearity(n) => n.forward(tape, bound, input),
            Layer::MDependentSelfInteraction(s) => s.forward(tape, bound, input),
        }
    }
}

/// A stack of layers with channel counts checked end to end.
#[derive(Clone, Debug)]
pub struct Network {
    input_channels: BTreeMap<usize, usize>,
    layers: Vec<Layer>,
    specs: Vec<LayerSpec>,
    filter_max: usize,
    cg: Arc<CgTable>,
}

impl Network {
    pub fn new(input_channels: BTreeMap<usize, usize>, specs: &[LayerSpec]) -> Result<Self> {
        if input_channels.is_empty() {
            return Err(Error::invalid("Network", "no input orders"));
        }
        let mut channels = input_channels.clone();
        let mut layers = Vec::with_capacity(specs.len());
        let mut names = std::collections::BTreeSet::new();
        let (mut filter_max, mut order_max) = (0, *input_channels.keys().max().unwrap_or(&0));
        for spec in specs {
            if !names.insert(spec.name().to_string()) {
                return Err(Error::invalid("Network", format!("duplicate layer name {:?}", spec.name())));
            }
            let layer = Layer::build(spec, &channels)?;
            if let Layer::Convolution(c) = &layer {
                filter_max = filter_max.max(c.paths.iter().map(|p| p.l_filter).max().unwrap_or(0));
                order_max = order_max.max(c.max_order());
            }
            channels = layer.output_channels();
            if channels.is_empty() {
                return Err(Error::invalid("Network", format!("{} produces no features", spec.name())));
            }
            layers.push(layer);
        }
        Ok(Self {
            input_channels,
            layers,
            specs: specs.to_vec(),
            filter_max,
            cg: Arc::new(CgTable::new(order_max.max(filter_max))),
        })
    }

    pub fn input_channels(&self) -> &BTreeMap<usize, usize> {
        &self.input_channels
    }

    pub fn output_channels(&self) -> BTreeMap<usize, usize> {
        self.layers
            .last()
            .map_or_else(|| self.input_channels.clone(), Layer::output_channels)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn cg(&self) -> &CgTable {
        &self.cg
    }

    pub fn geometry(&self, cloud: &PointCloud) -> Geometry {
        Geometry::new(cloud, self.filter_max)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for layer in &self.layers {
            layer.init_params(store, rng);
        }
    }

    /// Runs layers `range` on the tape.
    pub fn forward_range(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        geometry: &Geometry,
        input: &FeatureMap,
        range: std::ops::Range<usize>,
    ) -> Result<FeatureMap> {
        let mut x = input.clone();
        for layer in &self.layers[range] {
            x = layer.forward(tape, bound, geometry, &self.cg, &x)?;
        }
        Ok(x)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, cloud: &PointCloud, input: &FeatureMap) -> Result<FeatureMap> {
        for (&l, &c) in &self.input_channels {
            match input.channels(tape, l) {
                Some(got) if got == c => {}
                Some(got) => return Err(Error::shape("Network", &[input.num_points(), got, 2 * l + 1], &[input.num_points(), c, 2 * l + 1])),
                None => return Err(Error::MissingOrder { order: l }),
            }
        }
        let geometry = self.geometry(cloud);
        self.forward_range(tape, bound, &geometry, input, 0..self.layers.len())
    }

    /// Forward pass without keeping the tape.
    pub fn evaluate(&self, params: &ParamStore, cloud: &PointCloud, features: &Features) -> Result<Features> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let input = FeatureMap::from_features(&mut tape, features)?;
        Ok(self.forward(&mut tape, &bound, cloud, &input)?.to_features(&tape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Vec<LayerSpec> {
        vec![
            LayerSpec::convolution("c1", &[0], 1, 1, RadialConfig::default()),
            LayerSpec::self_interaction("s1", &[(0, 3), (1, 2)]),
            LayerSpec::nonlinearity("n1"),
        ]
    }

    #[test]
    fn channels_are_inferred() {
        let net = Network::new(BTreeMap::from([(0, 2)]), &small()).unwrap();
        assert_eq!(net.layers()[0].output_channels(), BTreeMap::from([(0, 2), (1, 2)]));
        assert_eq!(net.output_channels(), BTreeMap::from([(0, 3), (1, 2)]));
    }

    #[test]
    fn missing_order_is_reported() {
        let specs = vec![LayerSpec::self_interaction("s", &[(1, 1)])];
        assert!(matches!(
            Network::new(BTreeMap::from([(0, 1)]), &specs),
            Err(Error::MissingOrder { order: 1 })
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let specs = vec![LayerSpec::nonlinearity("x"), LayerSpec::nonlinearity("x")];
        assert!(Network::new(BTreeMap::from([(0, 1)]), &specs).is_err());
    }

    #[test]
    fn specs_round_trip_json() {
        let specs = small();
        let json = serde_json::to_string(&specs).unwrap();
        let back: Vec<LayerSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
        let bad = r#"[{"kind":"nonlinearity","name":"n","extra":1}]"#;
        assert!(serde_json::from_str::<Vec<LayerSpec>>(bad).is_err());
    }

    #[test]
    fn evaluate_produces_declared_shapes() {
        let net = Network::new(BTreeMap::from([(0, 2)]), &small()).unwrap();
        let mut p = ParamStore::new();
        net.init_params(&mut p, &mut ChaCha8Rng::seed_from_u64(3));
        let cloud = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]]).unwrap();
        let x = Features::per_point(BTreeMap::from([(0, crate::autodiff::NdArray::full(&[3, 2, 1], 1.0))])).unwrap();
        let y = net.evaluate(&p, &cloud, &x).unwrap();
        assert_eq!(y.get(0).unwrap().shape(), &[3, 3, 1]);
        assert_eq!(y.get(1).unwrap().shape(), &[3, 2, 3]);
    }
}
