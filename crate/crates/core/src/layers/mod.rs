//! Equivariant layers.
//!
//! Features are dictionaries from rotation order `l` to tensors of shape
//! `[points, channels, 2l + 1]`, the last axis in the harmonic order used by
//! [`crate::so3`].

mod conv;
mod feature;
mod mixing;
mod network;
mod pool;
mod radial;

pub use conv::{filter_eval, point_convolution, ConvLayer, FilterSpec, Geometry};
pub use feature::{FeatureMap, Features, PointCloud};
pub use mixing::{Activation, MDependentSelfInteraction, NormNonlinearity, SelfInteraction, NORM_EPS};
pub use network::{Layer, LayerSpec, Network};
pub(crate) use network::order_keys;
pub use pool::{concat_features, global_pool, sh_vector_to_xyz, vote_aggregate};
pub use radial::{RadialConfig, RadialNet};
