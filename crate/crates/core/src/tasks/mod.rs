//! The demonstrations: 3D Tetris classification, Newtonian gravity, the
//! moment-of-inertia tensor and a missing-point toy, with generators,
//! analytic oracles, model builders and training.

mod curves;
mod dataset;
mod missing;
mod model;
mod physics;
mod tetris;
mod train;

pub use curves::{fit_scale, radial_curves, radius_grid, scaled_relative_error, write_radial_csv, RadialCurve};
pub use dataset::{read_jsonl, write_jsonl, DatasetHeader, LabeledSample, Target, TaskKind, DATASET_SCHEMA};
pub use missing::{block_type, completions, gen_missing_point, unique_contexts, Context, HIT_RADIUS, NUM_TYPES};
pub use model::{Model, ModelFile, ModelMap, ModelSpec, Prediction, ARCHITECTURE_SCHEMA, MODEL_SCHEMA};
pub use physics::{
    analytic_radial, assemble_symmetric, decompose_symmetric, gen_gravity, gen_gravity_set, gen_inertia,
    gen_inertia_set, gravity_accelerations, inertia_tensor, l2_tensor_factor, mean_min_query_distance,
    network_unit_factor, traceless_basis, RadialKey, GRAVITY_MIN_DISTANCE,
};
pub use tetris::{distance_multiset, gen_tetris, gen_tetris_many, shape_points, NUM_CLASSES, SHAPES, SHAPE_NAMES};
pub use train::{evaluate, metric_name, train, train_with, write_metrics_csv, EpochMetrics, EvalReport, TrainConfig};

/// Seed of sample `index` in a set generated from `seed` (SplitMix64 step).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Network width, radial basis, data sizes and training schedule used when
/// nothing else is configured.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDefaults {
    pub channels: usize,
    pub radial: crate::layers::RadialConfig,
    pub train: TrainConfig,
    pub train_count: usize,
    pub test_count: usize,
}

pub fn task_defaults(task: TaskKind) -> TaskDefaults {
    use crate::autodiff::AdamConfig;
    use crate::layers::RadialConfig;
    let physics = RadialConfig { num_basis: 30, r_min: 0.0, r_max: 2.0, hidden: 32 };
    match task {
        TaskKind::Tetris => TaskDefaults {
            channels: 4,
            // the longest Tetris pair distance is 3
            radial: RadialConfig { r_max: 3.0, ..physics },
            train: TrainConfig { epochs: 250, adam: AdamConfig { lr: 1e-2, ..Default::default() }, ..Default::default() },
            train_count: NUM_CLASSES,
            test_count: 120,
        },
        TaskKind::Gravity | TaskKind::Inertia => TaskDefaults {
            channels: 1,
            radial: physics,
            train: TrainConfig { epochs: 20, ..Default::default() },
            train_count: 1000,
            test_count: 200,
        },
        TaskKind::MissingPoint => TaskDefaults {
            channels: 8,
            radial: RadialConfig { r_max: 3.0, ..physics },
            train: TrainConfig { epochs: 40, adam: AdamConfig { lr: 3e-3, ..Default::default() }, ..Default::default() },
            train_count: 300,
            test_count: 200,
        },
    }
}

/// Training samples for a task: the canonical Tetris shapes, fresh physics
/// clouds, or randomly oriented missing-point contexts.
pub fn gen_train_set(task: TaskKind, seed: u64, count: usize) -> Vec<LabeledSample> {
    match task {
        TaskKind::Tetris => gen_tetris_many(false, false, seed, count),
        TaskKind::Gravity => gen_gravity_set(seed, count),
        TaskKind::Inertia => gen_inertia_set(seed, count),
        TaskKind::MissingPoint => gen_missing_point(seed, count, true, false),
    }
}

/// Held-out samples: randomly rotated and translated where that applies.
pub fn gen_test_set(task: TaskKind, seed: u64, count: usize) -> Vec<LabeledSample> {
    match task {
        TaskKind::Tetris => gen_tetris_many(true, true, seed, count),
        TaskKind::MissingPoint => gen_missing_point(seed, count, true, true),
        _ => gen_train_set(task, seed, count),
    }
}
