use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledSample, TaskKind, Target};
use super::sample_seed;
use crate::layers::PointCloud;
use crate::so3::Rotation;

pub const NUM_CLASSES: usize = 8;

/// Range of random translations along each axis.
pub const TRANSLATION_RANGE: f64 = 3.0;

/// The eight 4-block shapes on the unit lattice. Classes 2 and 3 are mirror
/// images of each other.
pub const SHAPES: [[[i32; 3]; 4]; NUM_CLASSES] = [
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], // square
    [[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 0, 3]], // line
    [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 1, 0]], // chiral
    [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, -1, 0]], // chiral, mirrored
    [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]], // corner
    [[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 0]], // L
    [[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 1]], // T
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 0]], // zigzag
];

pub const SHAPE_NAMES: [&str; NUM_CLASSES] = ["square", "line", "chiral", "chiral-mirror", "corner", "L", "T", "zigzag"];

pub fn shape_points(class: usize) -> Vec<[f64; 3]> {
    SHAPES[class].iter().map(|p| p.map(f64::from)).collect()
}

/// Sorted pairwise distances of a point set.
pub fn distance_multiset(points: &[[f64; 3]]) -> Vec<f64> {
    let mut d = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let v: f64 = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            d.push(v.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

fn random_translation<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE))
}

/// The eight shapes, each optionally under its own random rotation and/or translation.
pub fn gen_tetris(rotate: bool, translate: bool, seed: u64) -> Vec<LabeledSample> {
    gen_tetris_many(rotate, translate, seed, NUM_CLASSES)
}

/// `count` samples cycling through the classes.
pub fn gen_tetris_many(rotate: bool, translate: bool, seed: u64, count: usize) -> Vec<LabeledSample> {
    (0..count)
        .map(|i| {
            let class = i % NUM_CLASSES;
            let s = sample_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut cloud = PointCloud::new(shape_points(class)).expect("fixed shapes are valid");
            if rotate {
                cloud = cloud.rotated(&Rotation::random(&mut rng));
            }
            if translate {
                cloud = cloud.translated(random_translation(&mut rng));
            }
            LabeledSample {
                task: TaskKind::Tetris,
                seed: s,
                cloud,
                query: None,
                shape: None,
                target: Target::Class(class),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_unit_connected() {
        for shape in SHAPES {
            let pts: Vec<[f64; 3]> = shape.iter().map(|p| p.map(f64::from)).collect();
            let d = distance_multiset(&pts);
            assert_eq!(d.iter().filter(|&&v| (v - 1.0).abs() < 1e-12).count() >= 3, true);
            assert!(d[0] > 0.5);
        }
    }

    #[test]
    fn shapes_are_pairwise_distinct_up_to_distances_except_mirror_pair() {
        for a in 0..NUM_CLASSES {
            for b in a + 1..NUM_CLASSES {
                let same = distance_multiset(&shape_points(a))
                    .iter()
                    .zip(distance_multiset(&shape_points(b)))
                    .all(|(x, y)| (x - y).abs() < 1e-12);
                assert_eq!(same, (a, b) == (2, 3), "classes {a} and {b}");
            }
        }
    }

    #[test]
    fn unrotated_is_canonical() {
        let s = gen_tetris(false, false, 9);
        for (i, sample) in s.iter().enumerate() {
            assert_eq!(sample.cloud.positions(), &shape_points(i)[..]);
            assert_eq!(sample.target, Target::Class(i));
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        assert_eq!(gen_tetris(true, true, 5), gen_tetris(true, true, 5));
        assert_ne!(gen_tetris(true, false, 5), gen_tetris(true, false, 6));
    }
}
