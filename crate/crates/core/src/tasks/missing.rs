use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledSample, TaskKind, Target};
use super::sample_seed;
use super::tetris::{shape_points, NUM_CLASSES, SHAPES, TRANSLATION_RANGE};
use crate::layers::PointCloud;
use crate::so3::Rotation;

pub const NUM_TYPES: usize = 2;
/// Class one-hot followed by type one-hot.
pub const INPUT_CHANNELS: usize = NUM_CLASSES + NUM_TYPES;
/// A replacement counts as correct within this distance of the removed block.
pub const HIT_RADIUS: f64 = 0.5;

/// A shape with one block removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Context {
    pub class: usize,
    pub removed: usize,
}

/// Lattice parity of a block, `(x + y + z) mod 2` in canonical coordinates.
pub fn block_type(p: [i32; 3]) -> usize {
    (p[0] + p[1] + p[2]).rem_euclid(2) as usize
}

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn scale(a: V3, k: f64) -> V3 {
    a.map(|v| v * k)
}
fn dist(a: V3, b: V3) -> f64 {
    dot(sub(a, b), sub(a, b)).sqrt()
}

/// Right-handed orthonormal frame from a non-degenerate triangle, or `None`
/// when the points are collinear.
fn frame(a: V3, b: V3, c: V3) -> Option<[V3; 3]> {
    let e1 = sub(b, a);
    let e1 = scale(e1, 1.0 / dot(e1, e1).sqrt());
    let w = sub(c, a);
    let e2 = sub(w, scale(e1, dot(w, e1)));
    let n2 = dot(e2, e2).sqrt();
    if n2 < 1e-9 {
        return None;
    }
    let e2 = scale(e2, 1.0 / n2);
    Some([e1, e2, cross(e1, e2)])
}

/// Where the fourth block of `class` can sit given three placed blocks, over
/// all proper rigid motions of the shape that cover them. `None` means a
/// continuum of placements (collinear context with an off-axis block).
pub fn completions(class: usize, context: &[V3; 3]) -> Option<Vec<V3>> {
    let shape = shape_points(class);
    let mut out: Vec<V3> = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                if i == j || j == k || i == k {
                    continue;
                }
                let rest = 6 - i - j - k;
                let src = [shape[i], shape[j], shape[k]];
                let congruent = (0..3).all(|u| {
                    (u + 1..3).all(|v| (dist(src[u], src[v]) - dist(context[u], context[v])).abs() < 1e-9)
                });
                if !congruent {
                    continue;
                }
                let candidate = match (frame(src[0], src[1], src[2]), frame(context[0], context[1], context[2])) {
                    (Some(fs), Some(fc)) => {
                        // coordinates of the rest in the source frame, re-expressed in the context frame
                        let d = sub(shape[rest], src[0]);
                        let local = fs.map(|e| dot(d, e));
                        let mut p = context[0];
                        for (e, c) in fc.iter().zip(local) {
                            p = [p[0] + c * e[0], p[1] + c * e[1], p[2] + c * e[2]];
                        }
                        p
                    }
                    _ => {
                        let axis = sub(src[1], src[0]);
                        let d = sub(shape[rest], src[0]);
                        if dot(cross(axis, d), cross(axis, d)) > 1e-12 {
                            return None;
                        }
                        let t = dot(d, axis) / dot(axis, axis);
                        let caxis = sub(context[1], context[0]);
                        [0, 1, 2].map(|c| context[0][c] + t * caxis[c])
                    }
                };
                if !out.iter().any(|&q| dist(q, candidate) < 1e-9) {
                    out.push(candidate);
                }
            }
        }
    }
    Some(out)
}

/// Every (class, removed block) whose completion is unique.
pub fn unique_contexts() -> Vec<Context> {
    let mut out = Vec::new();
    for class in 0..NUM_CLASSES {
        let pts = shape_points(class);
        for removed in 0..4 {
            let ctx: Vec<V3> = (0..4).filter(|&i| i != removed).map(|i| pts[i]).collect();
            if let Some(c) = completions(class, &[ctx[0], ctx[1], ctx[2]]) {
                if c.len() == 1 {
                    out.push(Context { class, removed });
                }
            }
        }
    }
    out
}

/// Samples cycling through [`unique_contexts`], each under its own optional
/// random rotation and translation.
pub fn gen_missing_point(seed: u64, count: usize, rotate: bool, translate: bool) -> Vec<LabeledSample> {
    let contexts = unique_contexts();
    (0..count)
        .map(|i| {
            let ctx = contexts[i % contexts.len()];
            let s = sample_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rot = if rotate { Rotation::random(&mut rng) } else { Rotation::identity() };
            let shift = if translate {
                [0; 3].map(|_| rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE))
            } else {
                [0.0; 3]
            };
            let place = |p: [i32; 3]| {
                let q = rot.apply(p.map(f64::from));
                [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]]
            };
            let blocks = SHAPES[ctx.class];
            let kept: Vec<[i32; 3]> = (0..4).filter(|&k| k != ctx.removed).map(|k| blocks[k]).collect();
            let cloud = PointCloud::new(kept.iter().map(|&p| place(p)).collect())
                .and_then(|c| c.with_types(kept.iter().map(|&p| block_type(p)).collect()))
                .expect("valid context");
            LabeledSample {
                task: TaskKind::MissingPoint,
                seed: s,
                cloud,
                query: None,
                shape: Some(ctx.class),
                target: Target::Missing {
                    position: place(blocks[ctx.removed]),
                    kind: block_type(blocks[ctx.removed]),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_end_is_ambiguous_but_gap_is_not() {
        let line = shape_points(1);
        assert_eq!(completions(1, &[line[0], line[1], line[2]]).unwrap().len(), 2);
        assert_eq!(completions(1, &[line[0], line[1], line[3]]).unwrap(), vec![line[2]]);
    }

    #[test]
    fn collinear_context_of_bent_shape_is_a_continuum() {
        let l = shape_points(5);
        assert!(completions(5, &[l[0], l[1], l[2]]).is_none());
    }

    #[test]
    fn square_corner_is_unique() {
        let sq = shape_points(0);
        assert_eq!(completions(0, &[sq[0], sq[1], sq[2]]).unwrap(), vec![sq[3]]);
    }

    #[test]
    fn every_class_but_the_corner_contributes() {
        let ctx = unique_contexts();
        for class in 0..NUM_CLASSES {
            assert_eq!(ctx.iter().any(|c| c.class == class), class != 4, "class {class}");
        }
        // any 3 blocks of the corner fit it two mirrored ways
        let c = shape_points(4);
        assert_eq!(completions(4, &[c[1], c[2], c[3]]).unwrap().len(), 2);
        assert_eq!(ctx.len(), 15);
        for c in &ctx {
            let pts = shape_points(c.class);
            let kept: Vec<V3> = (0..4).filter(|&i| i != c.removed).map(|i| pts[i]).collect();
            let got = completions(c.class, &[kept[0], kept[1], kept[2]]).unwrap();
            assert!(got.len() == 1 && dist(got[0], pts[c.removed]) < 1e-9);
        }
    }

    #[test]
    fn samples_place_target_consistently() {
        for s in gen_missing_point(4, 20, true, true) {
            s.validate().unwrap();
            let Target::Missing { position, .. } = s.target else { panic!() };
            // the removed block is one lattice step from some kept block
            let near = s.cloud.positions().iter().map(|&p| dist(p, position)).fold(f64::INFINITY, f64::min);
            assert!((near - 1.0).abs() < 1e-9);
        }
    }
}
