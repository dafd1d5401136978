use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tfn::so3::wigner_d;
use tfn::tasks::{gen_gravity_set, gen_tetris, task_defaults, Model, ModelSpec, TaskKind};
use tfn::{CgTable, Rotation, Tape};

fn so3(c: &mut Criterion) {
    let mut g = c.benchmark_group("cg_table");
    for l in [1, 2, 3] {
        g.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, &l| b.iter(|| CgTable::new(black_box(l))));
    }
    g.finish();
    let rot = Rotation::from_seed(7);
    let mut g = c.benchmark_group("wigner_d");
    for l in [1, 2, 4] {
        g.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, &l| b.iter(|| wigner_d(black_box(l), &rot)));
    }
    g.finish();
}

fn model(task: TaskKind) -> (Model, tfn::autodiff::ParamStore) {
    let d = task_defaults(task);
    let m = Model::new(ModelSpec::default_for(task, d.channels, d.radial)).unwrap();
    let p = m.init_params(0);
    (m, p)
}

fn networks(c: &mut Criterion) {
    let cases = [
        ("tetris", model(TaskKind::Tetris), gen_tetris(true, true, 1).remove(0)),
        ("gravity", model(TaskKind::Gravity), gen_gravity_set(1, 1).remove(0)),
    ];
    let mut g = c.benchmark_group("network");
    for (name, (m, p), sample) in &cases {
        g.bench_function(BenchmarkId::new("forward", name), |b| b.iter(|| m.predict(p, black_box(sample)).unwrap()));
        g.bench_function(BenchmarkId::new("forward_backward", name), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let bound = p.bind(&mut tape);
                let (loss, _) = m.loss(&mut tape, &bound, black_box(sample)).unwrap();
                tape.backward(loss).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, so3, networks);
criterion_main!(benches);
