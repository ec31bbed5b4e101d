use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use floorloc_core::contrastive::{point_info_nce_grad, ContrastiveBatch, Denominator, PairTerm};
use floorloc_core::crop::extract_crops;
use floorloc_core::floorplan::{cast_ray, render_gt_rays};
use floorloc_core::pose_scoring::top_x;
use floorloc_core::synth::{generate_world, WorldSpec};
use floorloc_core::{CropSpec, FanSpec, GtRayTable, PoseGrid, PoseGridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raycast(c: &mut Criterion) {
    let world = generate_world(&WorldSpec::default()).unwrap();
    let fan = FanSpec::default();
    let pose = world.gt_poses[0];
    c.bench_function("cast_ray", |b| {
        b.iter(|| cast_ray(&world.map, black_box(pose.x), pose.y, black_box(0.3), 10.0).unwrap())
    });
    c.bench_function("render_gt_rays_40", |b| {
        b.iter(|| render_gt_rays(&world.map, black_box(&pose), &fan).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let world = generate_world(&WorldSpec::default()).unwrap();
    let fan = FanSpec::default();
    let grid = PoseGrid::new(&world.map, &PoseGridSpec::default()).unwrap();
    let mut g = c.benchmark_group("scoring");
    g.sample_size(10);
    g.bench_function("gt_table_build", |b| {
        b.iter(|| GtRayTable::build(&world.map, grid.clone(), &fan).unwrap())
    });
    let table = GtRayTable::build(&world.map, grid, &fan).unwrap();
    let pred = render_gt_rays(&world.map, &world.gt_poses[0], &fan).unwrap().depths;
    g.bench_function("dafpm_score", |b| b.iter(|| table.score(black_box(&pred), 0.5).unwrap()));
    let pmap = table.score(&pred, 0.5).unwrap();
    g.bench_function("top_100", |b| b.iter(|| top_x(black_box(&pmap), 100).unwrap()));
    g.finish();
}

fn crops(c: &mut Criterion) {
    let world = generate_world(&WorldSpec::default()).unwrap();
    let poses = &world.gt_poses[..100];
    c.bench_function("extract_100_crops", |b| {
        b.iter(|| extract_crops(&world.map, black_box(poses), &CropSpec::default()).unwrap())
    });
}

fn loss(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut unit = |dim: usize| {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let (pairs, dim) = (64, 32);
    let batch = ContrastiveBatch {
        anchors: (0..pairs).map(|_| unit(dim)).collect(),
        positives: (0..pairs).map(|_| unit(dim)).collect(),
        pos_negatives: (0..pairs * 8).map(|_| unit(dim)).collect(),
        ori_negatives: (0..pairs * 4).map(|_| unit(dim)).collect(),
        terms: (0..pairs)
            .map(|i| PairTerm {
                anchor: i,
                positive: i,
                pos_negatives: (i * 8..i * 8 + 8).collect(),
                ori_negatives: (i * 4..i * 4 + 4).collect(),
            })
            .collect(),
        temperature: 0.07,
    };
    c.bench_function("info_nce_grad_64x12", |b| {
        b.iter(|| point_info_nce_grad(black_box(&batch), Denominator::WithPositive).unwrap())
    });
}

criterion_group!(benches, raycast, scoring, crops, loss);
criterion_main!(benches);
