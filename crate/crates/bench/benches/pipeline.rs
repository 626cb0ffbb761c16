use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tactile_core::completion::{Completer, CompleterInput, ReferenceCompleter};
use tactile_core::exploration::{initial_state, sample_candidates, score_candidates, ExplorationConfig};
use tactile_core::geometry::{normalized_chamfer, voxel_volume, Pose, SpatialIndex};
use tactile_core::gripper::GripperModel;
use tactile_core::modes::{run_interaction, Clock, InteractionMode, ModeKind};
use tactile_core::primitives::{sample_surface, ObjectSuite};

fn geometry(c: &mut Criterion) {
    let shape = ObjectSuite::table_one().get("box_dr").unwrap().shape.clone();
    let a = sample_surface(&shape, 4096, 1).unwrap();
    let b = sample_surface(&shape, 2048, 2).unwrap();
    c.bench_function("kdtree_build_4096", |bn| bn.iter(|| SpatialIndex::new(black_box(a.points()))));
    let index = SpatialIndex::new(a.points());
    c.bench_function("kdtree_nearest_2048_queries", |bn| {
        bn.iter(|| b.points().iter().map(|q| index.nearest(q).unwrap().1).sum::<f64>())
    });
    c.bench_function("normalized_chamfer_2048_4096", |bn| {
        bn.iter(|| normalized_chamfer(black_box(&b), &a, &a, 1.0).unwrap())
    });
    c.bench_function("voxel_volume_4096", |bn| bn.iter(|| voxel_volume(black_box(&a), 1.0).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let model = GripperModel::default();
    let shape = ObjectSuite::table_one().get("cylinder_small").unwrap().shape.clone();
    let mut group = c.benchmark_group("interaction");
    group.sample_size(10);
    for kind in ModeKind::ALL {
        let cfg = ExplorationConfig {
            mode: InteractionMode::default_for(kind),
            ..Default::default()
        };
        let (start, travel) = initial_state(&model, &shape, &cfg, 3).unwrap();
        group.bench_function(kind.short_name(), |bn| {
            bn.iter(|| {
                let mut clock = Clock::default();
                run_interaction(&model, &start, &shape, &cfg.mode, &cfg.contact, travel, &mut clock).unwrap()
            })
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let shape = ObjectSuite::table_one().get("ball_dr").unwrap().shape.clone();
    let belief = sample_surface(&shape, 2048, 4).unwrap();
    let measured = sample_surface(&shape, 300, 5).unwrap();
    let cfg = ExplorationConfig::default();
    let mut group = c.benchmark_group("planning");
    group.sample_size(10);
    group.bench_function("reference_completion", |bn| {
        let input = CompleterInput::new(&measured, 1.0).unwrap();
        let completer = ReferenceCompleter::default();
        bn.iter(|| completer.complete(&input, 2048, 6).unwrap())
    });
    group.bench_function("sample_and_score_500", |bn| {
        bn.iter(|| {
            let cands = sample_candidates(&belief, &measured, &cfg, 100.0, 7).unwrap();
            score_candidates(&cands, &Pose::identity(), &cfg)
        })
    });
    group.finish();
}

criterion_group!(benches, geometry, simulation, planning);
criterion_main!(benches);
