use activeseg_core::labels::region_impurity;
use activeseg_core::model::Architecture;
use activeseg_core::planner::{plan_next_pose, score_candidate};
use activeseg_core::world::{generate_world, FrameKind, FrameTag};
use activeseg_core::{MissionConfig, MultiLayerMap, PlanState, Pose, SurrogateModel};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

struct Fixture {
    cfg: MissionConfig,
    world: activeseg_core::WorldModel,
    model: SurrogateModel,
    frame: activeseg_core::Frame,
    map: MultiLayerMap,
}

/// Desk-scale world and model, with a map that has seen a few views.
fn fixture() -> Fixture {
    let cfg = MissionConfig::desk();
    let world = generate_world(&cfg.world).unwrap();
    let arch = Architecture::new(cfg.model.patch_radius, cfg.model.hidden, world.num_classes());
    let model = SurrogateModel::new(arch, cfg.model.dropout, 7).unwrap();
    let (w, l) = world.extent();
    let cam = cfg.camera;
    let pose = Pose::new(w / 2.0, l / 2.0, cam.altitude);
    let frame = world.sense(&pose, &cam, cfg.sensor_noise, 1, FrameTag::new(0, FrameKind::Planned)).unwrap();
    let mut map = MultiLayerMap::for_world(&world, cfg.map).unwrap();
    for (i, (x, y)) in [(0.3, 0.3), (0.5, 0.5), (0.7, 0.4)].into_iter().enumerate() {
        let p = Pose::new(x * w, y * l, cam.altitude);
        let f = world.sense(&p, &cam, 0.0, 0, FrameTag::new(i as u64 + 1, FrameKind::Planned)).unwrap();
        let (probs, unc) = model.mc_predict(&f, 4, i as u64).unwrap();
        map.integrate_frame(&f, &probs, &unc).unwrap();
    }
    Fixture { cfg, world, model, frame, map }
}

fn hot_paths(c: &mut Criterion) {
    let fx = fixture();
    let cfg = &fx.cfg;

    c.bench_function("mc_predict", |b| {
        b.iter(|| fx.model.mc_predict(black_box(&fx.frame), cfg.model.mc_samples, 3).unwrap())
    });

    let (probs, unc) = fx.model.mc_predict(&fx.frame, cfg.model.mc_samples, 3).unwrap();
    c.bench_function("integrate_frame", |b| {
        b.iter_batched_ref(
            || fx.map.clone(),
            |map| map.integrate_frame(black_box(&fx.frame), &probs, &unc).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });

    let lowres = cfg.camera.with_resolution(cfg.planning.lowres[0], cfg.planning.lowres[1]);
    let (w, l) = fx.world.extent();
    let pose = Pose::new(0.4 * w, 0.6 * l, cfg.camera.altitude);
    c.bench_function("score_candidate", |b| {
        b.iter(|| score_candidate(&fx.map, black_box(&pose), &lowres, cfg.planning.unknown_value))
    });

    let state = PlanState::new(Pose::new(0.5 * w, 0.5 * l, cfg.camera.altitude), cfg.budget, cfg.speed).unwrap();
    c.bench_function("plan_next_pose", |b| {
        b.iter(|| plan_next_pose(&fx.map, black_box(&state), &cfg.planning, &cfg.camera).unwrap())
    });

    let labels = fx.model.predict(&fx.frame).unwrap().ml_labels().clone();
    c.bench_function("region_impurity", |b| b.iter(|| region_impurity(black_box(&labels), cfg.radius).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = hot_paths
}
criterion_main!(benches);
