use super::*;
use crate::geometry::Pose;
use crate::labels::{HumanSelector, PseudoSelector};

/// Two short missions on a small world.
fn tiny() -> MissionConfig {
    let mut cfg = MissionConfig::desk();
    cfg.missions = 2;
    cfg.budget = 40.0;
    cfg.world.width = 48;
    cfg.world.length = 48;
    cfg.camera.width = 24;
    cfg.camera.height = 24;
    cfg.model.mc_samples = 4;
    cfg.eval.views_per_side = 3;
    cfg.train.max_epochs = 20;
    cfg.train.schedule_epochs = 20;
    cfg
}

#[test]
fn intermediate_poses_exclude_endpoints() {
    let a = Pose::new(0.0, 0.0, 30.0);
    let b = Pose::new(30.0, 0.0, 30.0);
    let p = intermediate_poses(&a, &b, 10.0);
    assert_eq!(p, vec![Pose::new(10.0, 0.0, 30.0), Pose::new(20.0, 0.0, 30.0)]);
    assert!(intermediate_poses(&a, &b, 40.0).is_empty());
    assert!(intermediate_poses(&a, &a, 1.0).is_empty());
    let q = intermediate_poses(&a, &Pose::new(0.0, 25.0, 30.0), 10.0);
    assert_eq!(q.len(), 2);
}

#[test]
fn evaluation_poses_stay_inside_the_world() {
    let world = crate::world::generate_world(&tiny().world).unwrap();
    let poses = evaluation_poses(&world, 30.0, 4, 1.0, 7);
    assert_eq!(poses.len(), 16);
    assert!(poses.iter().all(|p| world.contains(p.x, p.y) && p.z == 30.0));
    assert_eq!(poses, evaluation_poses(&world, 30.0, 4, 1.0, 7));
}

#[test]
fn campaign_respects_budget_and_counts() {
    let cfg = tiny();
    let mut c = Campaign::new(cfg.clone()).unwrap();
    for k in 1..=cfg.missions {
        let m = c.run_mission(None).unwrap();
        assert_eq!(m.mission, k);
        assert!(m.budget_spent <= cfg.budget + 1e-9);
        assert!((0.0..=1.0).contains(&m.miou));
        assert_eq!(c.rebuilds(), k);
    }
    let human: usize = c.human_labels().map(|(_, l)| l.len()).sum();
    assert_eq!(c.oracle().queries() as usize, human);
    assert!(c.human_labels().all(|(_, l)| l.len() <= cfg.alpha_pixels()));
    assert!(c.pseudo_labels().all(|(f, _)| f.kind() == crate::world::FrameKind::Intermediate));
    // consecutive poses of each flight stay within budget
    for path in &c.record().paths {
        let cost: f64 = path.windows(2).map(|w| crate::travel_cost(&w[0], &w[1], cfg.speed)).sum();
        assert!(cost <= cfg.budget + 1e-6);
    }
}

#[test]
fn human_only_mode_has_no_pseudo_pixels() {
    let cfg = MissionConfig {
        pseudo: PseudoSelector::None,
        missions: 1,
        ..tiny()
    };
    let rec = run_campaign(&cfg, None).unwrap();
    assert_eq!(rec.metrics[0].pseudo_pixels, 0);
}

#[test]
fn dense_human_mode_labels_every_pixel() {
    let cfg = MissionConfig {
        human: HumanSelector::Dense,
        missions: 1,
        ..tiny()
    };
    let rec = run_campaign(&cfg, None).unwrap();
    let m = &rec.metrics[0];
    assert_eq!(m.human_pixels, m.planned_frames * 24 * 24);
}

#[test]
fn coverage_planner_runs() {
    let cfg = MissionConfig {
        planner: PlannerKind::Coverage,
        missions: 1,
        ..tiny()
    };
    let rec = run_campaign(&cfg, None).unwrap();
    assert!(rec.metrics[0].planned_frames > 1);
}

#[test]
fn run_directory_holds_every_artifact() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let rec = run_campaign(&cfg, Some(root.path())).unwrap();
    let dir = root.path().join(cfg.run_id().unwrap());
    for f in ["config.toml", "metrics.csv", "planner_trace.csv", "maps/latest.map", "checkpoints/mission_02.ckpt"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_dir(dir.join("labels")).unwrap().count() > 0);
    let back = persist::read_metrics(&dir.join("metrics.csv")).unwrap();
    assert_eq!(back.len(), rec.metrics.len());
    for (a, b) in back.iter().zip(&rec.metrics) {
        assert_eq!(a.human_pixels, b.human_pixels);
        assert!((a.miou - b.miou).abs() < 1e-6);
    }
    let snap = MissionConfig::from_toml(&std::fs::read_to_string(dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(snap, cfg);
}

#[test]
fn single_point_grid_matches_a_campaign() {
    let cfg = MissionConfig { missions: 1, ..tiny() };
    let spec = GridSpec {
        base: cfg.clone(),
        axes: Default::default(),
        seeds: vec![cfg.seed],
    };
    let (points, runs) = run_grid(&spec, None, 2, &|_| {}).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(runs[0].record, run_campaign(&cfg, None).unwrap());
}

#[test]
fn seed_summary_averages_missions() {
    let mk = |miou: f64| CampaignRecord {
        metrics: vec![MissionMetrics {
            mission: 1,
            planned_frames: 1,
            pseudo_frames: 0,
            human_pixels: 10,
            pseudo_pixels: 0,
            budget_spent: 0.0,
            miou,
            accuracy: 0.5,
            class_iou: vec![],
        }],
        ..Default::default()
    };
    let s = summarize_seeds(&[mk(0.2), mk(0.4)]);
    assert_eq!(s.len(), 1);
    assert!((s[0].miou_mean - 0.3).abs() < 1e-12);
    assert_eq!(s[0].runs, 2);
}

#[test]
#[ignore]
fn desk_campaign_timing() {
    let t = std::time::Instant::now();
    let rec = run_campaign(&MissionConfig::desk(), None).unwrap();
    for m in &rec.metrics {
        eprintln!("{m:?}");
    }
    eprintln!("elapsed {:?}", t.elapsed());
}
