use super::*;
use crate::geometry::Vec3;
use crate::mapping::{MapParams, VoxelGrid};
use crate::model::UncertaintyImage;
use crate::model::PredictionTensor;
use crate::raster::Raster;
use crate::world::{FrameKind, FrameTag, WorldModel};
use approx::assert_relative_eq;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn map(dims: [usize; 3]) -> MultiLayerMap {
    MultiLayerMap::new(VoxelGrid::new(dims, 1.0, Vec3::new(0.0, 0.0, -1.0)), 2, MapParams::default()).unwrap()
}

fn make_free(m: &mut MultiLayerMap, v: usize) {
    m.apply_miss(v);
    m.apply_miss(v);
}

fn make_occupied(m: &mut MultiLayerMap, v: usize) {
    m.apply_hit(v);
}

#[test]
fn no_frontiers_in_blank_or_fully_free_map() {
    let mut m = map([4, 4, 2]);
    assert!(extract_frontiers(&m).unwrap().is_empty());
    for v in 0..m.len() {
        make_free(&mut m, v);
    }
    assert!(extract_frontiers(&m).unwrap().is_empty());
}

fn brute_frontier(m: &MultiLayerMap) -> BTreeSet<usize> {
    let g = *m.grid();
    let [w, l, h] = g.dims;
    let mut out = BTreeSet::new();
    for z in 0..h {
        for y in 0..l {
            for x in 0..w {
                let v = g.linear([x, y, z]);
                if m.voxel_class(v) != VoxelClass::Free {
                    continue;
                }
                let mut nbrs = Vec::new();
                if x > 0 { nbrs.push([x - 1, y, z]); }
                if x + 1 < w { nbrs.push([x + 1, y, z]); }
                if y > 0 { nbrs.push([x, y - 1, z]); }
                if y + 1 < l { nbrs.push([x, y + 1, z]); }
                if z > 0 { nbrs.push([x, y, z - 1]); }
                if z + 1 < h { nbrs.push([x, y, z + 1]); }
                if nbrs.iter().any(|&n| m.voxel_class(g.linear(n)) == VoxelClass::Unknown) {
                    out.insert(v);
                }
            }
        }
    }
    out
}

fn adjacent26(g: &VoxelGrid, a: usize, b: usize) -> bool {
    let (pa, pb) = (g.unlinear(a), g.unlinear(b));
    a != b && (0..3).all(|i| pa[i].abs_diff(pb[i]) <= 1)
}

#[test]
fn half_observed_world_has_boundary_band() {
    let side = 24;
    let world = WorldModel::new(
        Raster::filled(side, side, 1u8),
        Raster::filled(side, side, 0.0),
        vec![[0.5; 3]; side * side],
        1.0,
        2,
    )
    .unwrap();
    let mut m = MultiLayerMap::for_world(&world, MapParams::default()).unwrap();
    let cam = CameraModel::new(24, 48, 12.0, 3.0).unwrap();
    let frame = world
        .sense(&Pose::new(6.0, 12.0, 3.0), &cam, 0.0, 0, FrameTag::new(0, FrameKind::Planned))
        .unwrap();
    let probs = PredictionTensor::from_probs(24, 48, 2, vec![0.5; 24 * 48 * 2]);
    m.integrate_frame(&frame, &probs, &UncertaintyImage::filled(24, 48, 0.5)).unwrap();

    let comps = extract_frontiers(&m).unwrap();
    assert!(!comps.is_empty());
    let union: BTreeSet<usize> = comps.iter().flatten().copied().collect();
    assert_eq!(union.len(), comps.iter().map(Vec::len).sum::<usize>(), "components overlap");
    assert_eq!(union, brute_frontier(&m));
    let g = *m.grid();
    for (i, a) in comps.iter().enumerate() {
        for b in &comps[i + 1..] {
            assert!(!a.iter().any(|&u| b.iter().any(|&v| adjacent26(&g, u, v))), "not maximal");
        }
        // connected: flood from the first member reaches all
        let mut reached = BTreeSet::from([a[0]]);
        let mut grew = true;
        while grew {
            grew = false;
            for &v in a {
                if !reached.contains(&v) && reached.iter().any(|&u| adjacent26(&g, u, v)) {
                    reached.insert(v);
                    grew = true;
                }
            }
        }
        assert_eq!(reached.len(), a.len());
    }
    // the band sits at the boundary of the observed strip, x ≈ 12
    assert!(union.iter().all(|&v| {
        let [x, _, _] = g.unlinear(v);
        (9..=14).contains(&x)
    }));
}

/// One row of ten free voxels next to a row of unknown ones.
fn line_frontier() -> MultiLayerMap {
    let mut m = MultiLayerMap::new(VoxelGrid::new([10, 2, 1], 1.0, Vec3::new(0.0, 0.0, 0.0)), 2, MapParams::default()).unwrap();
    for x in 0..10 {
        make_free(&mut m, x);
    }
    m
}

#[test]
fn line_frontier_spacing() {
    let m = line_frontier();
    let f = extract_frontiers(&m).unwrap();
    assert_eq!(f.len(), 1);
    let state = PlanState::new(Pose::new(0.0, 0.0, 20.0), 1e6, 1.0).unwrap();
    let c = sample_candidates(&m, &f, &state, 5.0, 20.0);
    assert!((2..=3).contains(&c.len()));
    for (i, a) in c.iter().enumerate() {
        for b in &c[i + 1..] {
            assert!(a.pose.distance(&b.pose) >= 5.0);
        }
    }
    let broke = PlanState::new(Pose::new(0.5, 0.5, 20.0), 0.0, 1.0).unwrap();
    assert!(sample_candidates(&m, &f, &broke, 5.0, 20.0).is_empty());
    let tight = PlanState::new(Pose::new(0.5, 0.5, 20.0), 4.0, 1.0).unwrap();
    let c = sample_candidates(&m, &f, &tight, 1.0, 20.0);
    assert!(!c.is_empty());
    assert!(c.iter().all(|c| c.cost_to_reach <= 4.0));
}

#[test]
fn free_view_scores_zero_and_unknown_view_counts_prior() {
    let mut m = map([2, 2, 2]);
    let cam = CameraModel::new(2, 2, 2.0, 10.0).unwrap();
    let pose = Pose::new(1.0, 1.0, 10.0);
    assert_relative_eq!(score_candidate(&m, &pose, &cam, 0.1), 0.4, epsilon = 1e-12);
    for v in 0..m.len() {
        make_free(&mut m, v);
    }
    assert_eq!(score_candidate(&m, &pose, &cam, 0.1), 0.0);
}

#[test]
fn mixed_view_sums_per_ray_terms() {
    let mut m = map([2, 2, 2]);
    let g = *m.grid();
    // the upper layer is free everywhere
    for x in 0..2 {
        for y in 0..2 {
            make_free(&mut m, g.linear([x, y, 1]));
        }
    }
    make_free(&mut m, g.linear([0, 0, 0]));
    // (1, 0, 0) stays unknown
    let a = g.linear([0, 1, 0]);
    make_occupied(&mut m, a);
    m.set_uncertainty_stats(a, 0.4, 1, 2);
    let b = g.linear([1, 1, 0]);
    make_occupied(&mut m, b);
    m.set_uncertainty_stats(b, 0.9, 1, 1);
    let cam = CameraModel::new(2, 2, 2.0, 10.0).unwrap();
    let s = score_candidate(&m, &Pose::new(1.0, 1.0, 10.0), &cam, 0.1);
    assert_relative_eq!(s, 0.0 + 0.1 + 0.2 + 0.9, epsilon = 1e-12);
}

#[test]
fn single_candidate_is_chosen() {
    let m = line_frontier();
    let state = PlanState::new(Pose::new(5.0, 0.5, 20.0), 1e6, 1.0).unwrap();
    let cfg = PlannerConfig {
        spacing: Some(100.0),
        min_move: Some(0.0),
        ..Default::default()
    };
    let cam = CameraModel::new(8, 8, 4.0, 20.0).unwrap();
    match plan_next_pose(&m, &state, &cfg, &cam).unwrap() {
        PlanDecision::Next { chosen, candidates } => {
            assert_eq!(candidates.len(), 1);
            assert_eq!(chosen, candidates[0]);
        }
        PlanDecision::MissionEnd => panic!("expected a candidate"),
    }
    let nothing = map([3, 3, 1]);
    assert_eq!(plan_next_pose(&nothing, &state, &cfg, &cam).unwrap(), PlanDecision::MissionEnd);
}

#[test]
fn plan_state_guards_budget() {
    let mut s = PlanState::new(Pose::new(0.0, 0.0, 10.0), 10.0, 2.0).unwrap();
    assert_eq!(s.fly_to(Pose::new(12.0, 0.0, 10.0)).unwrap(), 6.0);
    assert!(s.fly_to(Pose::new(12.0, 10.0, 10.0)).is_err());
    assert_eq!(s.path.len(), 2);
    assert_relative_eq!(s.spent() + s.remaining, 10.0);
}

/// A map with a free upper layer and random surface statistics below.
fn random_surface_map(stats: &[(f64, u32, u32)], known: &[bool]) -> MultiLayerMap {
    let mut m = map([6, 6, 3]);
    let g = *m.grid();
    for x in 0..6 {
        for y in 0..6 {
            make_free(&mut m, g.linear([x, y, 2]));
            let i = y * 6 + x;
            if known[i] {
                make_free(&mut m, g.linear([x, y, 1]));
                let v = g.linear([x, y, 0]);
                make_occupied(&mut m, v);
                let (u, c, t) = stats[i];
                m.set_uncertainty_stats(v, u * c as f64, c, t);
            }
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chosen_candidate_dominates(
        stats in proptest::collection::vec((0.0..1.0f64, 1u32..4, 0u32..4), 36),
        known in proptest::collection::vec(any::<bool>(), 36),
        scale in 0.1..5.0f64,
    ) {
        let m = random_surface_map(&stats, &known);
        let state = PlanState::new(Pose::new(3.0, 3.0, 10.0), 1e6, 1.0).unwrap();
        let cam = CameraModel::new(8, 8, 3.0, 10.0).unwrap();
        let cfg = PlannerConfig { unknown_value: 0.0, lowres: [4, 4], spacing: Some(1.0), min_move: Some(0.0), ..Default::default() };
        let first = plan_next_pose(&m, &state, &cfg, &cam).unwrap();
        if let PlanDecision::Next { chosen, candidates } = &first {
            for c in candidates {
                prop_assert!(chosen.info_value >= c.info_value);
                prop_assert!(c.cost_to_reach <= state.remaining);
            }
        }
        // scaling every M_U leaves the choice unchanged when unknown space is worth 0
        let scaled: Vec<(f64, u32, u32)> = stats.iter().map(|&(u, c, t)| (u * scale, c, t)).collect();
        let m2 = random_surface_map(&scaled, &known);
        let second = plan_next_pose(&m2, &state, &cfg, &cam).unwrap();
        match (first, second) {
            (PlanDecision::Next { chosen: a, .. }, PlanDecision::Next { chosen: b, .. }) => {
                prop_assert_eq!(a.pose, b.pose);
            }
            (PlanDecision::MissionEnd, PlanDecision::MissionEnd) => {}
            _ => prop_assert!(false, "decision kind changed"),
        }
    }
}
