//! Frontier-based next-best-view planning under a flight-time budget, and
//! the lawnmower coverage baseline.

mod coverage;

pub use coverage::{coverage_path, CoverageSweep};

use crate::error::{Error, Result};
use crate::geometry::{travel_cost, Pose};
use crate::mapping::{MultiLayerMap, RayOutcome, VoxelClass};
use crate::world::CameraModel;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePose {
    pub pose: Pose,
    pub info_value: f64,
    pub cost_to_reach: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Score of a ray that ends in unknown space.
    pub unknown_value: f64,
    /// Resolution of the scoring render.
    pub lowres: [usize; 2],
    /// Minimum spacing of candidates along a frontier, meters. `None`
    /// uses half the camera footprint.
    pub spacing: Option<f64>,
    /// Candidates closer than this to the current pose are skipped;
    /// `None` uses half the spacing.
    pub min_move: Option<f64>,
    /// Planned steps per mission before it ends regardless of budget.
    pub max_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            unknown_value: 0.5,
            lowres: [32, 32],
            spacing: None,
            min_move: None,
            max_steps: 200,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lowres[0] == 0 || self.lowres[1] == 0 {
            return Err(Error::Config("scoring resolution must be at least 1x1".into()));
        }
        if !(self.unknown_value >= 0.0) {
            return Err(Error::Config("unknown-space value must be non-negative".into()));
        }
        if matches!(self.spacing, Some(d) if !(d > 0.0)) {
            return Err(Error::Config("candidate spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn spacing_for(&self, camera: &CameraModel) -> f64 {
        self.spacing.unwrap_or(camera.footprint / 2.0)
    }

    pub fn min_move_for(&self, camera: &CameraModel) -> f64 {
        self.min_move.unwrap_or(self.spacing_for(camera) / 2.0)
    }
}

/// Current pose, remaining budget and the path flown so far.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanState {
    pub pose: Pose,
    pub remaining: f64,
    pub budget: f64,
    pub speed: f64,
    pub path: Vec<Pose>,
}

impl PlanState {
    pub fn new(start: Pose, budget: f64, speed: f64) -> Result<Self> {
        if !(budget >= 0.0) || !(speed > 0.0) {
            return Err(Error::Config("budget must be non-negative and speed positive".into()));
        }
        Ok(Self {
            pose: start,
            remaining: budget,
            budget,
            speed,
            path: vec![start],
        })
    }

    pub fn cost_to(&self, target: &Pose) -> f64 {
        travel_cost(&self.pose, target, self.speed)
    }

    /// Flies to `target`, charging the budget. Fails without moving if the
    /// flight would overdraw it.
    pub fn fly_to(&mut self, target: Pose) -> Result<f64> {
        let cost = self.cost_to(&target);
        if cost > self.remaining + 1e-9 {
            return Err(Error::Domain(format!(
                "flight costs {cost:.3} s but only {:.3} s remain",
                self.remaining
            )));
        }
        self.remaining = (self.remaining - cost).max(0.0);
        self.pose = target;
        self.path.push(target);
        Ok(cost)
    }

    /// Total flight time of the executed path.
    pub fn spent(&self) -> f64 {
        self.path
            .windows(2)
            .map(|p| travel_cost(&p[0], &p[1], self.speed))
            .sum()
    }
}

const NEIGHBORS_6: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

fn offset(dims: [usize; 3], idx: [usize; 3], d: [i64; 3]) -> Option<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let v = idx[a] as i64 + d[a];
        if v < 0 || v >= dims[a] as i64 {
            return None;
        }
        out[a] = v as usize;
    }
    Some(out)
}

/// Free voxels with at least one unknown 6-neighbour, grouped into maximal
/// 26-connected components. Components are ordered by their smallest voxel
/// index and list their voxels in ascending order.
pub fn extract_frontiers(map: &MultiLayerMap) -> Result<Vec<Vec<usize>>> {
    let sets = map.classify_voxels(map.params().thresholds())?;
    let grid = *map.grid();
    let dims = grid.dims;
    let is_frontier: Vec<bool> = (0..grid.len())
        .map(|v| {
            sets.class(v) == VoxelClass::Free
                && NEIGHBORS_6.iter().any(|&d| {
                    offset(dims, grid.unlinear(v), d)
                        .is_some_and(|u| sets.class(grid.linear(u)) == VoxelClass::Unknown)
                })
        })
        .collect();

    let mut seen = vec![false; grid.len()];
    let mut components = Vec::new();
    for start in 0..grid.len() {
        if !is_frontier[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(v) = queue.pop_front() {
            members.push(v);
            let idx = grid.unlinear(v);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(u) = offset(dims, idx, [dx, dy, dz]) {
                            let u = grid.linear(u);
                            if is_frontier[u] && !seen[u] {
                                seen[u] = true;
                                queue.push_back(u);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    Ok(components)
}

/// Ground columns of a component in a nearest-neighbour chain starting at
/// the smallest column index; this is the "arc" order along the frontier.
fn arc_order(map: &MultiLayerMap, component: &[usize]) -> Vec<(usize, usize)> {
    let grid = map.grid();
    let mut cols: Vec<(usize, usize)> = component
        .iter()
        .map(|&v| {
            let [x, y, _] = grid.unlinear(v);
            (x, y)
        })
        .collect();
    cols.sort_unstable_by_key(|&(x, y)| (y, x));
    cols.dedup();
    let mut remaining = cols;
    let mut chain = Vec::with_capacity(remaining.len());
    let mut current = remaining.remove(0);
    chain.push(current);
    while !remaining.is_empty() {
        let (best, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let d = (x as i64 - current.0 as i64).pow(2) + (y as i64 - current.1 as i64).pow(2);
                (i, d)
            })
            .min_by_key(|&(i, d)| (d, i))
            .expect("non-empty");
        current = remaining.remove(best);
        chain.push(current);
    }
    chain
}

/// Poses at flight altitude above each frontier, at least `spacing` apart
/// within a component and reachable within the remaining budget. Scores
/// are left at zero.
pub fn sample_candidates(
    map: &MultiLayerMap,
    frontiers: &[Vec<usize>],
    state: &PlanState,
    spacing: f64,
    altitude: f64,
) -> Vec<CandidatePose> {
    let grid = map.grid();
    let mut out = Vec::new();
    if !(state.remaining > 0.0) {
        return out;
    }
    for component in frontiers {
        let mut picked: Vec<Pose> = Vec::new();
        for (x, y) in arc_order(map, component) {
            let c = grid.voxel_center([x, y, 0]);
            let pose = Pose::new(c.x, c.y, altitude);
            if picked.iter().all(|p| p.distance(&pose) >= spacing) {
                picked.push(pose);
            }
        }
        for pose in picked {
            let cost = state.cost_to(&pose);
            if cost <= state.remaining {
                out.push(CandidatePose {
                    pose,
                    info_value: 0.0,
                    cost_to_reach: cost,
                });
            }
        }
    }
    out
}

/// Expected information of viewing from `pose`: per low-resolution ray, 0
/// for free space, `unknown_value` for unknown space, and the surface
/// voxel's mean uncertainty discounted by how often it was trained on.
pub fn score_candidate(map: &MultiLayerMap, pose: &Pose, lowres: &CameraModel, unknown_value: f64) -> f64 {
    let mut total = 0.0;
    for n in 0..lowres.height {
        for m in 0..lowres.width {
            total += match map.cast_pixel(pose, lowres, m, n) {
                RayOutcome::Free => 0.0,
                RayOutcome::Unknown(_) => unknown_value,
                RayOutcome::Surface(v) => {
                    let u = map.model_uncertainty(v).unwrap_or(1.0);
                    u / map.train_count(v).max(1) as f64
                }
            };
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanDecision {
    Next {
        chosen: CandidatePose,
        /// Every scored candidate, in sampling order.
        candidates: Vec<CandidatePose>,
    },
    MissionEnd,
}

/// Picks the best-scoring reachable frontier view. Ties go to the cheaper
/// candidate, then the earlier one.
pub fn plan_next_pose(
    map: &MultiLayerMap,
    state: &PlanState,
    cfg: &PlannerConfig,
    camera: &CameraModel,
) -> Result<PlanDecision> {
    cfg.validate()?;
    let frontiers = extract_frontiers(map)?;
    let min_move = cfg.min_move_for(camera);
    let mut candidates = sample_candidates(map, &frontiers, state, cfg.spacing_for(camera), camera.altitude);
    candidates.retain(|c| c.pose.distance(&state.pose) >= min_move);
    let lowres = camera.with_resolution(cfg.lowres[0], cfg.lowres[1]);
    for c in &mut candidates {
        c.info_value = score_candidate(map, &c.pose, &lowres, cfg.unknown_value);
    }
    let best = candidates.iter().enumerate().fold(None::<(usize, &CandidatePose)>, |best, (i, c)| match best {
        None => Some((i, c)),
        Some((_, b)) if c.info_value > b.info_value || (c.info_value == b.info_value && c.cost_to_reach < b.cost_to_reach) => {
            Some((i, c))
        }
        keep => keep,
    });
    Ok(match best {
        None => PlanDecision::MissionEnd,
        Some((_, &chosen)) => PlanDecision::Next { chosen, candidates },
    })
}

#[cfg(test)]
mod tests;
