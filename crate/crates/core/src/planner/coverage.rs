use crate::geometry::{travel_cost, Pose};
use serde::{Deserialize, Serialize};

/// Lawnmower sweep over a `width × length` extent: one lane per footprint,
/// lane centres evenly spread, alternating direction row by row. Truncated
/// so that flying it from the first pose costs at most `budget`.
pub fn coverage_path(extent: (f64, f64), footprint: f64, altitude: f64, speed: f64, budget: f64) -> Vec<Pose> {
    let full = full_sweep(extent, footprint, altitude);
    let mut out = Vec::with_capacity(full.len());
    let mut spent = 0.0;
    for pose in full {
        if let Some(prev) = out.last() {
            let c = travel_cost(prev, &pose, speed);
            if spent + c > budget {
                break;
            }
            spent += c;
        }
        out.push(pose);
    }
    out
}

fn full_sweep(extent: (f64, f64), footprint: f64, altitude: f64) -> Vec<Pose> {
    let (w, l) = extent;
    let nx = ((w / footprint).ceil() as usize).max(1);
    let ny = ((l / footprint).ceil() as usize).max(1);
    let cx = |i: usize| w / (2 * nx) as f64 + i as f64 * w / nx as f64;
    let cy = |j: usize| l / (2 * ny) as f64 + j as f64 * l / ny as f64;
    let mut poses = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for k in 0..nx {
            let i = if j % 2 == 0 { k } else { nx - 1 - k };
            poses.push(Pose::new(cx(i), cy(j), altitude));
        }
    }
    poses
}

/// The coverage baseline across missions: a repeating lawnmower sweep and a
/// cursor into it, so each mission resumes where the last one stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSweep {
    poses: Vec<Pose>,
    cursor: usize,
}

impl CoverageSweep {
    pub fn new(extent: (f64, f64), footprint: f64, altitude: f64) -> Self {
        Self {
            poses: full_sweep(extent, footprint, altitude),
            cursor: 0,
        }
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    /// Next sweep pose if it is reachable from `from` within `remaining`;
    /// advances the cursor only when it is. A single-pose sweep never
    /// yields again once reached.
    pub fn next_within(&mut self, from: &Pose, remaining: f64, speed: f64) -> Option<Pose> {
        if self.poses.len() < 2 && self.cursor > 0 {
            return None;
        }
        let target = self.poses[self.cursor % self.poses.len()];
        (travel_cost(from, &target, speed) <= remaining).then(|| {
            self.cursor += 1;
            target
        })
    }
}
