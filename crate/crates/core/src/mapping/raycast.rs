//! Voxel traversal (Amanatides & Woo) over an axis-aligned grid.

use crate::geometry::Vec3;
use std::ops::ControlFlow;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    /// Voxels along x, y, z.
    pub dims: [usize; 3],
    pub voxel_size: f64,
    /// World position of the grid's minimum corner.
    pub origin: Vec3,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: Vec3) -> Self {
        Self {
            dims,
            voxel_size,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    #[inline]
    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let plane = self.dims[0] * self.dims[1];
        [i % self.dims[0], (i % plane) / self.dims[0], i / plane]
    }

    pub fn max_corner(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                self.dims[0] as f64 * self.voxel_size,
                self.dims[1] as f64 * self.voxel_size,
                self.dims[2] as f64 * self.voxel_size,
            )
    }

    pub fn voxel_of(&self, p: Vec3) -> Option<[usize; 3]> {
        let mut idx = [0; 3];
        for a in 0..3 {
            let f = ((p.axis(a) - self.origin.axis(a)) / self.voxel_size).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                (idx[0] as f64 + 0.5) * self.voxel_size,
                (idx[1] as f64 + 0.5) * self.voxel_size,
                (idx[2] as f64 + 0.5) * self.voxel_size,
            )
    }

    /// Parameter interval `[t0, t1]` of `start + t (end - start)`, `t` in
    /// `[0, 1]`, that lies inside the grid.
    pub fn clip(&self, start: Vec3, end: Vec3) -> Option<(f64, f64)> {
        let d = end - start;
        let hi = self.max_corner();
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for a in 0..3 {
            let (p, da) = (start.axis(a), d.axis(a));
            let (lo, up) = (self.origin.axis(a), hi.axis(a));
            if da == 0.0 {
                if p < lo || p > up {
                    return None;
                }
            } else {
                let (mut ta, mut tb) = ((lo - p) / da, (up - p) / da);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }

    /// Visits, in order, every voxel the segment passes through. Stops early
    /// when `visit` breaks.
    pub fn traverse<B>(
        &self,
        start: Vec3,
        end: Vec3,
        mut visit: impl FnMut([usize; 3]) -> ControlFlow<B>,
    ) -> Option<B> {
        let (t0, t1) = self.clip(start, end)?;
        let d = end - start;
        let entry = start + d * t0;
        let mut idx = [0isize; 3];
        let mut step = [0isize; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let f = ((entry.axis(a) - self.origin.axis(a)) / self.voxel_size).floor();
            idx[a] = (f as isize).clamp(0, self.dims[a] as isize - 1);
            let da = d.axis(a);
            if da > 0.0 {
                step[a] = 1;
                let boundary = self.origin.axis(a) + (idx[a] + 1) as f64 * self.voxel_size;
                t_max[a] = (boundary - start.axis(a)) / da;
                t_delta[a] = self.voxel_size / da;
            } else if da < 0.0 {
                step[a] = -1;
                let boundary = self.origin.axis(a) + idx[a] as f64 * self.voxel_size;
                t_max[a] = (boundary - start.axis(a)) / da;
                t_delta[a] = -self.voxel_size / da;
            }
        }
        loop {
            if let ControlFlow::Break(b) = visit([idx[0] as usize, idx[1] as usize, idx[2] as usize]) {
                return Some(b);
            }
            let a = if t_max[0] < t_max[1] {
                if t_max[0] < t_max[2] { 0 } else { 2 }
            } else if t_max[1] < t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] >= t1 {
                return None;
            }
            idx[a] += step[a];
            if idx[a] < 0 || idx[a] >= self.dims[a] as isize {
                return None;
            }
            t_max[a] += t_delta[a];
        }
    }

    pub fn traversed_voxels(&self, start: Vec3, end: Vec3) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        self.traverse::<()>(start, end, |v| {
            out.push(v);
            ControlFlow::Continue(())
        });
        out
    }
}
