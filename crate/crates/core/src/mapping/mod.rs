//! Multi-layer probabilistic voxel map: occupancy (`M_G`), per-class
//! semantics (`M_S`), model uncertainty (`M_U`) and training-occurrence
//! counts (`M_T`).

mod io;
mod raycast;

pub use io::MapLayer;
pub use raycast::VoxelGrid;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::labels::VOID;
use crate::model::{argmax, McSettings, PredictionTensor, SurrogateModel, UncertaintyImage};
use crate::raster::Raster;
use crate::world::{CameraModel, Frame, WorldModel};
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;

/// Endpoints are pushed this far past the measured surface so that they
/// land inside the surface voxel.
const SURFACE_EPS: f64 = 1e-6;

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// `ln(sigmoid(l))`, stable for large `|l|`.
#[inline]
fn log_sigmoid(l: f64) -> f64 {
    -((-l).max(0.0) + (-l.abs()).exp().ln_1p())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapParams {
    pub p_hit: f64,
    pub p_miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub tau_occupied: f64,
    pub tau_free: f64,
    /// Semantic measurement probabilities are clamped to
    /// `[floor, 1 - floor]`.
    pub semantic_floor: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            p_hit: 0.7,
            p_miss: 0.4,
            clamp_min: -2.0,
            clamp_max: 3.5,
            tau_occupied: 0.65,
            tau_free: 0.35,
            semantic_floor: 0.01,
        }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !open(self.p_hit) || !open(self.p_miss) || self.p_hit <= 0.5 || self.p_miss >= 0.5 {
            return Err(Error::Config("need 0.5 < p_hit < 1 and 0 < p_miss < 0.5".into()));
        }
        if self.clamp_min >= self.clamp_max {
            return Err(Error::Config("occupancy clamp range is empty".into()));
        }
        if !(self.semantic_floor > 0.0 && self.semantic_floor < 0.5) {
            return Err(Error::Config("semantic floor must lie in (0, 0.5)".into()));
        }
        self.thresholds().validate()
    }

    pub fn thresholds(&self) -> OccupancyThresholds {
        OccupancyThresholds {
            occupied: self.tau_occupied,
            free: self.tau_free,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupancyThresholds {
    pub occupied: f64,
    pub free: f64,
}

impl OccupancyThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.free >= self.occupied {
            return Err(Error::Config(format!(
                "free threshold {} must be below occupied threshold {}",
                self.free, self.occupied
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VoxelClass {
    Free,
    Unknown,
    Occupied,
}

/// Disjoint free / unknown / occupied labelling of every voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelSets {
    classes: Vec<VoxelClass>,
}

impl VoxelSets {
    #[inline]
    pub fn class(&self, i: usize) -> VoxelClass {
        self.classes[i]
    }

    pub fn as_slice(&self) -> &[VoxelClass] {
        &self.classes
    }

    pub fn indices(&self, class: VoxelClass) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == class)
            .map(|(i, _)| i)
    }

    pub fn count(&self, class: VoxelClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// What a rendering ray runs into. Only free voxels are traversable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayOutcome {
    /// Left the grid through free space only.
    Free,
    Unknown(usize),
    Surface(usize),
}

/// Semantics rendered from the map at a camera pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticRender {
    /// Pixel-major normalized class probabilities; zeros on misses.
    pub probs: Vec<f64>,
    /// Maximum-likelihood class, [`VOID`] on misses.
    pub labels: Raster<u8>,
    pub hit_mask: Raster<bool>,
}

impl SemanticRender {
    pub fn hit_count(&self) -> usize {
        self.hit_mask.as_slice().iter().filter(|h| **h).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLayerMap {
    grid: VoxelGrid,
    classes: usize,
    params: MapParams,
    l_hit: f64,
    l_miss: f64,
    geo: Vec<f64>,
    updates: Vec<u32>,
    sem: Vec<f64>,
    unc_sum: Vec<f64>,
    unc_count: Vec<u32>,
    train_count: Vec<u32>,
}

impl MultiLayerMap {
    pub fn new(grid: VoxelGrid, classes: usize, params: MapParams) -> Result<Self> {
        params.validate()?;
        if grid.is_empty() || classes == 0 || !(grid.voxel_size > 0.0) {
            return Err(Error::Config("map needs voxels, a positive voxel size and classes".into()));
        }
        let n = grid.len();
        Ok(Self {
            grid,
            classes,
            params,
            l_hit: logit(params.p_hit),
            l_miss: logit(params.p_miss),
            geo: vec![0.0; n],
            updates: vec![0; n],
            sem: vec![0.0; n * classes],
            unc_sum: vec![0.0; n],
            unc_count: vec![0; n],
            train_count: vec![0; n],
        })
    }

    /// Grid aligned with the world's cells, one voxel per cell footprint,
    /// tall enough for the highest terrain plus one voxel of headroom. The
    /// bottom layer spans `[-v, 0)` so flat ground sits inside it.
    pub fn for_world(world: &WorldModel, params: MapParams) -> Result<Self> {
        Self::for_world_with_voxel(world, params, world.cell_size())
    }

    /// As [`for_world`](Self::for_world) with voxels of side `v`.
    pub fn for_world_with_voxel(world: &WorldModel, params: MapParams, v: f64) -> Result<Self> {
        if !(v > 0.0) {
            return Err(Error::Config(format!("voxel size {v} must be positive")));
        }
        let (w, l) = world.extent();
        let cells = |e: f64| ((e / v - 1e-9).ceil() as usize).max(1);
        let top = Self::surface_layer(world.max_height(), v);
        let grid = VoxelGrid::new([cells(w), cells(l), top + 2], v, Vec3::new(0.0, 0.0, -v));
        Self::new(grid, world.num_classes(), params)
    }

    fn surface_layer(height: f64, v: f64) -> usize {
        ((height + v) / v - SURFACE_EPS).floor().max(0.0) as usize
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn occupancy_log_odds(&self, v: usize) -> f64 {
        self.geo[v]
    }

    pub fn occupancy(&self, v: usize) -> f64 {
        sigmoid(self.geo[v])
    }

    pub fn update_count(&self, v: usize) -> u32 {
        self.updates[v]
    }

    pub fn semantic_log_odds(&self, v: usize) -> &[f64] {
        &self.sem[v * self.classes..(v + 1) * self.classes]
    }

    /// Per-layer probabilities normalized across the `K` layers.
    pub fn semantic_probs(&self, v: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        self.semantic_probs_into(v, &mut out);
        out
    }

    fn semantic_probs_into(&self, v: usize, out: &mut [f64]) {
        let l = self.semantic_log_odds(v);
        let mut max = f64::NEG_INFINITY;
        for (o, &x) in out.iter_mut().zip(l) {
            *o = log_sigmoid(x);
            max = max.max(*o);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    /// `M_U`: mean of the uncertainty observations, `None` if there are none.
    pub fn model_uncertainty(&self, v: usize) -> Option<f64> {
        (self.unc_count[v] > 0).then(|| self.unc_sum[v] / self.unc_count[v] as f64)
    }

    pub fn uncertainty_count(&self, v: usize) -> u32 {
        self.unc_count[v]
    }

    pub fn train_count(&self, v: usize) -> u32 {
        self.train_count[v]
    }

    pub fn apply_hit(&mut self, v: usize) {
        self.geo[v] = (self.geo[v] + self.l_hit).clamp(self.params.clamp_min, self.params.clamp_max);
        self.updates[v] = self.updates[v].saturating_add(1);
    }

    pub fn apply_miss(&mut self, v: usize) {
        self.geo[v] = (self.geo[v] + self.l_miss).clamp(self.params.clamp_min, self.params.clamp_max);
        self.updates[v] = self.updates[v].saturating_add(1);
    }

    /// Independent binary Bayes update of each class layer.
    pub fn apply_semantics(&mut self, v: usize, probs: &[f64]) {
        let floor = self.params.semantic_floor;
        let k = self.classes;
        for (l, &p) in self.sem[v * k..(v + 1) * k].iter_mut().zip(probs) {
            *l += logit(p.clamp(floor, 1.0 - floor));
        }
    }

    pub fn apply_uncertainty(&mut self, v: usize, u: f64) {
        self.unc_sum[v] += u;
        self.unc_count[v] += 1;
    }

    /// Test and tooling hook: overwrite `M_U` and `M_T` of one voxel.
    pub fn set_uncertainty_stats(&mut self, v: usize, sum: f64, count: u32, train_count: u32) {
        self.unc_sum[v] = sum;
        self.unc_count[v] = count;
        self.train_count[v] = train_count;
    }

    pub fn voxel_class(&self, v: usize) -> VoxelClass {
        self.classify_with(v, self.params.thresholds())
    }

    #[inline]
    fn classify_with(&self, v: usize, t: OccupancyThresholds) -> VoxelClass {
        if self.updates[v] == 0 {
            return VoxelClass::Unknown;
        }
        let p = sigmoid(self.geo[v]);
        if p >= t.occupied {
            VoxelClass::Occupied
        } else if p <= t.free {
            VoxelClass::Free
        } else {
            VoxelClass::Unknown
        }
    }

    pub fn classify_voxels(&self, thresholds: OccupancyThresholds) -> Result<VoxelSets> {
        thresholds.validate()?;
        Ok(VoxelSets {
            classes: (0..self.len()).map(|v| self.classify_with(v, thresholds)).collect(),
        })
    }

    /// Measured surface point of pixel `(m, n)`, pushed just inside the
    /// surface. `None` for pixels without a return.
    fn endpoint(frame: &Frame, m: usize, n: usize) -> Option<Vec3> {
        let depth = frame.depth().at(m, n);
        if !depth.is_finite() || depth <= 0.0 {
            return None;
        }
        let pose = frame.pose();
        let dir = frame.camera().ray_direction(pose, m, n);
        let end = pose.position() + dir * (depth / pose.z);
        Some(end + dir.normalized() * SURFACE_EPS)
    }

    fn check_inputs(&self, frame: &Frame, probs: &PredictionTensor, unc: &UncertaintyImage) -> Result<()> {
        if (probs.width(), probs.height()) != (frame.width(), frame.height())
            || (unc.width(), unc.height()) != (frame.width(), frame.height())
        {
            return Err(Error::Domain("prediction size differs from frame".into()));
        }
        if probs.classes() != self.classes {
            return Err(Error::Domain(format!(
                "prediction has {} classes, map has {}",
                probs.classes(),
                self.classes
            )));
        }
        Ok(())
    }

    /// Integrates one frame: misses along each ray, a hit plus semantic and
    /// uncertainty updates at its endpoint. Rays ending outside the grid
    /// only contribute misses.
    pub fn integrate_frame(
        &mut self,
        frame: &Frame,
        probs: &PredictionTensor,
        unc: &UncertaintyImage,
    ) -> Result<()> {
        self.check_inputs(frame, probs, unc)?;
        let origin = frame.pose().position();
        for n in 0..frame.height() {
            for m in 0..frame.width() {
                let Some(end) = Self::endpoint(frame, m, n) else {
                    continue;
                };
                let end_voxel = self.grid.voxel_of(end).map(|i| self.grid.linear(i));
                let grid = self.grid;
                let mut traversed = Vec::new();
                grid.traverse::<()>(origin, end, |idx| {
                    let v = grid.linear(idx);
                    if Some(v) == end_voxel {
                        return ControlFlow::Break(());
                    }
                    traversed.push(v);
                    ControlFlow::Continue(())
                });
                for v in traversed {
                    self.apply_miss(v);
                }
                if let Some(v) = end_voxel {
                    self.apply_hit(v);
                    self.apply_semantics(v, probs.probs_at(m, n));
                    self.apply_uncertainty(v, unc.at(m, n));
                }
            }
        }
        Ok(())
    }

    /// Semantic and uncertainty updates only; geometry untouched.
    fn integrate_semantics(
        &mut self,
        frame: &Frame,
        probs: &PredictionTensor,
        unc: &UncertaintyImage,
    ) -> Result<()> {
        self.check_inputs(frame, probs, unc)?;
        for n in 0..frame.height() {
            for m in 0..frame.width() {
                let Some(end) = Self::endpoint(frame, m, n) else {
                    continue;
                };
                if let Some(idx) = self.grid.voxel_of(end) {
                    let v = self.grid.linear(idx);
                    self.apply_semantics(v, probs.probs_at(m, n));
                    self.apply_uncertainty(v, unc.at(m, n));
                }
            }
        }
        Ok(())
    }

    /// Adds one to `M_T` of every distinct voxel the frame's rays end in.
    pub fn increment_counts(&mut self, frame: &Frame) {
        let mut voxels: Vec<usize> = (0..frame.height())
            .flat_map(|n| (0..frame.width()).map(move |m| (m, n)))
            .filter_map(|(m, n)| Self::endpoint(frame, m, n))
            .filter_map(|p| self.grid.voxel_of(p))
            .map(|idx| self.grid.linear(idx))
            .collect();
        voxels.sort_unstable();
        voxels.dedup();
        for v in voxels {
            self.train_count[v] += 1;
        }
    }

    /// Recomputes `M_S` and `M_U` from every stored frame with `model`, in
    /// order. `M_G` and `M_T` carry over unchanged.
    pub fn rebuild(&self, frames: &[&Frame], model: &SurrogateModel, mc: McSettings) -> Result<Self> {
        let mut out = self.clone();
        out.sem.fill(0.0);
        out.unc_sum.fill(0.0);
        out.unc_count.fill(0);
        for frame in frames {
            let (probs, unc) = mc.infer(model, frame)?;
            out.integrate_semantics(frame, &probs, &unc)?;
        }
        Ok(out)
    }

    /// Casts a ray from `origin` along `dir` until it leaves the grid or
    /// meets a non-free voxel.
    pub fn cast(&self, origin: Vec3, end: Vec3) -> RayOutcome {
        let thresholds = self.params.thresholds();
        let grid = self.grid;
        grid.traverse(origin, end, |idx| {
            let v = grid.linear(idx);
            match self.classify_with(v, thresholds) {
                VoxelClass::Free => ControlFlow::Continue(()),
                VoxelClass::Unknown => ControlFlow::Break(RayOutcome::Unknown(v)),
                VoxelClass::Occupied => ControlFlow::Break(RayOutcome::Surface(v)),
            }
        })
        .unwrap_or(RayOutcome::Free)
    }

    /// Casts the ray of pixel `(m, n)` from `pose` down through the grid.
    pub fn cast_pixel(&self, pose: &Pose, camera: &CameraModel, m: usize, n: usize) -> RayOutcome {
        let dir = camera.ray_direction(pose, m, n);
        let floor = self.grid.origin.z - self.grid.voxel_size;
        let t_end = (pose.z - floor) / pose.z;
        self.cast(pose.position(), pose.position() + dir * t_end)
    }

    /// Renders normalized class probabilities and their argmax. Pixels not
    /// reflected by a surface voxel are misses.
    pub fn render_semantics(&self, pose: &Pose, camera: &CameraModel) -> SemanticRender {
        self.render(pose, camera).0
    }

    /// Renders `M_U`; misses and voxels without observations render as 1.
    pub fn render_uncertainty(&self, pose: &Pose, camera: &CameraModel) -> UncertaintyImage {
        self.render(pose, camera).1
    }

    /// Both renders from one set of rays.
    pub fn render(&self, pose: &Pose, camera: &CameraModel) -> (SemanticRender, UncertaintyImage) {
        let (w, h, k) = (camera.width, camera.height, self.classes);
        let mut probs = vec![0.0; w * h * k];
        let mut labels = Raster::filled(w, h, VOID);
        let mut hits = Raster::filled(w, h, false);
        let mut unc = Raster::filled(w, h, 1.0);
        for n in 0..h {
            for m in 0..w {
                if let RayOutcome::Surface(v) = self.cast_pixel(pose, camera, m, n) {
                    let i = n * w + m;
                    let px = &mut probs[i * k..(i + 1) * k];
                    self.semantic_probs_into(v, px);
                    *labels.get_mut(m, n) = argmax(px);
                    *hits.get_mut(m, n) = true;
                    if let Some(u) = self.model_uncertainty(v) {
                        *unc.get_mut(m, n) = u;
                    }
                }
            }
        }
        (
            SemanticRender {
                probs,
                labels,
                hit_mask: hits,
            },
            UncertaintyImage::new(unc).expect("mean of values in [0, 1]"),
        )
    }
}

#[cfg(test)]
mod tests;
