//! Ground-truth environment, the nadir RGB-D sensor, and the human-annotator
//! oracle.
//!
//! Ground-truth labels never leave this module except through [`Oracle`].
//! [`Frame`] keeps them in a private field, so the model, mapping, planner
//! and label-selection code cannot read them.

mod io;
mod procgen;

pub use io::{load_world, save_world, WorldManifest};
pub use procgen::{generate_world, Layout, WorldSpec};

pub use crate::geometry::{travel_cost, Pose};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::labels::{LabelEntry, Provenance, SparseLabelImage};
use crate::metrics::ConfusionMatrix;
use crate::raster::Raster;
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Channels of the simulated appearance ("RGB").
pub const FEATURE_CHANNELS: usize = 3;

/// Depth value of a pixel whose ray hits nothing.
pub const NO_RETURN: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAppearance {
    /// Mean colour of the class.
    pub color: [f64; FEATURE_CHANNELS],
    /// Amplitude of the per-cell brightness jitter.
    pub texture: f64,
}

/// Recipe that turns a class raster into a feature field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub classes: Vec<ClassAppearance>,
    /// Amplitude of the smooth, class-independent illumination field.
    pub variation: f64,
    pub seed: u64,
}

impl Appearance {
    fn render(&self, classes: &Raster<u8>) -> Vec<[f64; FEATURE_CHANNELS]> {
        let mut rng = rng::rng(self.seed);
        // Three plane waves with wavelengths between 24 and 72 cells.
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let k = std::f64::consts::TAU / (24.0 + 48.0 * rng.random::<f64>());
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                (k * theta.cos(), k * theta.sin(), phase)
            })
            .collect();
        let mut out = Vec::with_capacity(classes.len());
        for n in 0..classes.height() {
            for m in 0..classes.width() {
                let class = &self.classes[classes.at(m, n) as usize - 1];
                let (x, y) = (m as f64, n as f64);
                let light = waves
                    .iter()
                    .map(|(kx, ky, ph)| (kx * x + ky * y + ph).sin())
                    .sum::<f64>()
                    / 3.0;
                let jitter = class.texture * (2.0 * rng.random::<f64>() - 1.0);
                let mut px = [0.0; FEATURE_CHANNELS];
                for (c, v) in px.iter_mut().enumerate() {
                    let tint = 0.25 * class.texture * (2.0 * rng.random::<f64>() - 1.0);
                    *v = (class.color[c] + jitter + tint + self.variation * light).clamp(0.0, 1.0);
                }
                out.push(px);
            }
        }
        out
    }
}

/// The simulated environment: per-cell classes, terrain heights and
/// appearance.
#[derive(Clone, Debug)]
pub struct WorldModel {
    cell_size: f64,
    num_classes: usize,
    classes: Raster<u8>,
    heights: Raster<f64>,
    features: Vec<[f64; FEATURE_CHANNELS]>,
    appearance: Option<Appearance>,
}

impl WorldModel {
    pub fn new(
        classes: Raster<u8>,
        heights: Raster<f64>,
        features: Vec<[f64; FEATURE_CHANNELS]>,
        cell_size: f64,
        num_classes: usize,
    ) -> Result<Self> {
        if !classes.same_shape(&heights) || features.len() != classes.len() {
            return Err(Error::Domain(
                "class, height and feature rasters must have identical dimensions".into(),
            ));
        }
        if classes.is_empty() {
            return Err(Error::Domain("world has no cells".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Domain(format!("invalid cell size {cell_size}")));
        }
        if num_classes == 0 || num_classes > u8::MAX as usize {
            return Err(Error::Domain(format!("invalid class count {num_classes}")));
        }
        if let Some(bad) = classes
            .as_slice()
            .iter()
            .find(|&&c| c == 0 || c as usize > num_classes)
        {
            return Err(Error::Domain(format!(
                "class id {bad} outside 1..={num_classes}"
            )));
        }
        if heights.as_slice().iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::Domain("heights must be finite and non-negative".into()));
        }
        if features
            .iter()
            .flatten()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::Domain("features must lie in [0, 1]".into()));
        }
        Ok(Self {
            cell_size,
            num_classes,
            classes,
            heights,
            features,
            appearance: None,
        })
    }

    pub fn with_appearance(
        classes: Raster<u8>,
        heights: Raster<f64>,
        cell_size: f64,
        num_classes: usize,
        appearance: Appearance,
    ) -> Result<Self> {
        if appearance.classes.len() != num_classes {
            return Err(Error::Domain(format!(
                "appearance table has {} classes, world has {num_classes}",
                appearance.classes.len()
            )));
        }
        if classes.as_slice().iter().any(|&c| c == 0 || c as usize > num_classes) {
            return Err(Error::Domain(format!("class id outside 1..={num_classes}")));
        }
        let features = appearance.render(&classes);
        let mut world = Self::new(classes, heights, features, cell_size, num_classes)?;
        world.appearance = Some(appearance);
        Ok(world)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Width and length in cells.
    pub fn cells(&self) -> (usize, usize) {
        (self.classes.width(), self.classes.height())
    }

    /// Width and length in meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.classes.width() as f64 * self.cell_size,
            self.classes.height() as f64 * self.cell_size,
        )
    }

    pub fn max_height(&self) -> f64 {
        self.heights.as_slice().iter().copied().fold(0.0, f64::max)
    }

    pub fn heights(&self) -> &Raster<f64> {
        &self.heights
    }

    pub fn appearance(&self) -> Option<&Appearance> {
        self.appearance.as_ref()
    }

    pub(crate) fn class_raster(&self) -> &Raster<u8> {
        &self.classes
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (w, l) = self.extent();
        (0.0..=w).contains(&x) && (0.0..=l).contains(&y)
    }

    /// Cell under a ground point. Points beyond the extent clamp to the
    /// border cell, so the simulated world repeats its edge outward.
    pub fn cell_at(&self, x: f64, y: f64) -> (usize, usize) {
        let (w, l) = self.cells();
        let i = ((x / self.cell_size).floor().max(0.0) as usize).min(w - 1);
        let j = ((y / self.cell_size).floor().max(0.0) as usize).min(l - 1);
        (i, j)
    }

    /// Simulates one nadir RGB-D image. Pure in `(pose, camera, noise, seed)`.
    pub fn sense(
        &self,
        pose: &Pose,
        camera: &CameraModel,
        noise: f64,
        seed: u64,
        tag: FrameTag,
    ) -> Result<Frame> {
        if !self.contains(pose.x, pose.y) {
            return Err(Error::Domain(format!(
                "pose ({:.3}, {:.3}) outside the world extent",
                pose.x, pose.y
            )));
        }
        if !(pose.z > self.max_height()) {
            return Err(Error::Domain(format!(
                "altitude {} does not clear the terrain",
                pose.z
            )));
        }
        let (w, h) = (camera.width, camera.height);
        let mut rng = rng::rng(seed);
        let mut features = Vec::with_capacity(w * h * FEATURE_CHANNELS);
        let mut depth = Vec::with_capacity(w * h);
        let mut gt = Vec::with_capacity(w * h);
        for n in 0..h {
            for m in 0..w {
                let (gx, gy) = camera.ground_point(pose, m, n);
                let (i, j) = self.cell_at(gx, gy);
                let cell = j * self.classes.width() + i;
                depth.push(pose.z - self.heights.at(i, j));
                gt.push(self.classes.at(i, j));
                for &v in &self.features[cell] {
                    if noise > 0.0 {
                        let e = noise * (2.0 * rng.random::<f64>() - 1.0);
                        features.push((v + e).clamp(0.0, 1.0));
                    } else {
                        features.push(v);
                    }
                }
            }
        }
        Ok(Frame {
            id: tag.id,
            kind: tag.kind,
            pose: *pose,
            camera: *camera,
            width: w,
            height: h,
            features,
            depth: Raster::from_vec(w, h, depth),
            gt: Raster::from_vec(w, h, gt),
        })
    }
}

/// Pinhole nadir camera. `footprint` is the ground side length covered along
/// the image width when flying at `altitude`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub footprint: f64,
    pub altitude: f64,
}

impl CameraModel {
    pub fn new(width: usize, height: usize, footprint: f64, altitude: f64) -> Result<Self> {
        let cam = Self {
            width,
            height,
            footprint,
            altitude,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!(
                "camera resolution {}x{} below 2x2",
                self.width, self.height
            )));
        }
        if !(self.footprint > 0.0) || !(self.altitude > 0.0) {
            return Err(Error::Config("camera footprint and altitude must be positive".into()));
        }
        Ok(())
    }

    /// Same optics at another resolution (used for low-resolution scoring).
    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..*self
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ground sample distance at the reference altitude.
    pub fn pixel_size(&self) -> f64 {
        self.footprint / self.width as f64
    }

    /// Horizontal offset of pixel `(m, n)`'s ground point from the camera
    /// at the reference altitude.
    #[inline]
    pub fn pixel_offset(&self, m: usize, n: usize) -> (f64, f64) {
        let s = self.pixel_size();
        (
            (m as f64 + 0.5 - self.width as f64 / 2.0) * s,
            (n as f64 + 0.5 - self.height as f64 / 2.0) * s,
        )
    }

    /// Ray direction scaled so that `pose + t * dir` reaches z = 0 at t = 1.
    #[inline]
    pub fn ray_direction(&self, pose: &Pose, m: usize, n: usize) -> Vec3 {
        let (dx, dy) = self.pixel_offset(m, n);
        let s = pose.z / self.altitude;
        Vec3::new(dx * s, dy * s, -pose.z)
    }

    #[inline]
    pub fn ground_point(&self, pose: &Pose, m: usize, n: usize) -> (f64, f64) {
        let d = self.ray_direction(pose, m, n);
        (pose.x + d.x, pose.y + d.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// Captured at a planned pose; goes to the human-label pool.
    Planned,
    /// Captured between planned poses; goes to the pseudo-label pool.
    Intermediate,
    /// Held-out evaluation view.
    Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameTag {
    pub id: u64,
    pub kind: FrameKind,
}

impl FrameTag {
    pub fn new(id: u64, kind: FrameKind) -> Self {
        Self { id, kind }
    }
}

/// One RGB-D observation.
#[derive(Clone, Debug)]
pub struct Frame {
    id: u64,
    kind: FrameKind,
    pose: Pose,
    camera: CameraModel,
    width: usize,
    height: usize,
    features: Vec<f64>,
    depth: Raster<f64>,
    gt: Raster<u8>,
}

impl Frame {
    /// Assembles a frame from raw parts. Features are pixel-major with
    /// [`FEATURE_CHANNELS`] values per pixel.
    pub fn from_parts(
        tag: FrameTag,
        pose: Pose,
        camera: CameraModel,
        features: Vec<f64>,
        depth: Raster<f64>,
        gt: Raster<u8>,
    ) -> Result<Self> {
        let (width, height) = (depth.width(), depth.height());
        if !gt.same_shape(&depth)
            || features.len() != width * height * FEATURE_CHANNELS
            || (camera.width, camera.height) != (width, height)
        {
            return Err(Error::Domain("frame layers disagree in size".into()));
        }
        if gt.as_slice().contains(&0) {
            return Err(Error::Domain("ground-truth labels must be >= 1".into()));
        }
        Ok(Self {
            id: tag.id,
            kind: tag.kind,
            pose,
            camera,
            width,
            height,
            features,
            depth,
            gt,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn feature(&self, m: usize, n: usize) -> &[f64] {
        let i = (n * self.width + m) * FEATURE_CHANNELS;
        &self.features[i..i + FEATURE_CHANNELS]
    }

    pub fn depth(&self) -> &Raster<f64> {
        &self.depth
    }
}

/// Stand-in for the human annotator, and the only reader of ground truth.
/// Counts every labelled pixel it hands out.
#[derive(Debug, Default)]
pub struct Oracle {
    queries: AtomicU64,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Labels the requested pixels. Duplicates are dropped; every other pixel
    /// stays void.
    pub fn annotate(&self, frame: &Frame, pixels: &[(usize, usize)]) -> Result<SparseLabelImage> {
        let mut seen = vec![false; frame.pixel_count()];
        let mut entries = Vec::with_capacity(pixels.len());
        for &(m, n) in pixels {
            if !frame.gt.contains(m, n) {
                return Err(Error::PixelOutOfBounds {
                    m,
                    n,
                    width: frame.width,
                    height: frame.height,
                });
            }
            let idx = frame.gt.index(m, n);
            if std::mem::replace(&mut seen[idx], true) {
                continue;
            }
            entries.push(LabelEntry::new(m, n, frame.gt.at(m, n)));
        }
        self.queries.fetch_add(entries.len() as u64, Ordering::Relaxed);
        let alpha = entries.len();
        SparseLabelImage::new(
            frame.id,
            frame.width,
            frame.height,
            entries,
            Provenance::Human,
            alpha,
        )
    }

    /// Labels every pixel of the frame.
    pub fn annotate_dense(&self, frame: &Frame) -> Result<SparseLabelImage> {
        let pixels: Vec<_> = (0..frame.height)
            .flat_map(|n| (0..frame.width).map(move |m| (m, n)))
            .collect();
        self.annotate(frame, &pixels)
    }

    /// Adds `frame`'s ground truth against `predicted` to the confusion
    /// matrix. Evaluation access is not counted as annotation.
    pub fn evaluate(
        &self,
        frame: &Frame,
        predicted: &Raster<u8>,
        cm: &mut ConfusionMatrix,
    ) -> Result<()> {
        cm.accumulate(&frame.gt, predicted, None)
    }

    /// Number of pixels labelled so far.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}
