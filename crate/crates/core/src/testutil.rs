//! Fixtures shared by unit tests.

use crate::geometry::Pose;
use crate::raster::Raster;
use crate::rng;
use crate::world::{CameraModel, Frame, FrameKind, FrameTag, FEATURE_CHANNELS};
use rand::Rng as _;

/// Frame with uniform random features; id = `seed`.
pub(crate) fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
    let mut rng = rng::rng(seed);
    let features = (0..w * h * FEATURE_CHANNELS).map(|_| rng.random::<f64>()).collect();
    Frame::from_parts(
        FrameTag::new(seed, FrameKind::Planned),
        Pose::new(0.0, 0.0, 30.0),
        CameraModel::new(w, h, 4.0, 30.0).unwrap(),
        features,
        Raster::filled(w, h, 30.0),
        Raster::filled(w, h, 1),
    )
    .unwrap()
}
