//! Active learning of semantic segmentation from aerial images: a simulated
//! world and sensor, a Monte-Carlo-dropout surrogate model, a multi-layer
//! voxel map, a frontier planner, human and pseudo label selection, a
//! trainer and the mission loop tying them together.

// `!(x > 0.0)` checks are deliberate: they also reject NaN. Indexed loops
// read better than zipped iterators in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod labels;
pub mod mapping;
pub mod metrics;
pub mod mission;
pub mod model;
pub mod planner;
pub mod raster;
pub mod rng;
pub mod trainer;
pub mod world;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use geometry::{travel_cost, Pose, Vec3};
pub use labels::{HumanSelector, LabelEntry, Provenance, PseudoSelector, SelectionConfig, SparseLabelImage, VOID};
pub use mapping::{MapParams, MultiLayerMap};
pub use metrics::ConfusionMatrix;
pub use mission::{run_campaign, CampaignRecord, MissionConfig};
pub use model::{Architecture, McSettings, PredictionTensor, SurrogateModel, UncertaintyImage};
pub use planner::{CandidatePose, PlanState, PlannerConfig};
pub use raster::Raster;
pub use trainer::{TrainConfig, TrainingSet};
pub use world::{CameraModel, Frame, Oracle, WorldModel};
