use crate::error::{Error, Result};
use crate::labels::{HumanSelector, PseudoSelector};
use crate::mapping::MapParams;
use crate::planner::PlannerConfig;
use crate::trainer::TrainConfig;
use crate::world::{CameraModel, Layout, WorldSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::PathBuf;

/// Labelled pixels per image: a count, or a share of the image written as
/// a percent string such as `"0.6%"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum Alpha {
    Pixels(usize),
    /// Percent of the image's pixels, in `(0, 100]`.
    Percent(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Pixels(u64),
    Text(String),
}

impl TryFrom<AlphaRepr> for Alpha {
    type Error = Error;

    fn try_from(r: AlphaRepr) -> Result<Self> {
        match r {
            AlphaRepr::Pixels(n) => Ok(Alpha::Pixels(n as usize)),
            AlphaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Alpha> for AlphaRepr {
    fn from(a: Alpha) -> Self {
        match a {
            Alpha::Pixels(n) => AlphaRepr::Pixels(n as u64),
            Alpha::Percent(_) => AlphaRepr::Text(a.to_string()),
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("alpha `{s}` is neither a pixel count nor a percentage like 0.6%"));
        if let Some(p) = s.strip_suffix('%') {
            let v: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(v > 0.0 && v <= 100.0) {
                return Err(bad());
            }
            Ok(Alpha::Percent(v))
        } else {
            s.parse::<usize>().map(Alpha::Pixels).map_err(|_| bad())
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Pixels(n) => write!(f, "{n}"),
            Alpha::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl Alpha {
    /// Pixel count for a `width × height` image, at least one.
    pub fn resolve(&self, width: usize, height: usize) -> usize {
        match *self {
            Alpha::Pixels(n) => n,
            Alpha::Percent(p) => ((p * (width * height) as f64 / 100.0).round() as usize).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Frontier,
    Coverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub patch_radius: usize,
    pub hidden: [usize; 2],
    pub dropout: f64,
    /// Monte-Carlo dropout passes per image.
    pub mc_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch_radius: 2,
            hidden: [24, 16],
            dropout: 0.5,
            mc_samples: 20,
        }
    }
}

/// Held-out views used to score each mission's model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Views along each side of a regular grid over the world.
    pub views_per_side: usize,
    /// Random offset of each view, as a share of the grid pitch.
    pub jitter: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            views_per_side: 4,
            jitter: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub seed: u64,
    pub missions: usize,
    /// Flight-time budget per mission, seconds.
    pub budget: f64,
    /// Flight speed, m/s.
    pub speed: f64,
    pub alpha: Alpha,
    /// Percent bound of the selection pools.
    pub beta: f64,
    /// Region impurity neighbourhood radius.
    pub radius: usize,
    pub planner: PlannerKind,
    pub human: HumanSelector,
    pub pseudo: PseudoSelector,
    /// Distance between pseudo-label frames along a flight; defaults to
    /// the camera footprint.
    pub pseudo_spacing: Option<f64>,
    /// Uniform per-channel sensor noise amplitude.
    pub sensor_noise: f64,
    /// Map voxel side; defaults to the world cell size.
    pub voxel_size: Option<f64>,
    /// Starting weights; a seeded random initialization when unset.
    pub init_checkpoint: Option<PathBuf>,
    pub world: WorldSpec,
    pub camera: CameraModel,
    pub model: ModelConfig,
    pub planning: PlannerConfig,
    pub train: TrainConfig,
    pub map: MapParams,
    pub eval: EvalConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            missions: 10,
            budget: 1800.0,
            speed: 2.0,
            alpha: Alpha::Pixels(1000),
            beta: 5.0,
            radius: 1,
            planner: PlannerKind::Frontier,
            human: HumanSelector::Ours,
            pseudo: PseudoSelector::Ours,
            pseudo_spacing: None,
            sensor_noise: 0.05,
            voxel_size: None,
            init_checkpoint: None,
            world: WorldSpec::default(),
            camera: CameraModel {
                width: 400,
                height: 400,
                footprint: 40.0,
                altitude: 30.0,
            },
            model: ModelConfig::default(),
            planning: PlannerConfig::default(),
            train: TrainConfig::default(),
            map: MapParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl MissionConfig {
    /// A small setup that runs a full campaign in seconds on one core.
    pub fn desk() -> Self {
        Self {
            missions: 5,
            budget: 90.0,
            alpha: Alpha::Percent(0.6),
            world: WorldSpec {
                width: 96,
                length: 96,
                layout: Layout::Urban,
                ..WorldSpec::default()
            },
            camera: CameraModel {
                width: 48,
                height: 48,
                footprint: 16.0,
                altitude: 30.0,
            },
            model: ModelConfig {
                hidden: [16, 12],
                mc_samples: 10,
                ..ModelConfig::default()
            },
            planning: PlannerConfig {
                lowres: [16, 16],
                ..PlannerConfig::default()
            },
            eval: EvalConfig {
                views_per_side: 5,
                ..EvalConfig::default()
            },
            // The small surrogate needs more updates per epoch and far less
            // decay than the dropout-derived default.
            train: TrainConfig {
                batch_size: 2,
                weight_decay: Some(1e-4),
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.budget > 0.0) {
            return fail("budget must be positive");
        }
        if self.missions == 0 {
            return fail("at least one mission is required");
        }
        if !(self.speed > 0.0) {
            return fail("speed must be positive");
        }
        match self.alpha {
            Alpha::Pixels(0) => return fail("alpha must be at least one pixel"),
            Alpha::Percent(p) if !(p > 0.0 && p <= 100.0) => return fail("alpha percentage must lie in (0, 100]"),
            _ => {}
        }
        if !(self.beta > 0.0 && self.beta <= 100.0) {
            return fail("beta must lie in (0, 100]");
        }
        if self.radius == 0 {
            return fail("radius must be at least 1");
        }
        if matches!(self.pseudo_spacing, Some(s) if !(s > 0.0)) {
            return fail("pseudo spacing must be positive");
        }
        if !(self.sensor_noise >= 0.0) {
            return fail("sensor noise must be non-negative");
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.model.mc_samples == 0 || self.model.hidden.contains(&0) {
            return fail("model needs non-empty layers and at least one MC sample");
        }
        if self.eval.views_per_side == 0 || !(0.0..=1.0).contains(&self.eval.jitter) {
            return fail("evaluation needs at least one view and jitter in [0, 1]");
        }
        self.camera.validate()?;
        self.planning.validate()?;
        self.train.validate()?;
        self.map.validate()?;
        Ok(())
    }

    pub fn alpha_pixels(&self) -> usize {
        self.alpha.resolve(self.camera.width, self.camera.height)
    }

    pub fn pseudo_spacing(&self) -> f64 {
        self.pseudo_spacing.unwrap_or(self.camera.footprint)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Identifies the configuration apart from its seed: the first 12 hex
    /// digits of the SHA-256 of the canonical TOML without `seed`.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = toml::Value::try_from(self)?;
        if let Some(t) = v.as_table_mut() {
            t.remove("seed");
        }
        let text = toml::to_string(&v)?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(hex::encode(digest)[..12].to_string())
    }

    /// Run directory name: config hash plus seed.
    pub fn run_id(&self) -> Result<String> {
        Ok(format!("{}-s{}", self.config_hash()?, self.seed))
    }
}
