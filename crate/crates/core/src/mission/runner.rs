use super::config::{MissionConfig, PlannerKind};
use super::persist::RunDir;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::labels::{
    rerender_all_pseudo, select_human_pixels, HumanSelector, PseudoSelector, SelectionConfig,
    SparseLabelImage,
};
use crate::mapping::MultiLayerMap;
use crate::metrics::ConfusionMatrix;
use crate::model::{Architecture, McSettings, PredictionTensor, SurrogateModel, UncertaintyImage};
use crate::planner::{plan_next_pose, CoverageSweep, PlanDecision, PlanState};
use crate::rng::{self, stream};
use crate::trainer::{train, LossNormalization, TrainReport, TrainingSet};
use crate::world::{generate_world, CameraModel, Frame, FrameKind, FrameTag, Oracle, WorldModel};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Salt for the initial weights.
const INIT: u64 = 0x1417;

/// One row of the per-mission metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub mission: usize,
    pub planned_frames: usize,
    pub pseudo_frames: usize,
    /// Cumulative human-labelled pixels.
    pub human_pixels: usize,
    /// Pseudo-labelled pixels in the current training set.
    pub pseudo_pixels: usize,
    pub budget_spent: f64,
    pub miou: f64,
    pub accuracy: f64,
    pub class_iou: Vec<Option<f64>>,
}

/// One planner decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub mission: usize,
    pub step: usize,
    pub candidates: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub info: Option<f64>,
    pub remaining: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignRecord {
    pub metrics: Vec<MissionMetrics>,
    pub trace: Vec<TraceRow>,
    pub oracle_queries: u64,
    /// Flight paths, one per mission.
    pub paths: Vec<Vec<Pose>>,
}

impl CampaignRecord {
    pub fn final_metrics(&self) -> Option<&MissionMetrics> {
        self.metrics.last()
    }
}

/// Poses strictly between `a` and `b`, every `spacing` meters from `a`.
pub fn intermediate_poses(a: &Pose, b: &Pose, spacing: f64) -> Vec<Pose> {
    let d = a.distance(b);
    if !(spacing > 0.0) || d <= spacing {
        return Vec::new();
    }
    let dir = (b.position() - a.position()) * (1.0 / d);
    let mut out = Vec::new();
    let mut s = spacing;
    while s < d - 1e-9 {
        let p = a.position() + dir * s;
        out.push(Pose::new(p.x, p.y, p.z));
        s += spacing;
    }
    out
}

/// Regular grid of views over the world, each shifted by a seeded jitter.
pub fn evaluation_poses(world: &WorldModel, altitude: f64, per_side: usize, jitter: f64, seed: u64) -> Vec<Pose> {
    let (w, l) = world.extent();
    let mut r = rng::rng(rng::mix(seed, stream::EVAL));
    let (px, py) = (w / per_side as f64, l / per_side as f64);
    let mut out = Vec::with_capacity(per_side * per_side);
    for j in 0..per_side {
        for i in 0..per_side {
            let jx = jitter * px * (r.random::<f64>() - 0.5);
            let jy = jitter * py * (r.random::<f64>() - 0.5);
            let x = ((i as f64 + 0.5) * px + jx).clamp(0.0, w);
            let y = ((j as f64 + 0.5) * py + jy).clamp(0.0, l);
            out.push(Pose::new(x, y, altitude));
        }
    }
    out
}

/// Scores `model` on noise-free views: deterministic prediction against
/// ground truth, read through the oracle's evaluation path.
pub fn evaluate_model(
    model: &SurrogateModel,
    world: &WorldModel,
    oracle: &Oracle,
    camera: &CameraModel,
    poses: &[Pose],
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(world.num_classes());
    for (i, pose) in poses.iter().enumerate() {
        let tag = FrameTag::new(u64::MAX - i as u64, FrameKind::Evaluation);
        let frame = world.sense(pose, camera, 0.0, 0, tag)?;
        let pred = model.predict(&frame)?;
        oracle.evaluate(&frame, pred.ml_labels(), &mut cm)?;
    }
    Ok(cm)
}

/// Full state of a multi-mission campaign.
pub struct Campaign {
    cfg: MissionConfig,
    world: WorldModel,
    oracle: Oracle,
    alpha: usize,
    initial: SurrogateModel,
    model: SurrogateModel,
    map: MultiLayerMap,
    frames: Vec<Frame>,
    /// (frame index, labels)
    human: Vec<(usize, SparseLabelImage)>,
    pseudo_frames: Vec<usize>,
    pseudo: Vec<SparseLabelImage>,
    pose: Pose,
    sweep: CoverageSweep,
    eval_poses: Vec<Pose>,
    mission: usize,
    rebuilds: usize,
    record: CampaignRecord,
    last_report: Option<TrainReport>,
}

impl Campaign {
    pub fn new(cfg: MissionConfig) -> Result<Self> {
        cfg.validate()?;
        let world = generate_world(&cfg.world)?;
        Self::with_world(cfg, world)
    }

    pub fn with_world(cfg: MissionConfig, world: WorldModel) -> Result<Self> {
        cfg.validate()?;
        let cam = cfg.camera;
        if !(cam.altitude > world.max_height()) {
            return Err(Error::Config("flight altitude must clear the terrain".into()));
        }
        let initial = match &cfg.init_checkpoint {
            Some(path) => {
                let m = SurrogateModel::load(path)?;
                if m.classes() != world.num_classes() {
                    return Err(Error::Config("initial checkpoint class count differs from the world".into()));
                }
                m
            }
            None => SurrogateModel::new(
                Architecture::new(cfg.model.patch_radius, cfg.model.hidden, world.num_classes()),
                cfg.model.dropout,
                rng::mix(cfg.seed, INIT),
            )?,
        };
        let map = MultiLayerMap::for_world_with_voxel(&world, cfg.map, cfg.voxel_size.unwrap_or(world.cell_size()))?;
        let (w, l) = world.extent();
        let pose = Pose::new(w / 2.0, l / 2.0, cam.altitude);
        let sweep = CoverageSweep::new((w, l), cam.footprint, cam.altitude);
        let eval_poses = evaluation_poses(&world, cam.altitude, cfg.eval.views_per_side, cfg.eval.jitter, cfg.world.seed);
        Ok(Self {
            alpha: cfg.alpha_pixels(),
            model: initial.clone(),
            initial,
            map,
            frames: Vec::new(),
            human: Vec::new(),
            pseudo_frames: Vec::new(),
            pseudo: Vec::new(),
            pose,
            sweep,
            eval_poses,
            mission: 0,
            rebuilds: 0,
            record: CampaignRecord::default(),
            last_report: None,
            oracle: Oracle::new(),
            world,
            cfg,
        })
    }

    pub fn config(&self) -> &MissionConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn map(&self) -> &MultiLayerMap {
        &self.map
    }

    pub fn model(&self) -> &SurrogateModel {
        &self.model
    }

    pub fn initial_model(&self) -> &SurrogateModel {
        &self.initial
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn human_labels(&self) -> impl Iterator<Item = (&Frame, &SparseLabelImage)> {
        self.human.iter().map(|(i, l)| (&self.frames[*i], l))
    }

    pub fn pseudo_labels(&self) -> impl Iterator<Item = (&Frame, &SparseLabelImage)> {
        self.pseudo_frames.iter().zip(&self.pseudo).map(|(i, l)| (&self.frames[*i], l))
    }

    pub fn record(&self) -> &CampaignRecord {
        &self.record
    }

    pub fn into_record(self) -> CampaignRecord {
        self.record
    }

    pub fn missions_done(&self) -> usize {
        self.mission
    }

    /// Map rebuilds so far; one per completed mission.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn last_train_report(&self) -> Option<&TrainReport> {
        self.last_report.as_ref()
    }

    pub fn eval_poses(&self) -> &[Pose] {
        &self.eval_poses
    }

    fn mc(&self) -> McSettings {
        McSettings {
            samples: self.cfg.model.mc_samples,
            seed: self.cfg.seed,
        }
    }

    fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            alpha: self.alpha,
            beta: self.cfg.beta,
            radius: self.cfg.radius,
            seed: self.cfg.seed,
        }
    }

    fn human_histogram(&self) -> Vec<u64> {
        let mut hist = vec![0; self.world.num_classes()];
        for (_, l) in &self.human {
            l.accumulate_histogram(&mut hist);
        }
        hist
    }

    /// Senses at `pose`, predicts with MC dropout and fuses into the map.
    fn capture(&mut self, pose: Pose, kind: FrameKind) -> Result<(usize, PredictionTensor, UncertaintyImage)> {
        let id = self.frames.len() as u64;
        let seed = rng::mix3(self.cfg.seed, stream::SENSOR, id);
        let frame = self.world.sense(&pose, &self.cfg.camera, self.cfg.sensor_noise, seed, FrameTag::new(id, kind))?;
        let (probs, unc) = self.mc().infer(&self.model, &frame)?;
        self.map.integrate_frame(&frame, &probs, &unc)?;
        self.frames.push(frame);
        Ok((self.frames.len() - 1, probs, unc))
    }

    fn next_target(&mut self, state: &PlanState) -> Result<Option<(Pose, usize, Option<f64>)>> {
        Ok(match self.cfg.planner {
            PlannerKind::Frontier => match plan_next_pose(&self.map, state, &self.cfg.planning, &self.cfg.camera)? {
                PlanDecision::Next { chosen, candidates } => Some((chosen.pose, candidates.len(), Some(chosen.info_value))),
                PlanDecision::MissionEnd => None,
            },
            PlannerKind::Coverage => self
                .sweep
                .next_within(&state.pose, state.remaining, self.cfg.speed)
                .map(|p| (p, 1, None)),
        })
    }

    /// Flies one mission, labels its data, retrains, rebuilds the map,
    /// refreshes pseudo labels and evaluates.
    pub fn run_mission(&mut self, run_dir: Option<&RunDir>) -> Result<MissionMetrics> {
        let mission = self.mission + 1;
        let cfg = self.cfg.clone();
        let mut state = PlanState::new(self.pose, cfg.budget, cfg.speed)?;
        let mut planned = Vec::new();
        let mut new_pseudo = Vec::new();

        if self.mission == 0 {
            planned.push(self.capture(self.pose, FrameKind::Planned)?);
            self.record.trace.push(TraceRow {
                mission,
                step: 0,
                candidates: 0,
                x: self.pose.x,
                y: self.pose.y,
                z: self.pose.z,
                info: None,
                remaining: state.remaining,
            });
        }
        for step in 1..=cfg.planning.max_steps {
            let Some((target, candidates, info)) = self.next_target(&state)? else {
                break;
            };
            let from = state.pose;
            state.fly_to(target)?;
            for p in intermediate_poses(&from, &target, cfg.pseudo_spacing()) {
                let (idx, _, _) = self.capture(p, FrameKind::Intermediate)?;
                new_pseudo.push(idx);
            }
            planned.push(self.capture(target, FrameKind::Planned)?);
            self.record.trace.push(TraceRow {
                mission,
                step,
                candidates,
                x: target.x,
                y: target.y,
                z: target.z,
                info,
                remaining: state.remaining,
            });
        }
        let spent = state.spent();
        if spent > cfg.budget + 1e-6 {
            return Err(Error::Domain(format!("mission {mission} spent {spent} s of a {} s budget", cfg.budget)));
        }
        self.pose = state.pose;
        self.record.paths.push(state.path.clone());

        // Human labels for this mission's planned frames.
        let before = self.oracle.queries();
        let mut requested = 0u64;
        let selection = self.selection();
        for (idx, probs, unc) in planned {
            let frame = &self.frames[idx];
            let labels = if cfg.human == HumanSelector::Dense {
                self.oracle.annotate_dense(frame)?
            } else {
                let sel_cfg = selection.with_seed(rng::mix3(cfg.seed, stream::HUMAN_SELECT, frame.id()));
                let sel = select_human_pixels(cfg.human, &probs, &unc, &sel_cfg)?;
                self.oracle.annotate(frame, &sel.pixels)?
            };
            requested += labels.len() as u64;
            self.map.increment_counts(frame);
            if let Some(dir) = run_dir {
                dir.write_labels(&labels)?;
            }
            self.human.push((idx, labels));
        }
        if self.oracle.queries() - before != requested {
            return Err(Error::Domain("oracle query count disagrees with collected labels".into()));
        }

        // Training sees pseudo frames from earlier missions only, labelled
        // from the map the previous model rebuilt.
        self.retrain()?;

        let frames: Vec<&Frame> = self.frames.iter().collect();
        self.map = self.map.rebuild(&frames, &self.model, self.mc())?;
        self.rebuilds += 1;

        let hist = self.human_histogram();
        self.pseudo_frames.extend(new_pseudo);
        let pseudo_frames: Vec<&Frame> = self.pseudo_frames.iter().map(|&i| &self.frames[i]).collect();
        self.pseudo = rerender_all_pseudo(cfg.pseudo, &self.map, &pseudo_frames, &hist, &selection)?;
        if let Some(dir) = run_dir {
            for l in &self.pseudo {
                dir.write_labels(l)?;
            }
        }

        let cm = evaluate_model(&self.model, &self.world, &self.oracle, &cfg.camera, &self.eval_poses)?;
        let metrics = MissionMetrics {
            mission,
            planned_frames: self.human.len(),
            pseudo_frames: self.pseudo_frames.len(),
            human_pixels: self.human.iter().map(|(_, l)| l.len()).sum(),
            pseudo_pixels: if cfg.pseudo == PseudoSelector::None {
                0
            } else {
                self.pseudo.iter().map(SparseLabelImage::len).sum()
            },
            budget_spent: spent,
            miou: cm.miou()?,
            accuracy: cm.accuracy()?,
            class_iou: cm.per_class_iou(),
        };
        self.mission = mission;
        self.record.oracle_queries = self.oracle.queries();
        self.record.metrics.push(metrics.clone());
        if let Some(dir) = run_dir {
            dir.write_mission(mission, &self.model, self.last_report.as_ref(), &self.map)?;
            dir.write_record(&self.record, self.world.num_classes())?;
        }
        Ok(metrics)
    }

    fn retrain(&mut self) -> Result<()> {
        let (w, h) = (self.cfg.camera.width, self.cfg.camera.height);
        let human: Vec<(&Frame, &SparseLabelImage)> =
            self.human.iter().map(|(i, l)| (&self.frames[*i], l)).collect();
        let pseudo: Vec<(&Frame, &SparseLabelImage)> = self
            .pseudo_frames
            .iter()
            .zip(&self.pseudo)
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| (&self.frames[*i], l))
            .collect();
        let set = TrainingSet::new(human, pseudo)?;
        if set.is_empty() {
            return Ok(());
        }
        let norm = LossNormalization {
            human_alpha: if self.cfg.human == HumanSelector::Dense { w * h } else { self.alpha },
            pseudo_alpha: if self.cfg.pseudo == PseudoSelector::Dense { w * h } else { self.alpha },
        };
        let train_cfg = crate::trainer::TrainConfig {
            seed: rng::mix(self.cfg.seed, self.mission as u64 + 1),
            ..self.cfg.train
        };
        let (model, report) = train(&self.initial, &set, norm, &train_cfg)?;
        log::debug!(
            "mission {}: trained {} epochs (best {}), {} human / {} pseudo frames",
            self.mission + 1,
            report.stopped_epoch,
            report.best_epoch,
            set.n_human(),
            set.n_pseudo()
        );
        self.model = model;
        self.last_report = Some(report);
        Ok(())
    }
}

/// Runs every configured mission. With `root`, artifacts go to
/// `root/<run id>/`; on failure the record so far is still written.
pub fn run_campaign(cfg: &MissionConfig, root: Option<&Path>) -> Result<CampaignRecord> {
    let mut campaign = Campaign::new(cfg.clone())?;
    let dir = root.map(|r| RunDir::create(r, cfg)).transpose()?;
    for _ in 0..cfg.missions {
        if let Err(e) = campaign.run_mission(dir.as_ref()) {
            if let Some(d) = &dir {
                d.write_record(campaign.record(), campaign.world().num_classes())?;
            }
            return Err(e);
        }
    }
    Ok(campaign.into_record())
}

/// Mean and standard deviation per mission over runs of different seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mission: usize,
    pub runs: usize,
    pub human_pixels_mean: f64,
    pub miou_mean: f64,
    pub miou_std: f64,
    pub accuracy_mean: f64,
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize_seeds(records: &[CampaignRecord]) -> Vec<SeedSummary> {
    let missions = records.iter().map(|r| r.metrics.len()).max().unwrap_or(0);
    (0..missions)
        .map(|m| {
            let rows: Vec<&MissionMetrics> = records.iter().filter_map(|r| r.metrics.get(m)).collect();
            let miou: Vec<f64> = rows.iter().map(|r| r.miou).collect();
            let (miou_mean, miou_std) = mean_std(&miou);
            let px: Vec<f64> = rows.iter().map(|r| r.human_pixels as f64).collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            SeedSummary {
                mission: m + 1,
                runs: rows.len(),
                human_pixels_mean: mean_std(&px).0,
                miou_mean,
                miou_std,
                accuracy_mean: mean_std(&acc).0,
            }
        })
        .collect()
}

