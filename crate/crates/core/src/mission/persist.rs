//! On-disk layout of one campaign run:
//!
//! ```text
//! <root>/<run id>/
//!   config.toml
//!   metrics.csv
//!   planner_trace.csv
//!   labels/{human,pseudo}_<frame>.txt
//!   checkpoints/mission_<k>.ckpt, mission_<k>_train.csv
//!   maps/latest.map
//! ```

use super::config::MissionConfig;
use super::runner::{CampaignRecord, MissionMetrics};
use crate::error::{Error, Result};
use crate::labels::SparseLabelImage;
use crate::mapping::MultiLayerMap;
use crate::model::SurrogateModel;
use crate::trainer::TrainReport;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Environment variable naming the default root for run directories.
pub const RUN_DIR_ENV: &str = "ACTIVESEG_RUN_DIR";

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &MissionConfig) -> Result<Self> {
        let path = root.join(cfg.run_id()?);
        for sub in ["labels", "checkpoints", "maps"] {
            fs::create_dir_all(path.join(sub))?;
        }
        fs::write(path.join("config.toml"), cfg.to_toml()?)?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_labels(&self, labels: &SparseLabelImage) -> Result<()> {
        let name = format!("{}_{:05}.txt", labels.provenance(), labels.frame_id());
        labels.write(BufWriter::new(File::create(self.path.join("labels").join(name))?))
    }

    pub fn write_mission(
        &self,
        mission: usize,
        model: &SurrogateModel,
        report: Option<&TrainReport>,
        map: &MultiLayerMap,
    ) -> Result<()> {
        let ck = self.path.join("checkpoints");
        model.save(&ck.join(format!("mission_{mission:02}.ckpt")))?;
        if let Some(r) = report {
            r.write_csv(BufWriter::new(File::create(ck.join(format!("mission_{mission:02}_train.csv")))?))?;
        }
        map.save(&self.path.join("maps").join("latest.map"))
    }

    pub fn write_record(&self, record: &CampaignRecord, classes: usize) -> Result<()> {
        write_metrics(BufWriter::new(File::create(self.path.join("metrics.csv"))?), &record.metrics, classes)?;
        let mut w = csv::Writer::from_path(self.path.join("planner_trace.csv"))?;
        w.write_record(["mission", "step", "candidates", "x", "y", "z", "info", "remaining"])?;
        for t in &record.trace {
            w.write_record([
                t.mission.to_string(),
                t.step.to_string(),
                t.candidates.to_string(),
                format!("{:.3}", t.x),
                format!("{:.3}", t.y),
                format!("{:.3}", t.z),
                t.info.map(|v| format!("{v:.6}")).unwrap_or_default(),
                format!("{:.3}", t.remaining),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_metrics<W: Write>(out: W, rows: &[MissionMetrics], classes: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "mission",
        "planned_frames",
        "pseudo_frames",
        "human_pixels",
        "pseudo_pixels",
        "budget_spent",
        "miou",
        "accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=classes).map(|k| format!("iou_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.mission.to_string(),
            r.planned_frames.to_string(),
            r.pseudo_frames.to_string(),
            r.human_pixels.to_string(),
            r.pseudo_pixels.to_string(),
            format!("{:.3}", r.budget_spent),
            fixed(r.miou),
            fixed(r.accuracy),
        ];
        rec.extend(r.class_iou.iter().map(|v| v.map(fixed).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a `metrics.csv`.
pub fn read_metrics(path: &Path) -> Result<Vec<MissionMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format("metrics table", format!("missing column `{name}`")))
    };
    let idx = [
        col("mission")?,
        col("planned_frames")?,
        col("pseudo_frames")?,
        col("human_pixels")?,
        col("pseudo_pixels")?,
        col("budget_spent")?,
        col("miou")?,
        col("accuracy")?,
    ];
    let iou_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("iou_"))
        .map(|(i, _)| i)
        .collect();
    let bad = |e: std::num::ParseIntError| Error::format("metrics table", e.to_string());
    let badf = |e: std::num::ParseFloatError| Error::format("metrics table", e.to_string());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push(MissionMetrics {
            mission: f(idx[0]).parse().map_err(bad)?,
            planned_frames: f(idx[1]).parse().map_err(bad)?,
            pseudo_frames: f(idx[2]).parse().map_err(bad)?,
            human_pixels: f(idx[3]).parse().map_err(bad)?,
            pseudo_pixels: f(idx[4]).parse().map_err(bad)?,
            budget_spent: f(idx[5]).parse().map_err(badf)?,
            miou: f(idx[6]).parse().map_err(badf)?,
            accuracy: f(idx[7]).parse().map_err(badf)?,
            class_iou: iou_cols
                .iter()
                .map(|&i| match f(i) {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(badf),
                })
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}
