//! Experiment grids: the cartesian product of configuration axes, each
//! point run for several seeds.

use super::config::MissionConfig;
use super::runner::{mean_std, run_campaign, CampaignRecord};
use crate::error::{Error, Result};
use crate::labels::HumanSelector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// ```toml
/// seeds = [1, 2, 3]
/// [axes]
/// human = ["ours", "random"]
/// alpha = ["0.06%", "0.6%"]
/// [base]
/// missions = 5
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub base: MissionConfig,
    /// Dotted config key → values to sweep.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<toml::Value>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    /// Axis values applied to the base config, in axis order.
    pub assignment: Vec<(String, toml::Value)>,
    /// Config with seed still to be set.
    pub config: MissionConfig,
}

impl GridPoint {
    /// `key=value;key=value`, stable across runs.
    pub fn label(&self) -> String {
        if self.assignment.is_empty() {
            return "base".into();
        }
        self.assignment
            .iter()
            .map(|(k, v)| format!("{k}={}", value_text(v)))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Sets `key` (dotted path) in `root` to `value`.
pub fn patch(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("config key `{key}`: `{part}` is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(Error::Config("empty config key".into()))
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Every distinct configuration of the grid. Points whose human
    /// selector is dense ignore the `alpha` axis, so they appear once.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.seeds.is_empty() {
            return Err(Error::Config("grid needs at least one seed".into()));
        }
        let base = toml::Value::try_from(&self.base)?;
        let axes: Vec<(&String, &Vec<toml::Value>)> = self.axes.iter().collect();
        if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("grid axis `{k}` has no values")));
        }
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut out: Vec<GridPoint> = Vec::new();
        for mut i in 0..total {
            let mut assignment = Vec::with_capacity(axes.len());
            let mut value = base.clone();
            // last axis varies fastest
            let mut picks = vec![0; axes.len()];
            for a in (0..axes.len()).rev() {
                picks[a] = i % axes[a].1.len();
                i /= axes[a].1.len();
            }
            for (a, (k, vals)) in axes.iter().enumerate() {
                let v = vals[picks[a]].clone();
                patch(&mut value, k, v.clone())?;
                assignment.push(((*k).clone(), v));
            }
            let config: MissionConfig = value
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("grid point: {e}")))?;
            config.validate()?;
            if config.human == HumanSelector::Dense {
                assignment.retain(|(k, _)| k != "alpha");
            }
            let point = GridPoint { assignment, config };
            if !out.iter().any(|p| p.label() == point.label()) {
                out.push(point);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct GridRun {
    pub point: usize,
    pub seed: u64,
    pub config: MissionConfig,
    pub record: CampaignRecord,
}

/// Runs every point × seed, `jobs` campaigns at a time. Results come back
/// in point-major, seed-minor order regardless of `jobs`.
pub fn run_grid(
    spec: &GridSpec,
    root: Option<&Path>,
    jobs: usize,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<(Vec<GridPoint>, Vec<GridRun>)> {
    let points = spec.points()?;
    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| spec.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<GridRun>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(p, seed)) = tasks.get(t) else { break };
                let config = MissionConfig {
                    seed,
                    ..points[p].config.clone()
                };
                progress(&format!("{} seed {seed}", points[p].label()));
                let r = run_campaign(&config, root).map(|record| GridRun {
                    point: p,
                    seed,
                    config,
                    record,
                });
                results.lock().expect("grid result lock")[t] = Some(r);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("grid result lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok((points, runs))
}

pub const RUNS_FILE: &str = "grid_runs.csv";

/// One row per run and mission.
pub fn write_grid_runs(dir: &Path, points: &[GridPoint], runs: &[GridRun]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(RUNS_FILE))?;
    w.write_record([
        "point", "human", "pseudo", "planner", "alpha", "seed", "mission", "human_pixels", "pseudo_pixels", "miou",
        "accuracy",
    ])?;
    for run in runs {
        let c = &run.config;
        for m in &run.record.metrics {
            w.write_record([
                points[run.point].label(),
                c.human.name().to_string(),
                c.pseudo.name().to_string(),
                format!("{:?}", c.planner).to_lowercase(),
                if c.human == HumanSelector::Dense { "dense".into() } else { c.alpha.to_string() },
                run.seed.to_string(),
                m.mission.to_string(),
                m.human_pixels.to_string(),
                m.pseudo_pixels.to_string(),
                format!("{:.6}", m.miou),
                format!("{:.6}", m.accuracy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A row of `grid_runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub point: String,
    pub human: String,
    pub pseudo: String,
    pub planner: String,
    pub alpha: String,
    pub seed: u64,
    pub mission: usize,
    pub human_pixels: usize,
    pub pseudo_pixels: usize,
    pub miou: f64,
    pub accuracy: f64,
}

pub fn read_grid_runs(dir: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(dir.join(RUNS_FILE))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Seed-averaged curve of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub variant: String,
    pub alpha: String,
    pub mission: usize,
    pub human_pixels_mean: f64,
    pub miou_mean: f64,
    pub miou_std: f64,
    pub n_seeds: usize,
}

/// Averages rows over seeds, grouping by `variant(row)`, alpha and mission.
pub fn curves<'a>(rows: impl IntoIterator<Item = &'a RunRow>, variant: impl Fn(&RunRow) -> String) -> Vec<CurveRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((variant(r), r.alpha.clone(), r.mission)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((variant, alpha, mission), rs)| {
            let miou: Vec<f64> = rs.iter().map(|r| r.miou).collect();
            let px: Vec<f64> = rs.iter().map(|r| r.human_pixels as f64).collect();
            let (miou_mean, miou_std) = mean_std(&miou);
            CurveRow {
                variant,
                alpha,
                mission,
                human_pixels_mean: mean_std(&px).0,
                miou_mean,
                miou_std,
                n_seeds: rs.len(),
            }
        })
        .collect()
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "alpha", "mission", "human_pixels_mean", "miou_mean", "miou_std", "n_seeds"])?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.alpha.clone(),
            r.mission.to_string(),
            format!("{:.1}", r.human_pixels_mean),
            format!("{:.6}", r.miou_mean),
            format!("{:.6}", r.miou_std),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `grid_runs.csv` plus one `summary_<axis>.csv` per axis, where
/// the variant is that axis's value.
pub fn write_grid_summaries(dir: &Path, spec: &GridSpec, points: &[GridPoint], runs: &[GridRun]) -> Result<()> {
    write_grid_runs(dir, points, runs)?;
    let rows = read_grid_runs(dir)?;
    let axes: Vec<&String> = if spec.axes.is_empty() { Vec::new() } else { spec.axes.keys().collect() };
    let label_of: BTreeMap<String, &GridPoint> = points.iter().map(|p| (p.label(), p)).collect();
    for axis in axes {
        let file = format!("summary_{}.csv", axis.replace('.', "_"));
        let table = curves(&rows, |r| {
            label_of
                .get(&r.point)
                .and_then(|p| p.assignment.iter().find(|(k, _)| k == axis))
                .map(|(_, v)| value_text(v))
                .unwrap_or_else(|| "-".into())
        });
        write_curves(&dir.join(file), &table)?;
    }
    write_curves(&dir.join("summary.csv"), &curves(&rows, |r| r.point.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> GridSpec {
        GridSpec::from_toml(text).unwrap()
    }

    #[test]
    fn points_cover_the_cartesian_product() {
        let s = spec(
            r#"
seeds = [1, 2]
[axes]
human = ["ours", "random"]
alpha = ["0.06%", "0.6%", "1.25%"]
"#,
        );
        let pts = s.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].label(), "alpha=0.06%;human=ours");
        assert_eq!(pts[1].config.human, HumanSelector::Random);
    }

    #[test]
    fn dense_ignores_the_alpha_axis() {
        let s = spec(
            r#"
[axes]
human = ["dense", "ours"]
alpha = ["0.06%", "0.6%"]
"#,
        );
        let labels: Vec<String> = s.points().unwrap().iter().map(GridPoint::label).collect();
        assert_eq!(labels, vec!["human=dense", "alpha=0.06%;human=ours", "alpha=0.6%;human=ours"]);
    }

    #[test]
    fn nested_keys_patch_sub_tables() {
        let s = spec(
            r#"
[axes]
"train.patience" = [3]
"planning.unknown_value" = [0.25]
"#,
        );
        let p = &s.points().unwrap()[0];
        assert_eq!(p.config.train.patience, 3);
        assert_eq!(p.config.planning.unknown_value, 0.25);
    }

    #[test]
    fn invalid_axis_values_are_config_errors() {
        let s = spec("[axes]\nhuman = [\"psychic\"]\n");
        assert!(s.points().unwrap_err().is_config());
        let s = spec("[axes]\nbudget = [-1.0]\n");
        assert!(s.points().unwrap_err().is_config());
    }

    #[test]
    fn curves_average_over_seeds() {
        let row = |seed, miou| RunRow {
            point: "p".into(),
            human: "ours".into(),
            pseudo: "ours".into(),
            planner: "frontier".into(),
            alpha: "0.6%".into(),
            seed,
            mission: 1,
            human_pixels: 10,
            pseudo_pixels: 0,
            miou,
            accuracy: 0.0,
        };
        let rows = [row(1, 0.4), row(2, 0.6)];
        let c = curves(&rows, |r| r.human.clone());
        assert_eq!(c.len(), 1);
        assert!((c[0].miou_mean - 0.5).abs() < 1e-12);
        assert!((c[0].miou_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(c[0].n_seeds, 2);
    }
}
