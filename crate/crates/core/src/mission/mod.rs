//! Mission loop: fly, sense, map, label, retrain, rebuild, evaluate.

pub mod config;
pub mod grid;
pub mod persist;
pub mod plots;
pub mod runner;

pub use config::{Alpha, EvalConfig, MissionConfig, ModelConfig, PlannerKind};
pub use grid::{patch, run_grid, write_grid_summaries, GridPoint, GridRun, GridSpec};
pub use persist::{RunDir, RUN_DIR_ENV};
pub use plots::export_plots;
pub use runner::{
    evaluate_model, evaluation_poses, intermediate_poses, mean_std, run_campaign, summarize_seeds, Campaign,
    CampaignRecord, MissionMetrics, SeedSummary, TraceRow,
};

#[cfg(test)]
mod tests;
