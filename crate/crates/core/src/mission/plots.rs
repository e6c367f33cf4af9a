//! Plot tables (mIoU against human-labelled pixels) from a grid
//! directory.

use super::grid::{curves, read_grid_runs, write_curves, RunRow};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

/// Human selectors compared with pseudo labels switched off.
const HUMAN_SELECTION: &str = "human_selection.csv";
/// Ours against random over labelling budgets.
const BUDGET: &str = "budget.csv";
/// Human-only, semi-supervised and dense supervision.
const SEMI_SUPERVISED: &str = "semi_supervised.csv";
/// Pseudo-label selectors.
const PSEUDO_SELECTION: &str = "pseudo_selection.csv";

/// Writes every table that has data in the grid; returns the files written.
pub fn export_plots(grid_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_grid_runs(grid_dir)?;
    if rows.is_empty() {
        return Err(Error::Domain(format!("{} holds no runs", grid_dir.display())));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, sel: Vec<&RunRow>, variant: &dyn Fn(&RunRow) -> String| -> Result<()> {
        if sel.is_empty() {
            return Ok(());
        }
        let path = out_dir.join(name);
        write_curves(&path, &curves(sel, variant))?;
        written.push(path);
        Ok(())
    };
    emit(
        HUMAN_SELECTION,
        rows.iter().filter(|r| r.pseudo == "none").collect(),
        &|r| r.human.clone(),
    )?;
    emit(
        BUDGET,
        rows.iter()
            .filter(|r| r.pseudo == "none" && (r.human == "ours" || r.human == "random"))
            .collect(),
        &|r| r.human.clone(),
    )?;
    emit(
        SEMI_SUPERVISED,
        rows.iter()
            .filter(|r| r.human == "dense" || (r.human == "ours" && matches!(r.pseudo.as_str(), "none" | "ours")))
            .collect(),
        &|r| match (r.human.as_str(), r.pseudo.as_str()) {
            ("dense", _) => "dense".into(),
            (_, "none") => "human_only".into(),
            _ => "human_pseudo".into(),
        },
    )?;
    emit(
        PSEUDO_SELECTION,
        rows.iter()
            .filter(|r| r.human == "ours" && r.pseudo != "dense")
            .collect(),
        &|r| r.pseudo.clone(),
    )?;
    Ok(written)
}
