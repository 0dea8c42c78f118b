//! CSV writers with fixed float formatting, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dexkit_core::eval::{EvalReport, ViewpointGrid};
use dexkit_core::pretrain::EpochMetrics;
use dexkit_core::rl::TrainLogRow;

use crate::Result;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_metrics(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut s = String::from("epoch,loss,accuracy,miou,chamfer,collapse_std\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            fmt(r.loss),
            fmt_opt(r.accuracy),
            fmt_opt(r.miou),
            fmt_opt(r.chamfer),
            fmt_opt(r.collapse_std),
        );
    }
    write_file(path, &s)
}

pub fn training_log_header() -> &'static str {
    "env_steps,mean_return,success_seen,policy_loss,value_loss,entropy,clip_frac\n"
}

pub fn training_log_row(r: &TrainLogRow) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        r.env_steps,
        fmt(r.mean_return),
        fmt(r.success_rate),
        fmt(r.policy_loss),
        fmt(r.value_loss),
        fmt(r.entropy),
        fmt(r.clip_fraction),
    )
}

pub fn write_training_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut s = String::from(training_log_header());
    for r in rows {
        s.push_str(&training_log_row(r));
    }
    write_file(path, &s)
}

pub fn write_eval_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut s =
        String::from("task,split,seed,success_rate,mean_return,episodes,agg_mean,agg_std\n");
    for rep in reports {
        for row in &rep.rows {
            let _ = writeln!(
                s,
                "{},{:?},{},{},{},{},{},{}",
                rep.task.name(),
                rep.split,
                row.seed,
                fmt(row.success_rate),
                fmt(row.mean_return),
                row.episodes,
                fmt(rep.mean_success),
                fmt_opt(rep.std_success),
            );
        }
    }
    write_file(path, &s)
}

pub fn write_viewpoint_grid(path: &Path, grid: &ViewpointGrid) -> Result<()> {
    let mut s = String::from("theta_deg,phi_deg,success_rate,n_episodes\n");
    for c in &grid.cells {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt(c.theta_deg),
            fmt(c.phi_deg),
            fmt(c.success_rate),
            c.episodes
        );
    }
    write_file(path, &s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
