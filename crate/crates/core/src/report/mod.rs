//! Summary tables across datasets, modes and supervised fractions.

pub mod plot;

use std::path::{Path, PathBuf};

use crate::driver::{read_run_summary, GridSummary, Mode, RunSummary};
use crate::metrics::{aggregate, MeanStd, MetricRecord, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot read run summary in {dir}: {message}")]
    Summary { dir: PathBuf, message: String },
    #[error("{dir}: run {mode} x={x} has no partition that finished its last iteration")]
    NoFinishedPartitions { dir: PathBuf, mode: Mode, x: f64 },
    #[error("{dir}: {source}")]
    Metrics {
        dir: PathBuf,
        #[source]
        source: MetricsError,
    },
    #[error("no run directories given")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub mode: Mode,
    pub x: f64,
    pub accuracy: MeanStd,
    pub kappa: MeanStd,
    pub propagation_accuracy: Option<MeanStd>,
    pub partitions: usize,
    /// Highest mean kappa among the rows sharing this `(dataset, x)`; ties all flagged.
    pub best: bool,
}

/// Statistics over partitions at the last planned iteration, recomputed from
/// the per-partition records rather than trusted from the stored aggregate.
fn row_for(dir: &Path, dataset: &str, run: &RunSummary) -> Result<ReportRow, ReportError> {
    let records: Vec<MetricRecord> = run
        .partitions
        .iter()
        .filter_map(|p| {
            p.iterations
                .iter()
                .find(|it| it.iteration == run.planned_iterations)
        })
        .map(|it| MetricRecord {
            accuracy: it.accuracy,
            kappa: it.kappa,
            propagation_accuracy: it.propagation_accuracy,
        })
        .collect();
    if records.is_empty() {
        return Err(ReportError::NoFinishedPartitions {
            dir: dir.to_path_buf(),
            mode: run.mode,
            x: run.x,
        });
    }
    let agg = aggregate(&records).map_err(|source| ReportError::Metrics {
        dir: dir.to_path_buf(),
        source,
    })?;
    Ok(ReportRow {
        dataset: dataset.to_string(),
        mode: run.mode,
        x: run.x,
        accuracy: agg.accuracy,
        kappa: agg.kappa,
        propagation_accuracy: agg.propagation_accuracy,
        partitions: agg.partition_count,
        best: false,
    })
}

pub fn build_rows(grids: &[(PathBuf, GridSummary)]) -> Result<Vec<ReportRow>, ReportError> {
    let mut rows = Vec::new();
    for (dir, grid) in grids {
        for run in &grid.runs {
            rows.push(row_for(dir, &grid.dataset, run)?);
        }
    }
    for i in 0..rows.len() {
        let best = rows
            .iter()
            .filter(|r| r.dataset == rows[i].dataset && r.x == rows[i].x)
            .map(|r| r.kappa.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        rows[i].best = rows[i].kappa.mean == best;
    }
    Ok(rows)
}

/// Loads `<dir>/summary.json` for each directory.
pub fn load_grids(dirs: &[PathBuf]) -> Result<Vec<(PathBuf, GridSummary)>, ReportError> {
    if dirs.is_empty() {
        return Err(ReportError::Empty);
    }
    dirs.iter()
        .map(|d| {
            read_run_summary(d)
                .map(|g| (d.clone(), g))
                .map_err(|e| ReportError::Summary {
                    dir: d.clone(),
                    message: e.to_string(),
                })
        })
        .collect()
}

pub const REPORT_HEADER: &str = "dataset,mode,x,accuracy_mean,accuracy_std,kappa_mean,kappa_std,propagation_mean,propagation_std,partitions,best";

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let (pm, ps) = match r.propagation_accuracy {
            Some(p) => (format!("{:.6}", p.mean), format!("{:.6}", p.std)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{pm},{ps},{},{}\n",
            r.dataset,
            r.mode,
            r.x,
            r.accuracy.mean,
            r.accuracy.std,
            r.kappa.mean,
            r.kappa.std,
            r.partitions,
            u8::from(r.best)
        ));
    }
    out
}

/// Loads, aggregates and renders in one step.
pub fn report_from_dirs(dirs: &[PathBuf]) -> Result<String, ReportError> {
    Ok(render_csv(&build_rows(&load_grids(dirs)?)?))
}
