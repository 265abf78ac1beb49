//! Run directory layout:
//!
//! ```text
//! <out>/summary.json
//! <out>/<mode>/<x>/summary.json
//! <out>/<mode>/<x>/<partition>/iter<t>/metrics.json
//! <out>/<mode>/<x>/<partition>/iter<t>/{embedding,labels,confidence}.csv   (t >= 1)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Mode, PropagationRecord, RunError, RunResult};
use crate::data::Dataset;
use crate::metrics::AggregateRecord;
use crate::report::plot::{render_scatter, ColorMode, PlotStyle, ScatterPoint};
use crate::tsne::Embedding2D;

pub const GRID_SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub propagation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub partition: usize,
    pub seed: u64,
    pub s: usize,
    pub u: usize,
    pub t: usize,
    pub iterations: Vec<IterationSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateAt {
    pub iteration: usize,
    #[serde(flatten)]
    pub aggregate: AggregateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub x: f64,
    pub planned_iterations: usize,
    pub partitions: Vec<PartitionSummary>,
    pub aggregates: Vec<AggregateAt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dataset: String,
    pub runs: Vec<RunSummary>,
}

#[derive(Serialize)]
struct MetricsFile {
    accuracy: f64,
    kappa: f64,
    propagation_accuracy: Option<f64>,
    iteration: usize,
    seed: u64,
}

impl RunSummary {
    pub fn from_result(r: &RunResult) -> Self {
        Self {
            mode: r.mode,
            x: r.x,
            planned_iterations: r.planned_iterations,
            partitions: r
                .partitions
                .iter()
                .map(|p| PartitionSummary {
                    partition: p.partition,
                    seed: p.split_seed,
                    s: p.counts.0,
                    u: p.counts.1,
                    t: p.counts.2,
                    iterations: p
                        .iterations
                        .iter()
                        .map(|it| IterationSummary {
                            iteration: it.iteration,
                            accuracy: it.metrics.accuracy,
                            kappa: it.metrics.kappa,
                            propagation_accuracy: it.metrics.propagation_accuracy,
                        })
                        .collect(),
                    error: p.error.clone(),
                })
                .collect(),
            aggregates: r
                .aggregates
                .iter()
                .map(|(iteration, aggregate)| AggregateAt {
                    iteration: *iteration,
                    aggregate: *aggregate,
                })
                .collect(),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary types serialize");
    s.push('\n');
    s
}

/// Directory holding one `(mode, x)` run.
pub fn run_dir(out: &Path, mode: Mode, x: f64) -> PathBuf {
    out.join(mode.as_str()).join(format!("{x}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `id,y0,y1`.
pub fn write_embedding_csv(path: &Path, ids: &[&str], y: &Embedding2D) -> Result<(), RunError> {
    let mut out = String::from("id,y0,y1\n");
    for (i, id) in ids.iter().enumerate() {
        let [a, b] = y.point(i);
        out.push_str(&format!("{},{a},{b}\n", csv_field(id)));
    }
    write_file(path, out)
}

/// `iteration,kl`.
pub fn write_loss_trace_csv(path: &Path, trace: &[(usize, f64)]) -> Result<(), RunError> {
    let mut out = String::from("iteration,kl\n");
    for (it, kl) in trace {
        out.push_str(&format!("{it},{kl}\n"));
    }
    write_file(path, out)
}

/// `id,assigned_label,cost,confidence,supervised`.
pub fn write_propagation_csv(
    path: &Path,
    ids: &[&str],
    class_names: &[String],
    assigned: &[usize],
    cost: &[f64],
    confidence: &[f64],
    supervised: &[bool],
) -> Result<(), RunError> {
    let mut out = String::from("id,assigned_label,cost,confidence,supervised\n");
    for i in 0..ids.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(ids[i]),
            csv_field(&class_names[assigned[i]]),
            cost[i],
            confidence[i],
            u8::from(supervised[i])
        ));
    }
    write_file(path, out)
}

fn write_propagation(
    dir: &Path,
    ds: &Dataset,
    prop: &PropagationRecord,
    plots: bool,
) -> Result<(), RunError> {
    let ids: Vec<&str> = prop
        .train_indices
        .iter()
        .map(|&i| ds.samples()[i].id.as_str())
        .collect();
    write_embedding_csv(&dir.join("embedding.csv"), &ids, &prop.embedding)?;
    write_propagation_csv(
        &dir.join("labels.csv"),
        &ids,
        ds.class_names(),
        &prop.assigned_label,
        &prop.cost,
        &prop.confidence,
        &prop.supervised,
    )?;
    let mut conf = String::from("id,confidence\n");
    for (id, c) in ids.iter().zip(&prop.confidence) {
        conf.push_str(&format!("{},{c}\n", csv_field(id)));
    }
    write_file(&dir.join("confidence.csv"), conf)?;

    if plots {
        let points: Vec<ScatterPoint> = (0..ids.len())
            .map(|p| {
                let [x, y] = prop.embedding.point(p);
                ScatterPoint {
                    x,
                    y,
                    class: prop.assigned_label[p],
                    supervised: prop.supervised[p],
                    confidence: prop.confidence[p],
                }
            })
            .collect();
        for (mode, name) in [
            (ColorMode::ByLabel, "plot_labels.svg"),
            (ColorMode::ByConfidence, "plot_confidence.svg"),
        ] {
            let style = PlotStyle {
                color_mode: mode,
                ..PlotStyle::default()
            };
            let svg = render_scatter(&points, &style)
                .map_err(|e| RunError::Config(format!("plot: {e}")))?;
            write_file(&dir.join(name), svg)?;
        }
    }
    Ok(())
}

/// Writes every artifact of `result` under `out` and returns the run summary.
pub fn write_run(out: &Path, ds: &Dataset, result: &RunResult, plots: bool) -> Result<RunSummary, RunError> {
    let base = run_dir(out, result.mode, result.x);
    for p in &result.partitions {
        for it in &p.iterations {
            let dir = base
                .join(p.partition.to_string())
                .join(format!("iter{}", it.iteration));
            let metrics = MetricsFile {
                accuracy: it.metrics.accuracy,
                kappa: it.metrics.kappa,
                propagation_accuracy: it.metrics.propagation_accuracy,
                iteration: it.iteration,
                seed: p.split_seed,
            };
            write_file(&dir.join("metrics.json"), to_json(&metrics))?;
            if let Some(prop) = &it.propagation {
                write_propagation(&dir, ds, prop, plots)?;
            }
        }
    }
    let summary = RunSummary::from_result(result);
    write_file(&base.join("summary.json"), to_json(&summary))?;
    Ok(summary)
}

/// Writes all runs plus the top-level `summary.json` naming the dataset.
pub fn write_grid(
    out: &Path,
    dataset: &str,
    ds: &Dataset,
    results: &[RunResult],
    plots: bool,
) -> Result<(), RunError> {
    let runs = results
        .iter()
        .map(|r| write_run(out, ds, r, plots))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = GridSummary {
        dataset: dataset.to_string(),
        runs,
    };
    write_file(&out.join(GRID_SUMMARY_FILE), to_json(&grid))
}

/// Reads `<dir>/summary.json` as written by [`write_grid`].
pub fn read_run_summary(dir: &Path) -> Result<GridSummary, RunError> {
    let path = dir.join(GRID_SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Output {
        path,
        message: e.to_string(),
    })
}
