//! Experiment orchestration: baseline, a single propagation round, and the
//! propagation loop, evaluated over independent stratified partitions.

mod output;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, DataError, Dataset, Split, SplitAssignment, SplitSpec};
use crate::extractor::{
    extract_features, predict, train_extractor, ExtractorError, ExtractorModel, ExtractorSpec,
    TrainingSet,
};
use crate::metrics::{
    aggregate, cohens_kappa, propagation_accuracy, AggregateRecord, MetricRecord, MetricsError,
};
use crate::opf::{confidence, propagate_labels, OpfError, SeedSet};
use crate::par;
use crate::tsne::{tsne_embed, Embedding2D, TsneError, TsneParams};

pub use output::{
    read_run_summary, run_dir, write_embedding_csv, write_grid, write_loss_trace_csv,
    write_propagation_csv, write_run, AggregateAt, GridSummary, IterationSummary,
    PartitionSummary, RunSummary, GRID_SUMMARY_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tsne(#[from] TsneError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("test isolation violated: sample {0:?} from T reached a training input")]
    Isolation(String),
    #[error("t-SNE row for sample {id:?} is degenerate: all its distances are zero")]
    DegenerateSample { id: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run output {path}: {message}")]
    Output {
        path: std::path::PathBuf,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Baseline,
    Deepfa,
    DeepfaLoop,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Deepfa, Mode::DeepfaLoop];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Deepfa => "deepfa",
            Mode::DeepfaLoop => "deepfa-loop",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "deepfa" => Ok(Mode::Deepfa),
            "deepfa-loop" => Ok(Mode::DeepfaLoop),
            other => Err(format!(
                "unknown mode {other:?} (expected baseline, deepfa or deepfa-loop)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Loop count for `deepfa-loop`. `baseline` always runs 0 rounds and
    /// `deepfa` exactly 1.
    pub iterations: usize,
    pub split: SplitSpec,
    pub tsne: TsneParams,
    pub extractor: ExtractorSpec,
    /// Round `t` projects with t-SNE seed `base_seed + t`.
    pub base_seed: u64,
    /// Partition `p` splits with seed `split.seed + p`.
    pub partitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::DeepfaLoop,
            iterations: 5,
            split: SplitSpec::default(),
            tsne: TsneParams::default(),
            extractor: ExtractorSpec::default(),
            base_seed: 0,
            partitions: 3,
        }
    }
}

impl ExperimentConfig {
    /// Propagation rounds actually run for the configured mode.
    pub fn effective_iterations(&self) -> usize {
        match self.mode {
            Mode::Baseline => 0,
            Mode::Deepfa => 1,
            Mode::DeepfaLoop => self.iterations,
        }
    }

    pub fn partition_seeds(&self) -> Vec<u64> {
        (0..self.partitions as u64)
            .map(|p| self.split.seed.wrapping_add(p))
            .collect()
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.partitions == 0 {
            return Err(RunError::Config("partitions must be >= 1".into()));
        }
        self.split.validate()?;
        self.tsne.validate()?;
        self.extractor.validate()?;
        Ok(())
    }
}

/// Artifacts of one propagation round. Per-sample vectors are indexed by
/// position in `train_indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationRecord {
    /// Dataset indices of the S and U members, in dataset order.
    pub train_indices: Vec<usize>,
    pub embedding: Embedding2D,
    pub assigned_label: Vec<usize>,
    pub cost: Vec<f64>,
    pub confidence: Vec<f64>,
    pub supervised: Vec<bool>,
    /// Labels the extractor was retrained on.
    pub training_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub metrics: MetricRecord,
    pub extractor_seed: u64,
    pub tsne_seed: Option<u64>,
    pub propagation: Option<PropagationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    pub partition: usize,
    pub split_seed: u64,
    pub counts: (usize, usize, usize),
    pub iterations: Vec<IterationRecord>,
    /// Set when a round failed; earlier rounds are kept.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: Mode,
    pub x: f64,
    pub planned_iterations: usize,
    pub partitions: Vec<PartitionResult>,
    /// `(iteration, aggregate over the partitions that reached it)`.
    pub aggregates: Vec<(usize, AggregateRecord)>,
}

impl RunResult {
    /// Aggregate at the last planned round, if any partition reached it.
    pub fn final_aggregate(&self) -> Option<&AggregateRecord> {
        self.aggregates
            .iter()
            .find(|(t, _)| *t == self.planned_iterations)
            .map(|(_, a)| a)
    }

    pub fn first_error(&self) -> Option<&str> {
        self.partitions.iter().find_map(|p| p.error.as_deref())
    }
}

/// Trains on S only and evaluates on T; U is ignored.
pub fn run_baseline(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    if cfg.mode != Mode::Baseline {
        return Err(RunError::Config(format!(
            "run_baseline called with mode {}",
            cfg.mode
        )));
    }
    run_partitions(ds, cfg, 0)
}

/// One (`deepfa`) or several (`deepfa-loop`) rounds of
/// extract -> project -> propagate -> retrain.
pub fn run_deepfa(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    if cfg.mode == Mode::Baseline {
        return Err(RunError::Config("run_deepfa called with mode baseline".into()));
    }
    run_partitions(ds, cfg, cfg.effective_iterations())
}

/// Dispatches on `cfg.mode`.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    match cfg.mode {
        Mode::Baseline => run_baseline(ds, cfg),
        _ => run_deepfa(ds, cfg),
    }
}

/// Every mode crossed with every supervised fraction, modes outermost.
pub fn run_grid(
    ds: &Dataset,
    x_values: &[f64],
    modes: &[Mode],
    template: &ExperimentConfig,
) -> Result<Vec<RunResult>, RunError> {
    if x_values.is_empty() || modes.is_empty() {
        return Err(RunError::Config("grid needs at least one mode and one x".into()));
    }
    if let Some(x) = x_values.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(RunError::Config(format!("grid x values must lie in (0, 1), got {x}")));
    }
    let mut out = Vec::with_capacity(modes.len() * x_values.len());
    for &mode in modes {
        for &x in x_values {
            let mut cfg = template.clone();
            cfg.mode = mode;
            cfg.split.x = x;
            out.push(run_experiment(ds, &cfg)?);
        }
    }
    Ok(out)
}

fn run_partitions(ds: &Dataset, cfg: &ExperimentConfig, iterations: usize) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let seeds = cfg.partition_seeds();
    let splits = seeds
        .iter()
        .map(|&seed| stratified_split(ds, &SplitSpec { seed, ..cfg.split }))
        .collect::<Result<Vec<_>, _>>()?;

    let partitions = par::map_range(splits.len(), |p| {
        run_partition(ds, cfg, p, seeds[p], &splits[p], iterations)
    });

    let mut aggregates = Vec::new();
    for t in 0..=iterations {
        let records: Vec<MetricRecord> = partitions
            .iter()
            .filter_map(|p| p.iterations.iter().find(|r| r.iteration == t))
            .map(|r| r.metrics)
            .collect();
        if records.is_empty() {
            continue;
        }
        aggregates.push((t, aggregate(&records)?));
    }
    Ok(RunResult {
        mode: cfg.mode,
        x: cfg.split.x,
        planned_iterations: iterations,
        partitions,
        aggregates,
    })
}

fn run_partition(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    partition: usize,
    split_seed: u64,
    split: &SplitAssignment,
    iterations: usize,
) -> PartitionResult {
    let mut result = PartitionResult {
        partition,
        split_seed,
        counts: split.counts(),
        iterations: Vec::new(),
        error: None,
    };
    if let Err(e) = partition_rounds(ds, cfg, partition, split, iterations, &mut result.iterations) {
        result.error = Some(e.to_string());
    }
    result
}

/// Fails if any of `indices` belongs to T.
pub fn audit_isolation(ds: &Dataset, split: &SplitAssignment, indices: &[usize]) -> Result<(), RunError> {
    match indices.iter().find(|&&i| split.membership()[i] == Split::T) {
        Some(&i) => Err(RunError::Isolation(ds.samples()[i].id.clone())),
        None => Ok(()),
    }
}

fn extractor_spec_for(cfg: &ExperimentConfig, partition: usize, round: usize) -> ExtractorSpec {
    let mut spec = cfg.extractor.clone();
    spec.seed = cfg.extractor.seed.wrapping_add(round as u64);
    if let Some(base) = &cfg.extractor.work_dir {
        spec.work_dir = Some(base.join(format!("p{partition}")).join(format!("iter{round}")));
    }
    spec
}

fn evaluate(
    model: &ExtractorModel,
    ds: &Dataset,
    test: &[usize],
    truth: &[usize],
    propagation: Option<f64>,
) -> Result<MetricRecord, RunError> {
    if test.is_empty() {
        return Err(RunError::Config("test set is empty; set test_frac > 0".into()));
    }
    let pred = predict(model, &ds.features_of(test))?;
    Ok(MetricRecord {
        accuracy: crate::metrics::accuracy(&pred.predicted_label, truth)?,
        kappa: cohens_kappa(&pred.predicted_label, truth)?,
        propagation_accuracy: propagation,
    })
}

fn partition_rounds(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    partition: usize,
    split: &SplitAssignment,
    iterations: usize,
    records: &mut Vec<IterationRecord>,
) -> Result<(), RunError> {
    let labels = ds.labels();
    let k = ds.num_classes();
    let sup = split.indices(Split::S);
    let test = split.indices(Split::T);
    let train: Vec<usize> = (0..ds.len())
        .filter(|&i| split.membership()[i] != Split::T)
        .collect();
    audit_isolation(ds, split, &sup)?;
    audit_isolation(ds, split, &train)?;
    let test_truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();

    let sup_features = ds.features_of(&sup);
    let sup_labels: Vec<usize> = sup.iter().map(|&i| labels[i]).collect();
    let sup_mask = vec![true; sup.len()];
    let spec0 = extractor_spec_for(cfg, partition, 0);
    let mut model = train_extractor(
        &TrainingSet {
            features: &sup_features,
            labels: &sup_labels,
            supervised: Some(&sup_mask),
            num_classes: k,
        },
        &spec0,
        None,
    )?;
    records.push(IterationRecord {
        iteration: 0,
        metrics: evaluate(&model, ds, &test, &test_truth, None)?,
        extractor_seed: spec0.seed,
        tsne_seed: None,
        propagation: None,
    });
    if iterations == 0 {
        return Ok(());
    }

    let train_raw = ds.features_of(&train);
    let supervised: Vec<bool> = train
        .iter()
        .map(|&i| split.membership()[i] == Split::S)
        .collect();
    let seed_pos: Vec<usize> = (0..train.len()).filter(|&p| supervised[p]).collect();
    let seed_labels: Vec<usize> = seed_pos.iter().map(|&p| labels[train[p]]).collect();
    let seeds = SeedSet::new(seed_pos, seed_labels, k)?;

    for t in 1..=iterations {
        let features = extract_features(&model, &train_raw)?;
        let tsne_seed = cfg.base_seed.wrapping_add(t as u64);
        let params = TsneParams {
            seed: tsne_seed,
            ..cfg.tsne.clone()
        };
        let embedding = tsne_embed(&features, &params).map_err(|e| match e {
            TsneError::DegenerateRow { row } => RunError::DegenerateSample {
                id: ds.samples()[train[row]].id.clone(),
            },
            other => other.into(),
        })?;
        let forest = propagate_labels(embedding.matrix(), &seeds)?;
        let conf = confidence(&forest.class_costs, &forest.assigned_label, &supervised)?;

        let training_labels: Vec<usize> = (0..train.len())
            .map(|p| {
                if supervised[p] {
                    labels[train[p]]
                } else {
                    forest.assigned_label[p]
                }
            })
            .collect();
        let (u_assigned, u_truth): (Vec<usize>, Vec<usize>) = (0..train.len())
            .filter(|&p| !supervised[p])
            .map(|p| (forest.assigned_label[p], labels[train[p]]))
            .unzip();
        let prop_acc = propagation_accuracy(&u_assigned, &u_truth)?;

        let spec_t = extractor_spec_for(cfg, partition, t);
        model = train_extractor(
            &TrainingSet {
                features: &train_raw,
                labels: &training_labels,
                supervised: Some(&supervised),
                num_classes: k,
            },
            &spec_t,
            Some(&model),
        )?;
        records.push(IterationRecord {
            iteration: t,
            metrics: evaluate(&model, ds, &test, &test_truth, Some(prop_acc))?,
            extractor_seed: spec_t.seed,
            tsne_seed: Some(tsne_seed),
            propagation: Some(PropagationRecord {
                train_indices: train.clone(),
                embedding,
                assigned_label: forest.assigned_label,
                cost: forest.cost,
                confidence: conf,
                supervised: supervised.clone(),
                training_labels,
            }),
        });
    }
    Ok(())
}
