//! Semi-supervised annotation engine.
//!
//! A small supervised set is grown into a large pseudo-labeled training set by
//! looping over four stages:
//!
//! 1. train a feature extractor on the currently labeled samples,
//! 2. project the extracted features of the training samples to 2D with exact t-SNE,
//! 3. propagate the supervised labels through the 2D space with an
//!    optimum-path forest (minimax path cost on the complete Euclidean graph),
//! 4. retrain the extractor on supervised plus propagated labels.
//!
//! The crate also ships the evaluation harness (stratified splits, accuracy,
//! Cohen's kappa, propagation accuracy), a subprocess protocol for external
//! extractors, and SVG/CSV reporting.
//!
//! Data-parallel inner loops (pairwise distances, perplexity calibration, the
//! t-SNE gradient, per-class forests, independent partitions) run on rayon when
//! the `parallel` feature is enabled and sequentially otherwise. Every
//! reduction is performed in a fixed order, so results are bitwise identical
//! for any worker count.

pub mod data;
pub mod driver;
pub mod extractor;
pub mod matrix;
pub mod metrics;
pub mod opf;
mod par;
pub use par::is_parallel;
pub mod report;
pub mod tsne;

pub use data::{Dataset, SampleRecord, Split, SplitAssignment, SplitSpec};
pub use driver::{ExperimentConfig, Mode, RunResult};
pub use extractor::{ExtractorKind, ExtractorModel, ExtractorSpec, PredictionResult};
pub use matrix::FeatureMatrix;
pub use metrics::{AggregateRecord, MetricRecord};
pub use opf::{PathForest, SeedSet};
pub use tsne::{Embedding2D, TsneParams};
