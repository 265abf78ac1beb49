//! Accuracy, Cohen's kappa, propagation accuracy and their aggregation over
//! partitions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {predicted} predictions vs {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("records disagree on whether propagation accuracy is present")]
    InconsistentRecords,
}

fn check(predicted: &[usize], truth: &[usize]) -> Result<(), MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    check(predicted, truth)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`.
///
/// When chance agreement is certain (`p_e = 1`, both marginals on one class)
/// the result is 1 for perfect agreement and 0 otherwise.
pub fn cohens_kappa(predicted: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    check(predicted, truth)?;
    let n = predicted.len();
    let k = predicted.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let mut pred_marginal = vec![0u64; k];
    let mut true_marginal = vec![0u64; k];
    let mut agree = 0u64;
    for (&p, &t) in predicted.iter().zip(truth) {
        pred_marginal[p] += 1;
        true_marginal[t] += 1;
        if p == t {
            agree += 1;
        }
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    // integer products keep p_e exact up to the final division
    let chance: u128 = pred_marginal
        .iter()
        .zip(&true_marginal)
        .map(|(&a, &b)| a as u128 * b as u128)
        .sum();
    let n2 = n as u128 * n as u128;
    if chance == n2 {
        return Ok(if agree as usize == n { 1.0 } else { 0.0 });
    }
    let p_e = chance as f64 / n2 as f64;
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fraction of unsupervised samples whose propagated label is correct.
pub fn propagation_accuracy(assigned_u: &[usize], truth_u: &[usize]) -> Result<f64, MetricsError> {
    accuracy(assigned_u, truth_u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub accuracy: f64,
    pub kappa: f64,
    /// Absent when no propagation took place (baseline).
    pub propagation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub accuracy: MeanStd,
    pub kappa: MeanStd,
    pub propagation_accuracy: Option<MeanStd>,
    pub partition_count: usize,
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Mean and population standard deviation of every metric over partitions.
pub fn aggregate(records: &[MetricRecord]) -> Result<AggregateRecord, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let has_prop = first.propagation_accuracy.is_some();
    if records
        .iter()
        .any(|r| r.propagation_accuracy.is_some() != has_prop)
    {
        return Err(MetricsError::InconsistentRecords);
    }
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let kappa: Vec<f64> = records.iter().map(|r| r.kappa).collect();
    let prop = has_prop.then(|| {
        let v: Vec<f64> = records
            .iter()
            .map(|r| r.propagation_accuracy.unwrap())
            .collect();
        mean_std(&v)
    });
    Ok(AggregateRecord {
        accuracy: mean_std(&acc),
        kappa: mean_std(&kappa),
        propagation_accuracy: prop,
        partition_count: records.len(),
    })
}
