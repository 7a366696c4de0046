//! Scoring, docking and screening power.

mod decoys;
mod report;

pub use decoys::{
    docking_success_rate, enrichment_factor, mean_enrichment, rank_entries, read_decoy_csv,
    DecoyEntry, DecoySet, EntryKind, DEFAULT_EF_FRACTIONS, DEFAULT_RMSD_CUTOFF, DEFAULT_TOP_N,
};
pub use report::{build_report, Aggregate, MetricReport, TargetMetrics};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("Pearson correlation is undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("decoy set `{target}`: {message}")]
    InvalidDecoySet { target: String, message: String },
    #[error("target `{target}`: missing predictions for {ids:?}")]
    MissingPredictions { target: String, ids: Vec<String> },
    #[error("target `{target}`: predictions for ids outside the reporting set {ids:?}")]
    UnexpectedPredictions { target: String, ids: Vec<String> },
    #[error("{0}")]
    Invalid(String),
}

fn check_pair(predicted: &[f64], actual: &[f64], min_len: usize) -> Result<(), MetricError> {
    if predicted.len() != actual.len() {
        return Err(MetricError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.len() < min_len {
        return Err(MetricError::TooFew {
            needed: min_len,
            found: predicted.len(),
        });
    }
    if predicted.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("predicted"));
    }
    if actual.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("actual"));
    }
    Ok(())
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample Pearson correlation coefficient.
///
/// Constant inputs are an error rather than a silent zero.
pub fn pearson(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    check_pair(predicted, actual, 2)?;
    if is_constant(predicted) {
        return Err(MetricError::ZeroVariance("predicted"));
    }
    if is_constant(actual) {
        return Err(MetricError::ZeroVariance("actual"));
    }
    let (mx, my) = (mean(predicted), mean(actual));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in predicted.iter().zip(actual) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVariance("predicted"));
    }
    if syy == 0.0 {
        return Err(MetricError::ZeroVariance("actual"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Root-mean-squared error, in label units.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    check_pair(predicted, actual, 1)?;
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Sample mean and standard deviation (n - 1 denominator). A single sample
/// has standard deviation 0.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    match xs.len() {
        0 => None,
        1 => Some((xs[0], 0.0)),
        n => {
            let m = mean(xs);
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            Some((m, var.sqrt()))
        }
    }
}
