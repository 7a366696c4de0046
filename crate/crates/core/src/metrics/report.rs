use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{pearson, rmse, MetricError};
use crate::dataset::Dataset;
use crate::split::SplitManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub pearson_r: f64,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub avg_pearson: f64,
    pub min_pearson: f64,
}

/// Per-target scoring power with average and worst-case aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_target: BTreeMap<String, TargetMetrics>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docking_success_rate: Option<f64>,
    /// (top fraction, mean enrichment factor) pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrichment_factors: Option<Vec<(f64, f64)>>,
}

impl MetricReport {
    pub fn from_targets(per_target: BTreeMap<String, TargetMetrics>) -> Result<Self, MetricError> {
        if per_target.is_empty() {
            return Err(MetricError::Invalid("report needs at least one target".into()));
        }
        let rs: Vec<f64> = per_target.values().map(|m| m.pearson_r).collect();
        let aggregate = Aggregate {
            avg_pearson: rs.iter().sum::<f64>() / rs.len() as f64,
            min_pearson: rs.iter().copied().fold(f64::INFINITY, f64::min),
        };
        Ok(Self {
            per_target,
            aggregate,
            docking_success_rate: None,
            enrichment_factors: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// One row per target: `target,n,pearson_r,rmse`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["target", "n", "pearson_r", "rmse"])?;
        for (name, m) in &self.per_target {
            w.write_record([
                name.clone(),
                m.n.to_string(),
                m.pearson_r.to_string(),
                m.rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Score each target's reporting test set (test minus holdout).
///
/// `predictions` must cover exactly the reporting ids of every target.
pub fn build_report(
    predictions: &BTreeMap<String, BTreeMap<String, f64>>,
    dataset: &Dataset,
    manifest: &SplitManifest,
) -> Result<MetricReport, MetricError> {
    let mut per_target = BTreeMap::new();
    for (name, split) in &manifest.targets {
        let expected = split.reporting_ids();
        let empty = BTreeMap::new();
        let preds = predictions.get(name).unwrap_or(&empty);
        let missing: Vec<String> = expected
            .iter()
            .filter(|id| !preds.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(MetricError::MissingPredictions {
                target: name.clone(),
                ids: missing,
            });
        }
        let expected_set: BTreeSet<&str> = expected.iter().map(String::as_str).collect();
        let extra: Vec<String> = preds
            .keys()
            .filter(|id| !expected_set.contains(id.as_str()))
            .cloned()
            .collect();
        if !extra.is_empty() {
            return Err(MetricError::UnexpectedPredictions {
                target: name.clone(),
                ids: extra,
            });
        }
        let mut p = Vec::with_capacity(expected.len());
        let mut y = Vec::with_capacity(expected.len());
        for id in &expected {
            let rec = dataset
                .get(id)
                .ok_or_else(|| MetricError::Invalid(format!("complex `{id}` not in dataset")))?;
            p.push(preds[id]);
            y.push(rec.pk());
        }
        per_target.insert(
            name.clone(),
            TargetMetrics {
                pearson_r: pearson(&p, &y)?,
                rmse: rmse(&p, &y)?,
                n: expected.len(),
            },
        );
    }
    if let Some(extra) = predictions.keys().find(|k| !manifest.targets.contains_key(*k)) {
        return Err(MetricError::Invalid(format!("predictions for unknown target `{extra}`")));
    }
    MetricReport::from_targets(per_target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tm(r: f64) -> TargetMetrics {
        TargetMetrics {
            pearson_r: r,
            rmse: 1.0,
            n: 10,
        }
    }

    #[test]
    fn aggregates_over_three_targets() {
        let m: BTreeMap<String, TargetMetrics> =
            [("a", 0.3), ("b", -0.1), ("c", 0.7)].iter().map(|(k, r)| (k.to_string(), tm(*r))).collect();
        let rep = MetricReport::from_targets(m).unwrap();
        assert!((rep.aggregate.avg_pearson - 0.3).abs() < 1e-15);
        assert_eq!(rep.aggregate.min_pearson, -0.1);
    }

    #[test]
    fn single_target_avg_equals_min() {
        let m: BTreeMap<String, TargetMetrics> = [("only".to_string(), tm(0.42))].into();
        let rep = MetricReport::from_targets(m).unwrap();
        assert_eq!(rep.aggregate.avg_pearson, 0.42);
        assert_eq!(rep.aggregate.min_pearson, 0.42);
    }

    #[test]
    fn csv_flattening() {
        let m: BTreeMap<String, TargetMetrics> = [("x".to_string(), tm(0.5))].into();
        let rep = MetricReport::from_targets(m).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "target,n,pearson_r,rmse\nx,10,0.5,1\n");
    }
}
