use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TrainedEnsemble;
use crate::metrics::mean_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub eval_set: String,
    /// Epoch as a percentage of `max_epochs`.
    pub epoch_pct: f64,
    /// Members still training at this epoch with a defined Pearson.
    pub n_members: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    /// `eval_set,epoch_pct,n_members,mean_pearson,std_pearson`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["eval_set", "epoch_pct", "n_members", "mean_pearson", "std_pearson"])?;
        for r in &self.rows {
            w.write_record([
                r.eval_set.clone(),
                r.epoch_pct.to_string(),
                r.n_members.to_string(),
                r.mean_pearson.to_string(),
                r.std_pearson.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregate per-epoch evaluation Pearson across members.
///
/// Members that stopped early contribute only to the epochs they ran, so
/// later rows may average fewer members. `eval_sets` restricts the output;
/// `None` uses every tracked set.
pub fn track_curves(ensemble: &TrainedEnsemble, eval_sets: Option<&[String]>) -> CurveTable {
    let names: BTreeSet<String> = match eval_sets {
        Some(names) => names.iter().cloned().collect(),
        None => ensemble
            .members
            .iter()
            .flat_map(|m| m.training_history.iter())
            .flat_map(|r| r.eval_pearson.keys().cloned())
            .collect(),
    };
    let Some(first) = ensemble.members.first() else {
        return CurveTable::default();
    };
    let max_epochs = first.config.max_epochs.max(1) as f64;
    let last = ensemble.members.iter().map(|m| m.last_epoch()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for name in &names {
        for epoch in 1..=last {
            let values: Vec<f64> = ensemble
                .members
                .iter()
                .filter_map(|m| m.training_history.iter().find(|r| r.epoch == epoch))
                .filter_map(|r| r.eval_pearson.get(name).copied().flatten())
                .collect();
            if let Some((mean, std)) = mean_std(&values) {
                rows.push(CurveRow {
                    eval_set: name.clone(),
                    epoch_pct: 100.0 * epoch as f64 / max_epochs,
                    n_members: values.len(),
                    mean_pearson: mean,
                    std_pearson: std,
                });
            }
        }
    }
    CurveTable { rows }
}
