//! Docking success rate and screening enrichment over scored decoy sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Pose RMSD (Å) under which a docking pose counts as correct.
pub const DEFAULT_RMSD_CUTOFF: f64 = 2.0;
/// Number of top-scored poses inspected per target.
pub const DEFAULT_TOP_N: usize = 1;
/// Top fractions at which enrichment is reported.
pub const DEFAULT_EF_FRACTIONS: [f64; 4] = [0.005, 0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    NativePose,
    DecoyPose,
    Active,
    Inactive,
}

impl EntryKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "native_pose" => Some(EntryKind::NativePose),
            "decoy_pose" => Some(EntryKind::DecoyPose),
            "active" => Some(EntryKind::Active),
            "inactive" => Some(EntryKind::Inactive),
            _ => None,
        }
    }

    pub fn is_pose(self) -> bool {
        matches!(self, EntryKind::NativePose | EntryKind::DecoyPose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyEntry {
    pub entry_id: String,
    /// Higher is better. May be left empty in files and filled by a scorer.
    pub score: Option<f64>,
    pub kind: EntryKind,
    pub rmsd_to_native: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoySet {
    pub target_id: String,
    pub entries: Vec<DecoyEntry>,
}

impl DecoySet {
    fn invalid(&self, message: impl Into<String>) -> MetricError {
        MetricError::InvalidDecoySet {
            target: self.target_id.clone(),
            message: message.into(),
        }
    }
}

/// Entries sorted by descending score, ties by ascending `entry_id`.
pub fn rank_entries(set: &DecoySet) -> Result<Vec<&DecoyEntry>, MetricError> {
    if set.entries.is_empty() {
        return Err(set.invalid("no entries"));
    }
    for e in &set.entries {
        match e.score {
            None => return Err(set.invalid(format!("entry `{}` has no score", e.entry_id))),
            Some(s) if !s.is_finite() => {
                return Err(set.invalid(format!("entry `{}` has non-finite score", e.entry_id)))
            }
            _ => {}
        }
    }
    let mut ranked: Vec<&DecoyEntry> = set.entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.entry_id.cmp(&b.entry_id))
    });
    Ok(ranked)
}

/// Fraction of targets where one of the `top_n` best-scored poses lies within
/// `rmsd_cutoff` of the native pose.
pub fn docking_success_rate(
    sets: &[DecoySet],
    rmsd_cutoff: f64,
    top_n: usize,
) -> Result<f64, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::Invalid("no docking decoy sets".into()));
    }
    if top_n == 0 {
        return Err(MetricError::Invalid("top_n must be positive".into()));
    }
    let mut successes = 0usize;
    for set in sets {
        if let Some(e) = set.entries.iter().find(|e| !e.kind.is_pose()) {
            return Err(set.invalid(format!("entry `{}` is not a pose", e.entry_id)));
        }
        if let Some(e) = set.entries.iter().find(|e| e.rmsd_to_native.is_none()) {
            return Err(set.invalid(format!("pose `{}` has no RMSD", e.entry_id)));
        }
        let ranked = rank_entries(set)?;
        if ranked
            .iter()
            .take(top_n)
            .any(|e| e.rmsd_to_native.unwrap() <= rmsd_cutoff)
        {
            successes += 1;
        }
    }
    Ok(successes as f64 / sets.len() as f64)
}

/// Enrichment of actives among the top `top_fraction` of the ranking:
/// `(actives_top / n_top) / (actives / n)` with `n_top = ceil(top_fraction * n)`.
pub fn enrichment_factor(set: &DecoySet, top_fraction: f64) -> Result<f64, MetricError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(MetricError::Invalid(format!(
            "top fraction {top_fraction} outside (0, 1]"
        )));
    }
    if let Some(e) = set.entries.iter().find(|e| e.kind.is_pose()) {
        return Err(set.invalid(format!("entry `{}` is a pose, expected active/inactive", e.entry_id)));
    }
    let ranked = rank_entries(set)?;
    let n = ranked.len();
    let actives = ranked.iter().filter(|e| e.kind == EntryKind::Active).count();
    if actives == 0 {
        return Err(set.invalid("no actives"));
    }
    // guard against 0.1 * 100 = 10.000000000000002 rounding up to 11
    let n_top = ((top_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let n_top = n_top.min(n);
    let top_actives = ranked[..n_top]
        .iter()
        .filter(|e| e.kind == EntryKind::Active)
        .count();
    Ok((top_actives as f64 / n_top as f64) / (actives as f64 / n as f64))
}

/// Mean enrichment factor over targets, per fraction.
pub fn mean_enrichment(sets: &[DecoySet], fractions: &[f64]) -> Result<Vec<(f64, f64)>, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::Invalid("no screening decoy sets".into()));
    }
    fractions
        .iter()
        .map(|&f| {
            let total = sets
                .iter()
                .map(|s| enrichment_factor(s, f))
                .sum::<Result<f64, _>>()?;
            Ok((f, total / sets.len() as f64))
        })
        .collect()
}

/// Parse `target_id,entry_id,kind,score,rmsd` rows into decoy sets grouped by
/// target. Score and RMSD cells may be empty.
pub fn read_decoy_csv<R: Read>(reader: R) -> Result<Vec<DecoySet>, MetricError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut sets: BTreeMap<String, Vec<DecoyEntry>> = BTreeMap::new();
    let opt = |raw: &str, row: usize, what: &str| -> Result<Option<f64>, MetricError> {
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<f64>()
            .map(Some)
            .map_err(|_| MetricError::Invalid(format!("decoy row {row}: bad {what} `{raw}`")))
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| MetricError::Invalid(format!("decoy row {row}: {e}")))?;
        if rec.len() < 3 {
            return Err(MetricError::Invalid(format!("decoy row {row}: too few columns")));
        }
        let kind = EntryKind::parse(&rec[2])
            .ok_or_else(|| MetricError::Invalid(format!("decoy row {row}: unknown kind `{}`", &rec[2])))?;
        let entry = DecoyEntry {
            entry_id: rec[1].to_string(),
            score: opt(rec.get(3).unwrap_or(""), row, "score")?,
            kind,
            rmsd_to_native: opt(rec.get(4).unwrap_or(""), row, "rmsd")?,
        };
        sets.entry(rec[0].to_string()).or_default().push(entry);
    }
    Ok(sets
        .into_iter()
        .map(|(target_id, entries)| DecoySet { target_id, entries })
        .collect())
}
