//! Leakage-controlled train/validation/test splits.
//!
//! A split is built in stages, each returning a new [`SplitManifest`]:
//!
//! 1. [`build_ood_split`] moves every complex of each target's cluster into
//!    that target's test set; everything else becomes train/validation.
//! 2. [`apply_clean_filter`] drops train/validation complexes that are too
//!    similar to a protected reference set.
//! 3. [`stratified_kfold`] assigns train/validation complexes to folds with
//!    label-binned stratification.
//! 4. [`holdout_limited`] reserves a fixed number of complexes from each
//!    target test set for validation or fine-tuning.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, SimilarityRecord};
use crate::seed;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_HOLDOUT: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("target `{target}`: cluster `{cluster_id}` does not exist in the dataset")]
    UnknownCluster { target: String, cluster_id: String },
    #[error("targets `{first}` and `{second}` name the same cluster `{cluster_id}`")]
    DuplicateTargetCluster {
        first: String,
        second: String,
        cluster_id: String,
    },
    #[error("complex `{0}` is not in the dataset")]
    UnknownId(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("need at least {needed} train/validation complexes, found {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error("target `{target}`: test set has {size} complexes, holdout of {n_holdout} needs more")]
    TestSetTooSmall {
        target: String,
        size: usize,
        n_holdout: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("manifest invariant violated: {0}")]
    Invariant(String),
}

/// Test membership for one target cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSplit {
    pub cluster_id: String,
    /// Every complex of the cluster, sorted.
    pub test_ids: Vec<String>,
    /// Limited-data holdout, a sorted subset of `test_ids`.
    #[serde(default)]
    pub holdout_ids: Vec<String>,
}

impl TargetSplit {
    /// Test ids minus the holdout; the set metrics are reported on.
    pub fn reporting_ids(&self) -> Vec<String> {
        let held: HashSet<&str> = self.holdout_ids.iter().map(String::as_str).collect();
        self.test_ids
            .iter()
            .filter(|id| !held.contains(id.as_str()))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainVal {
    pub ids: Vec<String>,
    #[serde(default)]
    pub folds: BTreeMap<String, usize>,
}

/// Reproducible description of a split. Serializes to
/// `{seed, k, n_holdout, targets, train_val: {ids, folds}, clean_excluded}`.
///
/// `k` and `n_holdout` are zero until folds and holdouts have been assigned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub k: usize,
    pub n_holdout: usize,
    pub targets: BTreeMap<String, TargetSplit>,
    pub train_val: TrainVal,
    #[serde(default)]
    pub clean_excluded: Vec<String>,
}

impl SplitManifest {
    pub fn target(&self, name: &str) -> Result<&TargetSplit, SplitError> {
        self.targets
            .get(name)
            .ok_or_else(|| SplitError::UnknownTarget(name.to_string()))
    }

    pub fn has_folds(&self) -> bool {
        self.k > 0 && !self.train_val.folds.is_empty()
    }

    pub fn has_holdouts(&self) -> bool {
        self.n_holdout > 0 && self.targets.values().all(|t| !t.holdout_ids.is_empty())
    }

    /// Ids of train/validation complexes in `fold`, in manifest order.
    pub fn fold_ids(&self, fold: usize) -> Vec<&str> {
        self.train_val
            .ids
            .iter()
            .filter(|id| self.train_val.folds.get(*id) == Some(&fold))
            .map(String::as_str)
            .collect()
    }

    /// Ids of train/validation complexes not in `fold`.
    pub fn ids_outside_fold(&self, fold: usize) -> Vec<&str> {
        self.train_val
            .ids
            .iter()
            .filter(|id| self.train_val.folds.get(*id) != Some(&fold))
            .map(String::as_str)
            .collect()
    }

    /// All ids that belong to any target test set (holdouts included).
    pub fn all_test_ids(&self) -> BTreeSet<&str> {
        self.targets
            .values()
            .flat_map(|t| t.test_ids.iter().map(String::as_str))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Check every structural invariant against `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<(), SplitError> {
        let bad = |m: String| Err(SplitError::Invariant(m));
        let mut seen: HashSet<&str> = HashSet::new();
        let groups = self
            .targets
            .values()
            .map(|t| &t.test_ids)
            .chain([&self.train_val.ids, &self.clean_excluded]);
        for ids in groups {
            for id in ids {
                if !dataset.contains(id) {
                    return Err(SplitError::UnknownId(id.clone()));
                }
                if !seen.insert(id) {
                    return bad(format!("`{id}` appears in more than one group"));
                }
            }
        }
        if seen.len() != dataset.len() {
            return bad(format!(
                "partition covers {} of {} complexes",
                seen.len(),
                dataset.len()
            ));
        }
        let test_clusters: HashSet<&str> = self
            .targets
            .values()
            .flat_map(|t| t.test_ids.iter())
            .filter_map(|id| dataset.get(id).map(|r| r.cluster_id.as_str()))
            .collect();
        if let Some(id) = self
            .train_val
            .ids
            .iter()
            .find(|id| test_clusters.contains(dataset.get(id).unwrap().cluster_id.as_str()))
        {
            return bad(format!("train id `{id}` shares a cluster with a test set"));
        }
        if !self.train_val.folds.is_empty() {
            let tv: HashSet<&str> = self.train_val.ids.iter().map(String::as_str).collect();
            if let Some(id) = self.train_val.folds.keys().find(|id| !tv.contains(id.as_str())) {
                return bad(format!("fold assignment for non-train id `{id}`"));
            }
            let used: BTreeSet<usize> = self.train_val.folds.values().copied().collect();
            if used != (0..self.k).collect() {
                return bad(format!("fold indices {used:?} do not cover 0..{}", self.k));
            }
        }
        for (name, t) in &self.targets {
            if t.holdout_ids.is_empty() {
                continue;
            }
            let test: HashSet<&str> = t.test_ids.iter().map(String::as_str).collect();
            if t.holdout_ids.len() != self.n_holdout
                || t.holdout_ids.iter().any(|h| !test.contains(h.as_str()))
            {
                return bad(format!("holdout of `{name}` is not an {}-subset of its test set", self.n_holdout));
            }
        }
        Ok(())
    }
}

/// Hold out every complex of each target cluster.
///
/// `target_clusters` maps a target name (e.g. a PDB id) to its cluster id.
/// All id lists are sorted.
pub fn build_ood_split(
    dataset: &Dataset,
    target_clusters: &BTreeMap<String, String>,
    seed: u64,
) -> Result<SplitManifest, SplitError> {
    let clusters = dataset.clusters();
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (name, cluster_id) in target_clusters {
        if !clusters.contains_key(cluster_id.as_str()) {
            return Err(SplitError::UnknownCluster {
                target: name.clone(),
                cluster_id: cluster_id.clone(),
            });
        }
        if let Some(first) = owner.insert(cluster_id, name) {
            return Err(SplitError::DuplicateTargetCluster {
                first: first.to_string(),
                second: name.clone(),
                cluster_id: cluster_id.clone(),
            });
        }
    }
    let targets = target_clusters
        .iter()
        .map(|(name, cluster_id)| {
            let test_ids = clusters[cluster_id.as_str()].iter().map(|s| s.to_string()).collect();
            (
                name.clone(),
                TargetSplit {
                    cluster_id: cluster_id.clone(),
                    test_ids,
                    holdout_ids: Vec::new(),
                },
            )
        })
        .collect();
    let mut train_ids: Vec<String> = dataset
        .records()
        .iter()
        .filter(|r| !owner.contains_key(r.cluster_id.as_str()))
        .map(|r| r.complex_id.clone())
        .collect();
    train_ids.sort_unstable();
    Ok(SplitManifest {
        seed,
        k: 0,
        n_holdout: 0,
        targets,
        train_val: TrainVal {
            ids: train_ids,
            folds: BTreeMap::new(),
        },
        clean_excluded: Vec::new(),
    })
}

/// How the three similarity scores combine against the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanRule {
    /// Excluded only when ligand, pose and pocket similarity all reach their thresholds.
    #[default]
    JointAll,
    /// Excluded when any single similarity reaches its threshold.
    Any,
}

/// Similarity thresholds, each in [0, 1]. The defaults are placeholders and
/// not a published parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanThresholds {
    pub ligand: f64,
    pub pose: f64,
    pub pocket: f64,
}

impl Default for CleanThresholds {
    fn default() -> Self {
        Self {
            ligand: 0.9,
            pose: 0.9,
            pocket: 0.9,
        }
    }
}

impl CleanThresholds {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ligand, self.pose, self.pocket]
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        for v in self.as_array() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SplitError::InvalidParameter(format!(
                    "similarity threshold {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

impl CleanRule {
    pub fn violates(self, scores: [f64; 3], thresholds: &CleanThresholds) -> bool {
        let t = thresholds.as_array();
        let hits = scores.iter().zip(t.iter()).map(|(s, t)| s >= t);
        match self {
            CleanRule::JointAll => hits.into_iter().all(|h| h),
            CleanRule::Any => hits.into_iter().any(|h| h),
        }
    }
}

/// Remove train/validation complexes similar to any reference complex.
///
/// Records naming ids that are neither in the manifest nor in
/// `reference_ids` are skipped with a warning. Test sets are never touched.
pub fn apply_clean_filter(
    manifest: &SplitManifest,
    similarities: &[SimilarityRecord],
    reference_ids: &[String],
    thresholds: &CleanThresholds,
    rule: CleanRule,
) -> Result<SplitManifest, SplitError> {
    thresholds.validate()?;
    let reference: HashSet<&str> = reference_ids.iter().map(String::as_str).collect();
    let train: HashSet<&str> = manifest.train_val.ids.iter().map(String::as_str).collect();
    let known: HashSet<&str> = manifest
        .all_test_ids()
        .into_iter()
        .chain(train.iter().copied())
        .chain(manifest.clean_excluded.iter().map(String::as_str))
        .chain(reference.iter().copied())
        .collect();

    let mut excluded: BTreeSet<&str> = BTreeSet::new();
    let mut skipped = 0usize;
    for s in similarities {
        if !known.contains(s.id_a.as_str()) || !known.contains(s.id_b.as_str()) {
            skipped += 1;
            continue;
        }
        let candidate = match (reference.contains(s.id_a.as_str()), reference.contains(s.id_b.as_str())) {
            (true, false) => s.id_b.as_str(),
            (false, true) => s.id_a.as_str(),
            _ => continue,
        };
        if train.contains(candidate) && rule.violates(s.scores(), thresholds) {
            excluded.insert(candidate);
        }
    }
    if skipped > 0 {
        log::warn!("clean filter skipped {skipped} similarity records naming unknown complexes");
    }

    let mut out = manifest.clone();
    out.train_val.ids.retain(|id| !excluded.contains(id.as_str()));
    out.train_val.folds.retain(|id, _| !excluded.contains(id.as_str()));
    let mut all_excluded: BTreeSet<String> = manifest.clean_excluded.iter().cloned().collect();
    all_excluded.extend(excluded.iter().map(|s| s.to_string()));
    out.clean_excluded = all_excluded.into_iter().collect();
    Ok(out)
}

/// Equal-width bin index of `value` over `[lo, hi]`.
pub fn label_bin(value: f64, lo: f64, hi: f64, n_bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((value - lo) / (hi - lo) * n_bins as f64).floor();
    (b.max(0.0) as usize).min(n_bins - 1)
}

/// Assign train/validation complexes to `k` folds, stratified by pK.
///
/// Labels are binned into `n_bins` equal-width bins over the observed range.
/// Within each bin ids are shuffled and dealt round-robin; the dealing
/// position carries over between bins so overall fold sizes stay balanced.
pub fn stratified_kfold(
    manifest: &SplitManifest,
    dataset: &Dataset,
    k: usize,
    n_bins: usize,
    seed: u64,
) -> Result<SplitManifest, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    if n_bins < 2 {
        return Err(SplitError::InvalidParameter(format!(
            "n_bins must be at least 2, got {n_bins}"
        )));
    }
    let ids = &manifest.train_val.ids;
    if ids.len() < k {
        return Err(SplitError::TooFewRecords {
            needed: k,
            found: ids.len(),
        });
    }
    let labels = ids
        .iter()
        .map(|id| {
            dataset
                .get(id)
                .map(|r| r.pk())
                .ok_or_else(|| SplitError::UnknownId(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut bins: Vec<Vec<&str>> = vec![Vec::new(); n_bins];
    for (id, &y) in ids.iter().zip(&labels) {
        bins[label_bin(y, lo, hi, n_bins)].push(id);
    }

    let mut folds = BTreeMap::new();
    let mut next = 0usize;
    for (b, members) in bins.iter_mut().enumerate() {
        members.sort_unstable();
        let mut rng = seed::rng(seed::derive_indexed(seed, "stratified-bin", b));
        members.shuffle(&mut rng);
        for id in members.iter() {
            folds.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    let mut out = manifest.clone();
    out.k = k;
    out.train_val.folds = folds;
    Ok(out)
}

/// Reserve `n_holdout` complexes from every target test set, sampled
/// uniformly without replacement.
pub fn holdout_limited(
    manifest: &SplitManifest,
    n_holdout: usize,
    seed: u64,
) -> Result<SplitManifest, SplitError> {
    if n_holdout == 0 {
        return Err(SplitError::InvalidParameter("n_holdout must be positive".into()));
    }
    let mut out = manifest.clone();
    for (name, t) in out.targets.iter_mut() {
        if t.test_ids.len() <= n_holdout {
            return Err(SplitError::TestSetTooSmall {
                target: name.clone(),
                size: t.test_ids.len(),
                n_holdout,
            });
        }
        let mut rng = seed::rng(seed::derive(seed, &format!("holdout/{name}")));
        let mut picked: Vec<String> = index::sample(&mut rng, t.test_ids.len(), n_holdout)
            .into_iter()
            .map(|i| t.test_ids[i].clone())
            .collect();
        picked.sort_unstable();
        t.holdout_ids = picked;
    }
    out.n_holdout = n_holdout;
    Ok(out)
}
