//! Training regimes over a split manifest.
//!
//! * SKF: one scorer per fold, validated (and early-stopped) on its own fold.
//! * VAL: the same fold-training sets, every member early-stopped on a
//!   target's limited-data holdout.
//! * FT: the best SKF member fine-tuned on a target's holdout for a fixed
//!   number of epochs.
//!
//! Ensembles predict by averaging their members.

mod curves;

pub use curves::{track_curves, CurveRow, CurveTable};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ComplexRecord, Dataset};
use crate::scorer::{
    self, finetune_scorer, fit_with, has_features, AccessAudit, EvalSet, FitOptions, ScorerConfig,
    ScorerError, TrainedScorer,
};
use crate::seed;
use crate::split::{SplitError, SplitManifest};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("manifest has no fold assignment; run stratified k-fold first")]
    MissingFolds,
    #[error("manifest has no limited-data holdouts; run the holdout step first")]
    MissingHoldouts,
    #[error("fold {fold} has no complexes with the required embeddings ({role})")]
    EmptyFold { fold: usize, role: &'static str },
    #[error("target `{target}`: only {found} holdout complexes have embeddings, need {needed}")]
    HoldoutTooSparse {
        target: String,
        found: usize,
        needed: usize,
    },
    #[error("expected a {expected:?} ensemble, got {found:?}")]
    RegimeMismatch { expected: Regime, found: Regime },
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("ensemble members disagree on scorer kind or input dimension")]
    InconsistentMembers,
    #[error("complex `{0}` is not in the dataset")]
    UnknownId(String),
    #[error("invalid fine-tuning config: {0}")]
    InvalidFinetune(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "SKF")]
    Skf,
    #[serde(rename = "VAL")]
    Val,
    #[serde(rename = "FT")]
    Ft,
}

/// Options shared by the training regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerOptions {
    /// Score every target's reporting test set after each epoch.
    pub track_curves: bool,
    /// Minimum holdout complexes with embeddings for VAL and FT.
    pub min_holdout_embedded: usize,
    /// Train members on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        Self {
            track_curves: true,
            min_holdout_embedded: 2,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSelection {
    /// Fine-tune only the member with the highest own-fold validation score.
    #[default]
    BestValMember,
    /// Fine-tune every member and keep them all.
    AllMembers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub finetune_epochs: usize,
    /// Defaults to a tenth of the base learning rate.
    pub finetune_learning_rate: Option<f64>,
    pub source_selection: SourceSelection,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            finetune_epochs: 25,
            finetune_learning_rate: None,
            source_selection: SourceSelection::BestValMember,
        }
    }
}

impl FinetuneConfig {
    pub fn learning_rate(&self, base: &ScorerConfig) -> f64 {
        self.finetune_learning_rate.unwrap_or(base.learning_rate * 0.1)
    }
}

/// Which source members an FT ensemble came from and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneProvenance {
    pub target: String,
    pub source_members: Vec<usize>,
    /// Own-fold validation score of every source member at its best epoch.
    pub member_scores: Vec<Option<f64>>,
    pub selection: SourceSelection,
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub members: Vec<TrainedScorer>,
    pub regime: Regime,
    pub manifest_ref: String,
    /// The target whose holdout drove VAL early stopping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune: Option<FinetuneProvenance>,
}

impl TrainedEnsemble {
    pub fn validate(&self) -> Result<(), TrainError> {
        let first = self.members.first().ok_or(TrainError::EmptyEnsemble)?;
        if self.members.iter().any(|m| {
            m.config.scorer_kind != first.config.scorer_kind || m.input_dimension != first.input_dimension
        }) {
            return Err(TrainError::InconsistentMembers);
        }
        Ok(())
    }

    /// Mean selected epoch over members.
    pub fn mean_best_epoch(&self) -> f64 {
        self.members.iter().map(|m| m.best_epoch as f64).sum::<f64>() / self.members.len() as f64
    }
}

/// A trained ensemble together with the ids every member touched.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub ensemble: TrainedEnsemble,
    pub audits: Vec<AccessAudit>,
}

impl TrainingRun {
    pub fn merged_audit(&self) -> AccessAudit {
        let mut all = AccessAudit::default();
        for a in &self.audits {
            all.merge(a);
        }
        all
    }
}

/// Stable 64-bit FNV-1a digest of the manifest JSON, as hex.
pub fn manifest_ref(manifest: &SplitManifest) -> String {
    let h = manifest
        .to_json()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    format!("{h:016x}")
}

fn resolve<'a, S: AsRef<str>>(dataset: &'a Dataset, ids: &[S]) -> Result<Vec<&'a ComplexRecord>, TrainError> {
    dataset.select(ids).map_err(TrainError::UnknownId)
}

fn with_features<'a>(records: Vec<&'a ComplexRecord>, config: &ScorerConfig) -> Vec<&'a ComplexRecord> {
    records
        .into_iter()
        .filter(|r| has_features(r, config.scorer_kind))
        .collect()
}

fn eval_sets<'a>(
    dataset: &'a Dataset,
    manifest: &SplitManifest,
    config: &ScorerConfig,
    opts: &TrainerOptions,
) -> Result<Vec<EvalSet<'a>>, TrainError> {
    if !opts.track_curves {
        return Ok(Vec::new());
    }
    manifest
        .targets
        .iter()
        .map(|(name, t)| {
            let records = with_features(resolve(dataset, &t.reporting_ids())?, config);
            Ok(EvalSet {
                name: name.clone(),
                records,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()
        .map(|sets| sets.into_iter().filter(|s| s.records.len() >= 2).collect())
}

fn member_config(config: &ScorerConfig, member: usize) -> ScorerConfig {
    ScorerConfig {
        seed: seed::derive_indexed(config.seed, "member", member),
        ..config.clone()
    }
}

struct MemberJob<'a> {
    train: Vec<&'a ComplexRecord>,
    validation: Vec<&'a ComplexRecord>,
    config: ScorerConfig,
}

fn run_jobs<'a>(
    jobs: Vec<MemberJob<'a>>,
    evals: &[EvalSet<'a>],
    parallel: bool,
) -> Result<(Vec<TrainedScorer>, Vec<AccessAudit>), TrainError> {
    let run = |job: &MemberJob<'a>| -> Result<(TrainedScorer, AccessAudit), TrainError> {
        let mut audit = AccessAudit::default();
        let opts = FitOptions {
            eval_sets: evals.to_vec(),
            init: None,
        };
        let model = fit_with(&job.train, &job.validation, &job.config, &opts, &mut audit)?;
        Ok((model, audit))
    };
    let results: Vec<Result<(TrainedScorer, AccessAudit), TrainError>> = if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let mut members = Vec::with_capacity(results.len());
    let mut audits = Vec::with_capacity(results.len());
    for r in results {
        let (m, a) = r?;
        members.push(m);
        audits.push(a);
    }
    Ok((members, audits))
}

/// Training sets per member: fold-complements for k >= 2, or the whole
/// train/validation pool for a single-fold manifest.
fn member_training_sets<'a>(
    dataset: &'a Dataset,
    manifest: &SplitManifest,
    config: &ScorerConfig,
) -> Result<Vec<Vec<&'a ComplexRecord>>, TrainError> {
    if manifest.k <= 1 {
        let all = with_features(resolve(dataset, &manifest.train_val.ids)?, config);
        if all.is_empty() {
            return Err(TrainError::EmptyFold { fold: 0, role: "training" });
        }
        return Ok(vec![all]);
    }
    if !manifest.has_folds() {
        return Err(TrainError::MissingFolds);
    }
    (0..manifest.k)
        .map(|fold| {
            let train = with_features(resolve(dataset, &manifest.ids_outside_fold(fold))?, config);
            if train.is_empty() {
                return Err(TrainError::EmptyFold { fold, role: "training" });
            }
            Ok(train)
        })
        .collect()
}

/// Stratified k-fold training: member `i` validates on fold `i` and trains on
/// the others.
pub fn cross_validate(
    dataset: &Dataset,
    manifest: &SplitManifest,
    config: &ScorerConfig,
    opts: &TrainerOptions,
) -> Result<TrainingRun, TrainError> {
    config.validate()?;
    if !manifest.has_folds() || manifest.k < 2 {
        return Err(TrainError::MissingFolds);
    }
    let trains = member_training_sets(dataset, manifest, config)?;
    let jobs = trains
        .into_iter()
        .enumerate()
        .map(|(fold, train)| {
            let validation = with_features(resolve(dataset, &manifest.fold_ids(fold))?, config);
            if validation.is_empty() {
                return Err(TrainError::EmptyFold { fold, role: "validation" });
            }
            Ok(MemberJob {
                train,
                validation,
                config: member_config(config, fold),
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let evals = eval_sets(dataset, manifest, config, opts)?;
    let (members, audits) = run_jobs(jobs, &evals, opts.parallel)?;
    Ok(TrainingRun {
        ensemble: TrainedEnsemble {
            members,
            regime: Regime::Skf,
            manifest_ref: manifest_ref(manifest),
            validation_target: None,
            finetune: None,
        },
        audits,
    })
}

fn holdout_records<'a>(
    dataset: &'a Dataset,
    manifest: &SplitManifest,
    target: &str,
    config: &ScorerConfig,
    opts: &TrainerOptions,
) -> Result<Vec<&'a ComplexRecord>, TrainError> {
    if !manifest.has_holdouts() {
        return Err(TrainError::MissingHoldouts);
    }
    let split = manifest.target(target)?;
    let records = with_features(resolve(dataset, &split.holdout_ids)?, config);
    if records.len() < opts.min_holdout_embedded {
        return Err(TrainError::HoldoutTooSparse {
            target: target.to_string(),
            found: records.len(),
            needed: opts.min_holdout_embedded,
        });
    }
    Ok(records)
}

/// Train on the SKF fold-training sets, early-stopping every member on the
/// holdout of `target`.
pub fn train_with_target_validation(
    dataset: &Dataset,
    manifest: &SplitManifest,
    target: &str,
    config: &ScorerConfig,
    opts: &TrainerOptions,
) -> Result<TrainingRun, TrainError> {
    config.validate()?;
    let holdout = holdout_records(dataset, manifest, target, config, opts)?;
    let trains = member_training_sets(dataset, manifest, config)?;
    let jobs = trains
        .into_iter()
        .enumerate()
        .map(|(i, train)| MemberJob {
            train,
            validation: holdout.clone(),
            config: member_config(config, i),
        })
        .collect();
    let evals = eval_sets(dataset, manifest, config, opts)?;
    let (members, audits) = run_jobs(jobs, &evals, opts.parallel)?;
    Ok(TrainingRun {
        ensemble: TrainedEnsemble {
            members,
            regime: Regime::Val,
            manifest_ref: manifest_ref(manifest),
            validation_target: Some(target.to_string()),
            finetune: None,
        },
        audits,
    })
}

/// Fine-tune SKF members on the holdout of `target`.
pub fn finetune(
    ensemble: &TrainedEnsemble,
    dataset: &Dataset,
    manifest: &SplitManifest,
    target: &str,
    ft: &FinetuneConfig,
    opts: &TrainerOptions,
) -> Result<TrainingRun, TrainError> {
    if ensemble.regime != Regime::Skf {
        return Err(TrainError::RegimeMismatch {
            expected: Regime::Skf,
            found: ensemble.regime,
        });
    }
    ensemble.validate()?;
    if ft.finetune_epochs == 0 {
        return Err(TrainError::InvalidFinetune("finetune_epochs must be at least 1".into()));
    }
    let base = &ensemble.members[0].config;
    let lr = ft.learning_rate(base);
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(TrainError::InvalidFinetune(format!("learning rate {lr} must be >= 0")));
    }
    let holdout = holdout_records(dataset, manifest, target, base, opts)?;
    let member_scores: Vec<Option<f64>> = ensemble
        .members
        .iter()
        .map(TrainedScorer::best_validation_score)
        .collect();
    let sources: Vec<usize> = match ft.source_selection {
        SourceSelection::AllMembers => (0..ensemble.members.len()).collect(),
        SourceSelection::BestValMember => {
            let mut best = 0;
            for (i, s) in member_scores.iter().enumerate() {
                let cur = s.unwrap_or(f64::NEG_INFINITY);
                if cur > member_scores[best].unwrap_or(f64::NEG_INFINITY) {
                    best = i;
                }
            }
            vec![best]
        }
    };
    let mut members = Vec::with_capacity(sources.len());
    let mut audits = Vec::with_capacity(sources.len());
    for &i in &sources {
        let mut audit = AccessAudit::default();
        let src = &ensemble.members[i];
        let s = seed::derive_indexed(src.config.seed, &format!("finetune/{target}"), i);
        members.push(finetune_scorer(src, &holdout, ft.finetune_epochs, lr, s, &mut audit)?);
        audits.push(audit);
    }
    Ok(TrainingRun {
        ensemble: TrainedEnsemble {
            members,
            regime: Regime::Ft,
            manifest_ref: manifest_ref(manifest),
            validation_target: None,
            finetune: Some(FinetuneProvenance {
                target: target.to_string(),
                source_members: sources,
                member_scores,
                selection: ft.source_selection,
                learning_rate: lr,
                epochs: ft.finetune_epochs,
            }),
        },
        audits,
    })
}

/// Arithmetic mean of member predictions per complex.
pub fn ensemble_predict(
    ensemble: &TrainedEnsemble,
    records: &[&ComplexRecord],
) -> Result<BTreeMap<String, f64>, TrainError> {
    ensemble.validate()?;
    let n = ensemble.members.len() as f64;
    let per_member = ensemble
        .members
        .iter()
        .map(|m| scorer::predict(m, records))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = BTreeMap::new();
    for r in records {
        let id = &r.complex_id;
        let sum: f64 = per_member.iter().map(|p| p[id]).sum();
        out.insert(id.clone(), sum / n);
    }
    Ok(out)
}

/// Predictions over every target's reporting test set, keyed by target.
pub fn predict_targets(
    ensemble: &TrainedEnsemble,
    dataset: &Dataset,
    manifest: &SplitManifest,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>, TrainError> {
    manifest
        .targets
        .iter()
        .map(|(name, t)| {
            let records = resolve(dataset, &t.reporting_ids())?;
            Ok((name.clone(), ensemble_predict(ensemble, &records)?))
        })
        .collect()
}

/// Ids of every target test set, holdouts included.
pub fn protected_ids(manifest: &SplitManifest) -> BTreeSet<String> {
    manifest.all_test_ids().into_iter().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{Activation, Mlp, SelectionMetric, Standardizer};
    use crate::split::{build_ood_split, holdout_limited, stratified_kfold};
    use crate::synthetic::{generate, GeneratorSpec, LabelModel};

    fn small_config() -> ScorerConfig {
        ScorerConfig {
            hidden_sizes: vec![8],
            max_epochs: 15,
            patience: 5,
            batch_size: 16,
            seed: 4,
            ..ScorerConfig::default()
        }
    }

    fn fixture() -> (Dataset, SplitManifest) {
        let spec = GeneratorSpec {
            n_clusters: 5,
            cluster_sizes: vec![20, 20, 30, 30, 30],
            embedding_dim: 4,
            label_model: LabelModel::PerClusterShift,
            ood_shift_magnitude: 1.0,
            seed: 8,
            ..GeneratorSpec::default()
        };
        let (ds, truth) = generate(&spec).unwrap();
        let m = build_ood_split(&ds, &truth.target_clusters(), 1).unwrap();
        let m = stratified_kfold(&m, &ds, 3, 4, 1).unwrap();
        let m = holdout_limited(&m, 5, 1).unwrap();
        (ds, m)
    }

    fn constant_member(value: f64) -> TrainedScorer {
        let mut rng = seed::rng(0);
        let mut network = Mlp::init(4, &[3], Activation::Relu, &mut rng);
        let zeros = vec![0.0; network.n_params()];
        network.set_params(&zeros);
        *network.output_bias_mut() = value;
        TrainedScorer {
            config: ScorerConfig::default(),
            input_dimension: 4,
            standardizer: Standardizer::identity(4),
            network,
            training_history: Vec::new(),
            best_epoch: 0,
            selection: SelectionMetric::Pearson,
        }
    }

    fn ensemble(members: Vec<TrainedScorer>) -> TrainedEnsemble {
        TrainedEnsemble {
            members,
            regime: Regime::Skf,
            manifest_ref: String::new(),
            validation_target: None,
            finetune: None,
        }
    }

    #[test]
    fn skf_members_validate_on_their_fold() {
        let (ds, m) = fixture();
        let run = cross_validate(&ds, &m, &small_config(), &TrainerOptions::default()).unwrap();
        assert_eq!(run.ensemble.members.len(), 3);
        let protected = protected_ids(&m);
        for (fold, audit) in run.audits.iter().enumerate() {
            let own: BTreeSet<String> = m.fold_ids(fold).into_iter().map(String::from).collect();
            assert_eq!(audit.validation_ids, own);
            assert!(audit.gradient_ids.is_disjoint(&own));
            assert!(audit.gradient_ids.is_disjoint(&protected));
            assert_eq!(audit.gradient_ids.len() + own.len(), m.train_val.ids.len());
        }
        let again = cross_validate(&ds, &m, &small_config(), &TrainerOptions::default()).unwrap();
        assert_eq!(again.ensemble, run.ensemble);
        let serial = TrainerOptions {
            parallel: false,
            ..TrainerOptions::default()
        };
        assert_eq!(cross_validate(&ds, &m, &small_config(), &serial).unwrap().ensemble, run.ensemble);
    }

    #[test]
    fn two_fold_minimal_case() {
        let (ds, m) = fixture();
        let mut tiny = m.clone();
        let ids: Vec<String> = m.train_val.ids.iter().take(4).cloned().collect();
        tiny.k = 2;
        tiny.train_val.ids = ids.clone();
        tiny.train_val.folds = ids.iter().enumerate().map(|(i, id)| (id.clone(), i / 2)).collect();
        let opts = TrainerOptions {
            track_curves: false,
            ..TrainerOptions::default()
        };
        let run = cross_validate(&ds, &tiny, &small_config(), &opts).unwrap();
        let set = |s: &[String]| s.iter().cloned().collect::<BTreeSet<_>>();
        assert_eq!(run.audits[0].gradient_ids, set(&ids[2..]));
        assert_eq!(run.audits[1].gradient_ids, set(&ids[..2]));
    }

    #[test]
    fn skf_needs_folds() {
        let (ds, mut m) = fixture();
        m.k = 0;
        m.train_val.folds.clear();
        assert!(matches!(
            cross_validate(&ds, &m, &small_config(), &TrainerOptions::default()),
            Err(TrainError::MissingFolds)
        ));
    }

    #[test]
    fn val_touches_holdout_only_for_validation() {
        let (ds, m) = fixture();
        let target = m.targets.keys().next().unwrap().clone();
        let run = train_with_target_validation(&ds, &m, &target, &small_config(), &TrainerOptions::default()).unwrap();
        let holdout: BTreeSet<String> = m.targets[&target].holdout_ids.iter().cloned().collect();
        let audit = run.merged_audit();
        assert_eq!(audit.validation_ids, holdout);
        assert!(audit.gradient_ids.is_disjoint(&protected_ids(&m)));
        assert_eq!(run.ensemble.members.len(), 3);
        assert_eq!(run.ensemble.validation_target.as_deref(), Some(target.as_str()));

        let skf = cross_validate(&ds, &m, &small_config(), &TrainerOptions::default()).unwrap();
        for (a, b) in skf.audits.iter().zip(&run.audits) {
            assert_eq!(a.gradient_ids, b.gradient_ids);
        }
    }

    #[test]
    fn val_single_member_without_folds() {
        let (ds, mut m) = fixture();
        m.k = 1;
        m.train_val.folds.clear();
        let target = m.targets.keys().next().unwrap().clone();
        let run = train_with_target_validation(&ds, &m, &target, &small_config(), &TrainerOptions::default()).unwrap();
        assert_eq!(run.ensemble.members.len(), 1);
        assert_eq!(run.audits[0].gradient_ids.len(), m.train_val.ids.len());
    }

    #[test]
    fn val_requires_holdout() {
        let (ds, mut m) = fixture();
        let target = m.targets.keys().next().unwrap().clone();
        let opts = TrainerOptions {
            min_holdout_embedded: 6,
            ..TrainerOptions::default()
        };
        assert!(matches!(
            train_with_target_validation(&ds, &m, &target, &small_config(), &opts),
            Err(TrainError::HoldoutTooSparse { found: 5, needed: 6, .. })
        ));
        m.n_holdout = 0;
        m.targets.values_mut().for_each(|t| t.holdout_ids.clear());
        assert!(matches!(
            train_with_target_validation(&ds, &m, &target, &small_config(), &TrainerOptions::default()),
            Err(TrainError::MissingHoldouts)
        ));
    }

    #[test]
    fn finetune_contract() {
        let (ds, m) = fixture();
        let target = m.targets.keys().next().unwrap().clone();
        let opts = TrainerOptions::default();
        let skf = cross_validate(&ds, &m, &small_config(), &opts).unwrap().ensemble;
        let ft = finetune(&skf, &ds, &m, &target, &FinetuneConfig::default(), &opts).unwrap();
        let holdout: BTreeSet<String> = m.targets[&target].holdout_ids.iter().cloned().collect();
        assert_eq!(ft.merged_audit().gradient_ids, holdout);
        assert_eq!(ft.ensemble.regime, Regime::Ft);
        assert_eq!(ft.ensemble.members.len(), 1);
        let prov = ft.ensemble.finetune.as_ref().unwrap();
        let best = skf
            .members
            .iter()
            .map(|m| m.best_validation_score().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(skf.members[prov.source_members[0]].best_validation_score(), Some(best));
        assert!((prov.learning_rate - 1e-4).abs() < 1e-18);
        assert_eq!(ft.ensemble.members[0].training_history.len(), 25);

        let frozen = FinetuneConfig {
            finetune_learning_rate: Some(0.0),
            ..FinetuneConfig::default()
        };
        let ft0 = finetune(&skf, &ds, &m, &target, &frozen, &opts).unwrap().ensemble;
        assert_eq!(ft0.members[0].network, skf.members[prov.source_members[0]].network);

        let all = FinetuneConfig {
            source_selection: SourceSelection::AllMembers,
            ..FinetuneConfig::default()
        };
        assert_eq!(finetune(&skf, &ds, &m, &target, &all, &opts).unwrap().ensemble.members.len(), 3);

        let zero = FinetuneConfig {
            finetune_epochs: 0,
            ..FinetuneConfig::default()
        };
        assert!(finetune(&skf, &ds, &m, &target, &zero, &opts).is_err());
        assert!(matches!(
            finetune(&ft.ensemble, &ds, &m, &target, &FinetuneConfig::default(), &opts),
            Err(TrainError::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn ensemble_mean() {
        let (ds, _) = fixture();
        let recs: Vec<&ComplexRecord> = ds.records().iter().take(3).collect();
        let two = ensemble(vec![constant_member(5.0), constant_member(7.0)]);
        assert!(ensemble_predict(&two, &recs).unwrap().values().all(|&p| p == 6.0));
        let one = ensemble(vec![constant_member(5.5)]);
        assert!(ensemble_predict(&one, &recs).unwrap().values().all(|&p| p == 5.5));
        assert!(matches!(ensemble_predict(&ensemble(vec![]), &recs), Err(TrainError::EmptyEnsemble)));
    }

    fn history_member(epochs: usize, values: impl Fn(usize) -> Option<f64>) -> TrainedScorer {
        let mut m = constant_member(0.0);
        m.config.max_epochs = 100;
        m.training_history = (1..=epochs)
            .map(|e| crate::scorer::EpochRecord {
                epoch: e,
                train_loss: 1.0,
                val_pearson: None,
                val_rmse: None,
                eval_pearson: [("t".to_string(), values(e))].into_iter().collect(),
            })
            .collect();
        m
    }

    #[test]
    fn curves_truncate_and_aggregate() {
        let ens = ensemble(vec![history_member(10, |e| Some(e as f64 / 10.0))]);
        let table = track_curves(&ens, None);
        assert_eq!(table.rows.len(), 10);
        assert_eq!(table.rows.last().unwrap().epoch_pct, 10.0);
        assert!(table.rows.iter().all(|r| r.std_pearson == 0.0 && r.n_members == 1));

        let ens = ensemble(vec![
            history_member(4, |e| Some(0.1 * e as f64)),
            history_member(2, |_| Some(0.5)),
            history_member(3, |e| (e != 2).then_some(0.3)),
        ]);
        let rows = track_curves(&ens, None).rows;
        let n: Vec<usize> = rows.iter().map(|r| r.n_members).collect();
        assert_eq!(n, vec![3, 2, 2, 1]);
        let e2 = [0.2f64, 0.5];
        let mean = (e2[0] + e2[1]) / 2.0;
        let sd = ((e2[0] - mean).powi(2) + (e2[1] - mean).powi(2)).sqrt();
        assert!((rows[1].mean_pearson - mean).abs() < 1e-12);
        assert!((rows[1].std_pearson - sd).abs() < 1e-12);

        let mut buf = Vec::new();
        CurveTable { rows }.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eval_set,epoch_pct,n_members,mean_pearson,std_pearson\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn manifest_ref_is_stable() {
        let (_, m) = fixture();
        assert_eq!(manifest_ref(&m), manifest_ref(&m.clone()));
        let mut other = m.clone();
        other.seed += 1;
        assert_ne!(manifest_ref(&m), manifest_ref(&other));
    }
}
