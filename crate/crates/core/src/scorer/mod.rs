//! Trainable scoring functions over precomputed embeddings.
//!
//! Two scorer kinds share one feed-forward regressor:
//!
//! * [`ScorerKind::EmbeddingMlp`] reads the interaction embedding alone.
//! * [`ScorerKind::Fusion`] reads the ligand embedding followed by the
//!   interaction embedding.
//!
//! Training minimizes mean-squared error on pK with Adam. After every epoch
//! the validation set is scored; the parameters of the best epoch are kept
//! and training stops once `patience` epochs pass without improvement.
//! Features are z-scored with statistics from the training set only.

mod mlp;
mod model_file;

pub use mlp::{Dense, Mlp};
pub use model_file::{load_scorer, read_scorer, save_scorer, write_predictions_csv, write_scorer};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ComplexRecord;
use crate::metrics::{pearson, rmse};
use crate::seed;
use mlp::Adam;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("complex `{id}` lacks the {which} embedding required by the {kind:?} scorer")]
    MissingEmbedding {
        id: String,
        which: &'static str,
        kind: ScorerKind,
    },
    #[error("complex `{id}`: feature dimension {found} does not match model input {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("invalid scorer config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set needs at least 2 complexes, got {0}")]
    ValidationTooSmall(usize),
    #[error("non-finite training loss at epoch {epoch} (last finite loss {last_finite:?})")]
    NonFiniteLoss { epoch: usize, last_finite: Option<f64> },
    #[error("non-finite prediction for `{0}`")]
    NonFinitePrediction(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    EmbeddingMlp,
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub scorer_kind: ScorerKind,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            scorer_kind: ScorerKind::EmbeddingMlp,
            hidden_sizes: vec![64, 32],
            activation: Activation::Relu,
            dropout_rate: 0.1,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::InvalidConfig(m.to_string()));
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        Ok(())
    }
}

/// Feature vector for one record: the interaction embedding, or ligand then
/// interaction embedding for fusion.
pub fn build_features(record: &ComplexRecord, kind: ScorerKind) -> Result<Vec<f64>, ScorerError> {
    let missing = |which| ScorerError::MissingEmbedding {
        id: record.complex_id.clone(),
        which,
        kind,
    };
    let interaction = record
        .interaction_embedding
        .as_ref()
        .ok_or_else(|| missing("interaction"))?;
    match kind {
        ScorerKind::EmbeddingMlp => Ok(interaction.values().to_vec()),
        ScorerKind::Fusion => {
            let ligand = record.ligand_embedding.as_ref().ok_or_else(|| missing("ligand"))?;
            let mut out = Vec::with_capacity(ligand.dimension() + interaction.dimension());
            out.extend_from_slice(ligand.values());
            out.extend_from_slice(interaction.values());
            Ok(out)
        }
    }
}

/// Whether `record` carries every embedding `kind` needs.
pub fn has_features(record: &ComplexRecord, kind: ScorerKind) -> bool {
    record.interaction_embedding.is_some()
        && (kind == ScorerKind::EmbeddingMlp || record.ligand_embedding.is_some())
}

/// Per-dimension z-scoring. Constant dimensions get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// One row of a training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_pearson: Option<f64>,
    pub val_rmse: Option<f64>,
    /// Pearson on tracked evaluation sets; `None` where undefined.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub eval_pearson: BTreeMap<String, Option<f64>>,
}

/// Which validation quantity drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Maximize validation Pearson.
    Pearson,
    /// Minimize validation RMSE; used when validation labels are constant.
    Rmse,
    /// Fixed number of epochs, final parameters kept (fine-tuning).
    FixedEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorer {
    pub config: ScorerConfig,
    pub input_dimension: usize,
    pub standardizer: Standardizer,
    pub network: Mlp,
    pub training_history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub selection: SelectionMetric,
}

impl TrainedScorer {
    fn features(&self, record: &ComplexRecord) -> Result<Vec<f64>, ScorerError> {
        let raw = build_features(record, self.config.scorer_kind)?;
        if raw.len() != self.input_dimension {
            return Err(ScorerError::DimensionMismatch {
                id: record.complex_id.clone(),
                expected: self.input_dimension,
                found: raw.len(),
            });
        }
        Ok(self.standardizer.apply(&raw))
    }

    pub fn predict_record(&self, record: &ComplexRecord) -> Result<f64, ScorerError> {
        let p = self.network.predict_one(&self.features(record)?);
        if !p.is_finite() {
            return Err(ScorerError::NonFinitePrediction(record.complex_id.clone()));
        }
        Ok(p)
    }

    /// The history row of the selected epoch.
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.training_history.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// Validation score of the selected epoch, higher is better
    /// (Pearson, or negated RMSE in RMSE mode).
    pub fn best_validation_score(&self) -> Option<f64> {
        let r = self.best_record()?;
        match self.selection {
            SelectionMetric::Pearson => r.val_pearson,
            SelectionMetric::Rmse => r.val_rmse.map(|v| -v),
            SelectionMetric::FixedEpochs => None,
        }
    }

    pub fn last_epoch(&self) -> usize {
        self.training_history.last().map_or(0, |r| r.epoch)
    }
}

/// Predict pK for each record, keyed by complex id.
pub fn predict(model: &TrainedScorer, records: &[&ComplexRecord]) -> Result<BTreeMap<String, f64>, ScorerError> {
    records
        .iter()
        .map(|r| Ok((r.complex_id.clone(), model.predict_record(r)?)))
        .collect()
}

/// Every complex id a training run touched, by role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessAudit {
    pub gradient_ids: BTreeSet<String>,
    pub validation_ids: BTreeSet<String>,
    pub eval_ids: BTreeSet<String>,
}

impl AccessAudit {
    pub fn merge(&mut self, other: &AccessAudit) {
        self.gradient_ids.extend(other.gradient_ids.iter().cloned());
        self.validation_ids.extend(other.validation_ids.iter().cloned());
        self.eval_ids.extend(other.eval_ids.iter().cloned());
    }
}

/// A named set of records scored after every epoch for training curves.
#[derive(Debug, Clone)]
pub struct EvalSet<'a> {
    pub name: String,
    pub records: Vec<&'a ComplexRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions<'a> {
    pub eval_sets: Vec<EvalSet<'a>>,
    /// Start from this network instead of a fresh initialization.
    pub init: Option<Mlp>,
}

struct Prepared {
    ids: Vec<String>,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

fn prepare(
    records: &[&ComplexRecord],
    kind: ScorerKind,
    standardizer: &Standardizer,
) -> Result<Prepared, ScorerError> {
    let mut p = Prepared {
        ids: Vec::with_capacity(records.len()),
        xs: Vec::with_capacity(records.len()),
        ys: Vec::with_capacity(records.len()),
    };
    for r in records {
        let raw = build_features(r, kind)?;
        if raw.len() != standardizer.mean.len() {
            return Err(ScorerError::DimensionMismatch {
                id: r.complex_id.clone(),
                expected: standardizer.mean.len(),
                found: raw.len(),
            });
        }
        p.ids.push(r.complex_id.clone());
        p.xs.push(standardizer.apply(&raw));
        p.ys.push(r.pk());
    }
    Ok(p)
}

fn score_set(net: &Mlp, set: &Prepared) -> (Option<f64>, Option<f64>) {
    let preds: Vec<f64> = set.xs.iter().map(|x| net.predict_one(x)).collect();
    (pearson(&preds, &set.ys).ok(), rmse(&preds, &set.ys).ok())
}

/// Runs epochs of minibatch Adam over a prepared training set.
struct EpochRunner {
    train: Prepared,
    order: Vec<usize>,
    opt: Adam,
    rng: rand_chacha::ChaCha8Rng,
    dropout: f64,
    batch_size: usize,
}

impl EpochRunner {
    fn new(train: Prepared, n_params: usize, config: &ScorerConfig, lr: f64, seed: u64) -> Self {
        let order = (0..train.xs.len()).collect();
        Self {
            train,
            order,
            opt: Adam::new(n_params, lr),
            rng: seed::rng(seed),
            dropout: config.dropout_rate,
            batch_size: config.batch_size,
        }
    }

    /// One pass over the shuffled training set. Returns the sample-weighted
    /// mean training loss.
    fn run(&mut self, net: &mut Mlp) -> f64 {
        self.order.shuffle(&mut self.rng);
        let mut ws = net.workspace();
        let mut grad = vec![0.0; net.n_params()];
        let mut params = net.params();
        let mut total = 0.0;
        let n = self.order.len();
        for chunk in self.order.chunks(self.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let b = chunk.len() as f64;
            for &i in chunk {
                let p = net.forward_train(&self.train.xs[i], &mut ws, Some((self.dropout, &mut self.rng)));
                let r = p - self.train.ys[i];
                total += r * r;
                net.backward(2.0 * r / b, &mut ws, &mut grad);
            }
            self.opt.step(&mut params, &grad);
            net.set_params(&params);
        }
        total / n as f64
    }
}

fn eval_row(
    net: &Mlp,
    epoch: usize,
    train_loss: f64,
    validation: Option<&Prepared>,
    evals: &[(String, Prepared)],
) -> EpochRecord {
    let (val_pearson, val_rmse) = validation.map_or((None, None), |v| score_set(net, v));
    EpochRecord {
        epoch,
        train_loss,
        val_pearson,
        val_rmse,
        eval_pearson: evals
            .iter()
            .map(|(name, set)| (name.clone(), score_set(net, set).0))
            .collect(),
    }
}

fn prepare_evals(
    opts: &FitOptions<'_>,
    kind: ScorerKind,
    standardizer: &Standardizer,
    audit: &mut AccessAudit,
) -> Result<Vec<(String, Prepared)>, ScorerError> {
    opts.eval_sets
        .iter()
        .map(|s| {
            audit.eval_ids.extend(s.records.iter().map(|r| r.complex_id.clone()));
            Ok((s.name.clone(), prepare(&s.records, kind, standardizer)?))
        })
        .collect()
}

/// Train with early stopping on `validation`.
pub fn fit(
    train: &[&ComplexRecord],
    validation: &[&ComplexRecord],
    config: &ScorerConfig,
) -> Result<TrainedScorer, ScorerError> {
    fit_with(train, validation, config, &FitOptions::default(), &mut AccessAudit::default())
}

/// [`fit`] with evaluation sets, an optional initial network and an access
/// audit recording which ids contributed gradients.
pub fn fit_with(
    train: &[&ComplexRecord],
    validation: &[&ComplexRecord],
    config: &ScorerConfig,
    opts: &FitOptions<'_>,
    audit: &mut AccessAudit,
) -> Result<TrainedScorer, ScorerError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ScorerError::EmptyTrainingSet);
    }
    if validation.len() < 2 {
        return Err(ScorerError::ValidationTooSmall(validation.len()));
    }
    let kind = config.scorer_kind;
    let raw_train = train
        .iter()
        .map(|r| build_features(r, kind))
        .collect::<Result<Vec<_>, _>>()?;
    let input_dimension = raw_train[0].len();
    if let Some((r, f)) = train.iter().zip(&raw_train).find(|(_, f)| f.len() != input_dimension) {
        return Err(ScorerError::DimensionMismatch {
            id: r.complex_id.clone(),
            expected: input_dimension,
            found: f.len(),
        });
    }
    let standardizer = Standardizer::fit(&raw_train);
    let train_set = prepare(train, kind, &standardizer)?;
    let val_set = prepare(validation, kind, &standardizer)?;
    let evals = prepare_evals(opts, kind, &standardizer, audit)?;
    audit.gradient_ids.extend(train_set.ids.iter().cloned());
    audit.validation_ids.extend(val_set.ids.iter().cloned());

    let mut net = match &opts.init {
        Some(init) => {
            if init.input_dim() != input_dimension {
                return Err(ScorerError::InvalidConfig(format!(
                    "initial network expects {} inputs, features have {input_dimension}",
                    init.input_dim()
                )));
            }
            init.clone()
        }
        None => {
            let mut rng = seed::rng(seed::derive(config.seed, "init"));
            let mut net = Mlp::init(input_dimension, &config.hidden_sizes, config.activation, &mut rng);
            *net.output_bias_mut() = train_set.ys.iter().sum::<f64>() / train_set.ys.len() as f64;
            net
        }
    };

    let constant_labels = val_set.ys.iter().all(|&y| y == val_set.ys[0]);
    let selection = if constant_labels {
        SelectionMetric::Rmse
    } else {
        SelectionMetric::Pearson
    };
    let score_of = |row: &EpochRecord| -> f64 {
        match selection {
            SelectionMetric::Rmse => row.val_rmse.map_or(f64::NEG_INFINITY, |v| -v),
            _ => row.val_pearson.unwrap_or(f64::NEG_INFINITY),
        }
    };

    let mut runner = EpochRunner::new(
        train_set,
        net.n_params(),
        config,
        config.learning_rate,
        seed::derive(config.seed, "epochs"),
    );
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Mlp)> = None;
    let mut last_finite = None;
    for epoch in 1..=config.max_epochs {
        let loss = runner.run(&mut net);
        if !loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(ScorerError::NonFiniteLoss { epoch, last_finite });
        }
        last_finite = Some(loss);
        let row = eval_row(&net, epoch, loss, Some(&val_set), &evals);
        let score = score_of(&row);
        history.push(row);
        match &best {
            Some((_, s, _)) if score <= *s => {}
            _ => best = Some((epoch, score, net.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_epoch, _, network) = best.expect("at least one epoch runs");
    Ok(TrainedScorer {
        config: config.clone(),
        input_dimension,
        standardizer,
        network,
        training_history: history,
        best_epoch,
        selection,
    })
}

/// Continue training `model` on `records` for exactly `epochs` epochs at
/// `learning_rate`, keeping the model's standardization. No early stopping.
pub fn finetune_scorer(
    model: &TrainedScorer,
    records: &[&ComplexRecord],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    audit: &mut AccessAudit,
) -> Result<TrainedScorer, ScorerError> {
    if epochs == 0 {
        return Err(ScorerError::InvalidConfig("fine-tuning needs at least one epoch".into()));
    }
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(ScorerError::InvalidConfig("fine-tuning learning rate must be >= 0".into()));
    }
    if records.is_empty() {
        return Err(ScorerError::EmptyTrainingSet);
    }
    let kind = model.config.scorer_kind;
    let train_set = prepare(records, kind, &model.standardizer)?;
    audit.gradient_ids.extend(train_set.ids.iter().cloned());
    let mut net = model.network.clone();
    let mut runner = EpochRunner::new(train_set, net.n_params(), &model.config, learning_rate, seed);
    let mut history = Vec::with_capacity(epochs);
    let mut last_finite = None;
    for epoch in 1..=epochs {
        let loss = runner.run(&mut net);
        if !loss.is_finite() {
            return Err(ScorerError::NonFiniteLoss { epoch, last_finite });
        }
        last_finite = Some(loss);
        history.push(eval_row(&net, epoch, loss, None, &[]));
    }
    Ok(TrainedScorer {
        config: model.config.clone(),
        input_dimension: model.input_dimension,
        standardizer: model.standardizer.clone(),
        network: net,
        training_history: history,
        best_epoch: epochs,
        selection: SelectionMetric::FixedEpochs,
    })
}
