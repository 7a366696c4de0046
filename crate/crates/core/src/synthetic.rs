//! Seeded synthetic datasets with known label laws.
//!
//! Every label model is linear in the interaction embedding with a
//! per-cluster weight vector, `pk = w_c . e + b + noise`, so the optimal
//! predictor and its Pearson correlation on any cluster have closed forms.
//!
//! * `global_linear`: `w_c = w` everywhere.
//! * `per_cluster_shift`: OOD clusters use `w + m * s_c` with `s_c` orthogonal
//!   to `w` and `|s_c| = |w|`, so the optimal in-distribution predictor
//!   reaches `r = 1 / sqrt(1 + m^2)` on a noiseless OOD cluster.
//! * `mid_training_peak_surrogate`: embeddings carry a high-variance and a
//!   low-variance latent direction. Both drive the label, but the OOD
//!   clusters reverse the sign of the weak one (fully at `m = 1`). Gradient
//!   training picks up the strong direction first, so OOD Pearson peaks
//!   early and then falls while in-distribution validation keeps improving.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    write_complex_table, write_embedding_csv, AffinityLabel, ComplexRecord, DataError, Dataset,
    EmbeddingVector, MeasurementKind,
};
use crate::metrics::{pearson, MetricError};
use crate::scorer::{has_features, ScorerError};
use crate::seed;
use crate::trainer::{ensemble_predict, TrainError, TrainedEnsemble};

/// Scale of the strong latent direction in the surrogate.
const SURROGATE_STRONG_SCALE: f64 = 3.0;
/// Scale of the weak latent direction in the surrogate.
const SURROGATE_WEAK_SCALE: f64 = 0.3;
const BASE_PK: f64 = 6.5;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl From<ScorerError> for SyntheticError {
    fn from(e: ScorerError) -> Self {
        SyntheticError::Train(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModel {
    GlobalLinear,
    PerClusterShift,
    MidTrainingPeakSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub embedding_dim: usize,
    /// 0 leaves ligand embeddings absent.
    pub ligand_dim: usize,
    pub label_model: LabelModel,
    pub noise_std: f64,
    pub ood_shift_magnitude: f64,
    pub seed: u64,
    /// Cluster indices whose label law is shifted.
    pub ood_clusters: Vec<usize>,
    /// Unshifted cluster indices held out as in-distribution controls.
    pub control_clusters: Vec<usize>,
    pub center_spread: f64,
    /// Isotropic spread around each center. The surrogate needs this well
    /// below its weak-direction scale (0.3), or isotropic noise along the
    /// weak direction swamps the label.
    pub within_cluster_std: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            cluster_sizes: vec![120; 8],
            embedding_dim: 32,
            ligand_dim: 0,
            label_model: LabelModel::GlobalLinear,
            noise_std: 0.1,
            ood_shift_magnitude: 0.0,
            seed: 0,
            ood_clusters: vec![0],
            control_clusters: vec![1],
            center_spread: 1.0,
            within_cluster_std: 1.0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidSpec(m));
        if self.n_clusters == 0 {
            return bad("n_clusters must be positive".into());
        }
        if self.cluster_sizes.len() != self.n_clusters {
            return bad(format!(
                "cluster_sizes has {} entries for {} clusters",
                self.cluster_sizes.len(),
                self.n_clusters
            ));
        }
        if let Some(i) = self.cluster_sizes.iter().position(|&s| s == 0) {
            return bad(format!("cluster {i} has size 0"));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.label_model == LabelModel::MidTrainingPeakSurrogate && self.embedding_dim < 2 {
            return bad("the surrogate needs embedding_dim >= 2".into());
        }
        if self.label_model == LabelModel::PerClusterShift && self.embedding_dim < 2 {
            return bad("per_cluster_shift needs embedding_dim >= 2".into());
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("ood_shift_magnitude", self.ood_shift_magnitude),
            ("center_spread", self.center_spread),
            ("within_cluster_std", self.within_cluster_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for &c in self.ood_clusters.iter().chain(&self.control_clusters) {
            if c >= self.n_clusters {
                return bad(format!("cluster index {c} out of range"));
            }
        }
        if self.ood_clusters.iter().any(|c| self.control_clusters.contains(c)) {
            return bad("ood_clusters and control_clusters overlap".into());
        }
        Ok(())
    }

    pub fn cluster_name(index: usize) -> String {
        format!("c{index:03}")
    }
}

/// What the generator did, enough to recompute every noiseless label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label_model: LabelModel,
    pub w: Vec<f64>,
    pub b: f64,
    /// Weight offset added to `w` for each shifted cluster.
    pub shifts: BTreeMap<String, Vec<f64>>,
    pub ood_clusters: Vec<String>,
    pub control_clusters: Vec<String>,
    pub ood_shift_magnitude: f64,
    pub noise_std: f64,
    /// Covariance of embeddings around their cluster center, as
    /// `within_cluster_std^2 I + sum_k scale_k^2 u_k u_k^T`.
    pub within_cluster_std: f64,
    pub latent_directions: Vec<(f64, Vec<f64>)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GroundTruth {
    pub fn weights_for(&self, cluster_id: &str) -> Vec<f64> {
        match self.shifts.get(cluster_id) {
            Some(s) => self.w.iter().zip(s).map(|(a, b)| a + b).collect(),
            None => self.w.clone(),
        }
    }

    pub fn noiseless_label(&self, record: &ComplexRecord) -> Option<f64> {
        let e = record.interaction_embedding.as_ref()?;
        Some(dot(&self.weights_for(&record.cluster_id), e.values()) + self.b)
    }

    fn quad_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let s2 = self.within_cluster_std * self.within_cluster_std;
        s2 * dot(a, b)
            + self
                .latent_directions
                .iter()
                .map(|(scale, u)| scale * scale * dot(a, u) * dot(b, u))
                .sum::<f64>()
    }

    /// Population Pearson, inside `cluster_id`, between the labels and the
    /// noiseless in-distribution predictor `w . e`.
    pub fn optimal_pearson(&self, cluster_id: &str) -> f64 {
        let wc = self.weights_for(cluster_id);
        let cov = self.quad_form(&self.w, &wc);
        let var_p = self.quad_form(&self.w, &self.w);
        let var_y = self.quad_form(&wc, &wc) + self.noise_std * self.noise_std;
        if var_p <= 0.0 || var_y <= 0.0 {
            return 0.0;
        }
        cov / (var_p * var_y).sqrt()
    }

    /// Smallest shift magnitude at which the optimal predictor's OOD Pearson
    /// falls `min_gap` below its in-distribution Pearson under the
    /// `per_cluster_shift` law with isotropic clusters. `None` if unreachable.
    pub fn calibrated_shift_threshold(&self, min_gap: f64) -> Option<f64> {
        let sig = self.quad_form(&self.w, &self.w);
        let n2 = self.noise_std * self.noise_std;
        let r_id = (sig / (sig + n2)).sqrt();
        let t = r_id - min_gap;
        if t <= 0.0 {
            return None;
        }
        let m2 = (sig / (t * t) - n2) / sig - 1.0;
        Some(m2.max(0.0).sqrt())
    }

    /// Target name to cluster id for every OOD and control cluster.
    pub fn target_clusters(&self) -> BTreeMap<String, String> {
        self.ood_clusters
            .iter()
            .chain(&self.control_clusters)
            .map(|c| (c.clone(), c.clone()))
            .collect()
    }
}

fn normal_vec<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn orthonormalize(v: &mut [f64], basis: &[&[f64]]) {
    for u in basis {
        let p = dot(v, u);
        v.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= p * y);
    }
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn unit_vec<R: Rng>(dim: usize, basis: &[&[f64]], rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = normal_vec(dim, rng);
        orthonormalize(&mut v, basis);
        if v.iter().all(|x| x.is_finite()) {
            return v;
        }
    }
}

/// Build a dataset and the ground truth that generated it.
pub fn generate(spec: &GeneratorSpec) -> Result<(Dataset, GroundTruth), SyntheticError> {
    spec.validate()?;
    let dim = spec.embedding_dim;
    let mut rng = seed::rng(seed::derive(spec.seed, "synthetic/law"));
    let ood: Vec<String> = spec.ood_clusters.iter().map(|&c| GeneratorSpec::cluster_name(c)).collect();
    let control: Vec<String> = spec
        .control_clusters
        .iter()
        .map(|&c| GeneratorSpec::cluster_name(c))
        .collect();

    let mut latent = Vec::new();
    let mut shifts = BTreeMap::new();
    let w = match spec.label_model {
        LabelModel::GlobalLinear | LabelModel::PerClusterShift => {
            let w = unit_vec(dim, &[], &mut rng);
            if spec.label_model == LabelModel::PerClusterShift {
                for c in &ood {
                    let s = unit_vec(dim, &[&w], &mut rng);
                    shifts.insert(c.clone(), s.iter().map(|x| x * spec.ood_shift_magnitude).collect());
                }
            }
            w
        }
        LabelModel::MidTrainingPeakSurrogate => {
            let u = unit_vec(dim, &[], &mut rng);
            let v = unit_vec(dim, &[&u], &mut rng);
            let w: Vec<f64> = u
                .iter()
                .zip(&v)
                .map(|(a, b)| a / SURROGATE_STRONG_SCALE + b / SURROGATE_WEAK_SCALE)
                .collect();
            for c in &ood {
                let s: Vec<f64> = v
                    .iter()
                    .map(|b| -2.0 * spec.ood_shift_magnitude * b / SURROGATE_WEAK_SCALE)
                    .collect();
                shifts.insert(c.clone(), s);
            }
            latent.push((SURROGATE_STRONG_SCALE, u));
            latent.push((SURROGATE_WEAK_SCALE, v));
            w
        }
    };
    let truth = GroundTruth {
        label_model: spec.label_model,
        w,
        b: BASE_PK,
        shifts,
        ood_clusters: ood,
        control_clusters: control,
        ood_shift_magnitude: spec.ood_shift_magnitude,
        noise_std: spec.noise_std,
        within_cluster_std: spec.within_cluster_std,
        latent_directions: latent,
    };

    let latent_refs: Vec<&[f64]> = truth.latent_directions.iter().map(|(_, u)| u.as_slice()).collect();
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise_std");
    let kinds = [MeasurementKind::Ki, MeasurementKind::Kd, MeasurementKind::Ic50];
    let mut records = Vec::with_capacity(spec.cluster_sizes.iter().sum());
    for (c, &size) in spec.cluster_sizes.iter().enumerate() {
        let cluster_id = GeneratorSpec::cluster_name(c);
        let mut rng = seed::rng(seed::derive_indexed(spec.seed, "synthetic/cluster", c));
        let mut center: Vec<f64> = normal_vec(dim, &mut rng).iter().map(|x| x * spec.center_spread).collect();
        if !latent_refs.is_empty() {
            for u in &latent_refs {
                let p = dot(&center, u);
                center.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= p * y);
            }
        }
        let wc = truth.weights_for(&cluster_id);
        for i in 0..size {
            let mut e: Vec<f64> = center
                .iter()
                .map(|m| m + spec.within_cluster_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for (scale, u) in &truth.latent_directions {
                let z: f64 = rng.sample(StandardNormal);
                e.iter_mut().zip(u).for_each(|(x, y)| *x += scale * z * y);
            }
            let pk = dot(&wc, &e) + truth.b + noise.sample(&mut rng);
            let kind = *kinds.choose(&mut rng).expect("non-empty");
            let ligand = if spec.ligand_dim > 0 {
                Some(EmbeddingVector::new(normal_vec(spec.ligand_dim, &mut rng))?)
            } else {
                None
            };
            let mw = (300.0 + 40.0 * (pk - truth.b) + 30.0 * rng.sample::<f64, _>(StandardNormal)).max(50.0);
            records.push(ComplexRecord {
                complex_id: format!("{cluster_id}_{i:04}"),
                label: AffinityLabel::new(pk, kind)?,
                cluster_id: cluster_id.clone(),
                interaction_embedding: Some(EmbeddingVector::new(e)?),
                ligand_embedding: ligand,
                molecular_weight: Some(mw),
            });
        }
    }
    let dataset = Dataset::new(records, format!("synthetic seed={} model={:?}", spec.seed, spec.label_model))?;
    Ok((dataset, truth))
}

/// Paths written by [`write_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFiles {
    pub complexes: PathBuf,
    pub interaction: PathBuf,
    pub ligand: Option<PathBuf>,
    pub ground_truth: PathBuf,
}

/// Write the dataset in ingestion formats plus `ground_truth.json`.
pub fn write_synthetic(dataset: &Dataset, truth: &GroundTruth, dir: &Path) -> Result<SyntheticFiles, SyntheticError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SyntheticError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = SyntheticFiles {
        complexes: dir.join("complexes.csv"),
        interaction: dir.join("interaction.csv"),
        ligand: dataset
            .records()
            .iter()
            .any(|r| r.ligand_embedding.is_some())
            .then(|| dir.join("ligand.csv")),
        ground_truth: dir.join("ground_truth.json"),
    };
    write_complex_table(dataset, fs::File::create(&files.complexes).map_err(io_err(&files.complexes))?)?;
    let embedded = |f: fn(&ComplexRecord) -> Option<&EmbeddingVector>| {
        dataset
            .records()
            .iter()
            .filter_map(move |r| f(r).map(|e| (r.complex_id.as_str(), e)))
    };
    let inter_dim = truth.w.len();
    write_embedding_csv(
        embedded(|r| r.interaction_embedding.as_ref()),
        inter_dim,
        fs::File::create(&files.interaction).map_err(io_err(&files.interaction))?,
    )?;
    if let Some(path) = &files.ligand {
        let dim = dataset
            .records()
            .iter()
            .find_map(|r| r.ligand_embedding.as_ref())
            .map_or(0, EmbeddingVector::dimension);
        write_embedding_csv(
            embedded(|r| r.ligand_embedding.as_ref()),
            dim,
            fs::File::create(path).map_err(io_err(path))?,
        )?;
    }
    let json = serde_json::to_string_pretty(truth).expect("ground truth serializes");
    fs::write(&files.ground_truth, json).map_err(io_err(&files.ground_truth))?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDiagnostics {
    /// Mean per-cluster Pearson over the control clusters.
    pub id_pearson: f64,
    /// Mean per-cluster Pearson over the shifted clusters.
    pub ood_pearson: f64,
    pub gap: f64,
    pub min_gap: f64,
    /// Shift magnitude above which the gap is required.
    pub threshold: Option<f64>,
    pub gap_required: bool,
    pub passed: bool,
}

fn mean_cluster_pearson(
    ensemble: &TrainedEnsemble,
    dataset: &Dataset,
    clusters: &[String],
) -> Result<f64, SyntheticError> {
    let kind = ensemble
        .members
        .first()
        .ok_or(TrainError::EmptyEnsemble)?
        .config
        .scorer_kind;
    let by_cluster = dataset.clusters();
    let mut rs = Vec::new();
    for c in clusters {
        let ids = by_cluster
            .get(c.as_str())
            .ok_or_else(|| SyntheticError::InvalidSpec(format!("cluster `{c}` not in dataset")))?;
        let records: Vec<&ComplexRecord> = dataset
            .select(ids)
            .map_err(TrainError::UnknownId)?
            .into_iter()
            .filter(|r| has_features(r, kind))
            .collect();
        let preds = ensemble_predict(ensemble, &records)?;
        let p: Vec<f64> = records.iter().map(|r| preds[&r.complex_id]).collect();
        let y: Vec<f64> = records.iter().map(|r| r.pk()).collect();
        rs.push(pearson(&p, &y)?);
    }
    if rs.is_empty() {
        return Err(SyntheticError::InvalidSpec("no clusters to evaluate".into()));
    }
    Ok(rs.iter().sum::<f64>() / rs.len() as f64)
}

/// Compare in-distribution and OOD Pearson of an ensemble trained with the
/// control and shifted clusters held out.
///
/// The gap is only required for `per_cluster_shift` data whose shift exceeds
/// the calibrated threshold; otherwise the check passes vacuously and just
/// reports both values.
pub fn expected_behavior_check(
    ensemble: &TrainedEnsemble,
    dataset: &Dataset,
    truth: &GroundTruth,
    min_gap: f64,
) -> Result<BehaviorDiagnostics, SyntheticError> {
    let id_pearson = mean_cluster_pearson(ensemble, dataset, &truth.control_clusters)?;
    let ood_pearson = mean_cluster_pearson(ensemble, dataset, &truth.ood_clusters)?;
    let gap = id_pearson - ood_pearson;
    let threshold = match truth.label_model {
        LabelModel::PerClusterShift => truth.calibrated_shift_threshold(min_gap),
        _ => None,
    };
    let gap_required = threshold.is_some_and(|t| truth.ood_shift_magnitude > t);
    Ok(BehaviorDiagnostics {
        id_pearson,
        ood_pearson,
        gap,
        min_gap,
        threshold,
        gap_required,
        passed: !gap_required || gap >= min_gap,
    })
}

/// True when the VAL ensemble's mean selected epoch is strictly earlier.
pub fn val_stops_earlier(skf: &TrainedEnsemble, val: &TrainedEnsemble) -> bool {
    val.mean_best_epoch() < skf.mean_best_epoch()
}
