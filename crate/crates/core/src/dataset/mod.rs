//! Canonical records for protein-ligand complexes.
//!
//! Labels are held as pK only. Embeddings are optional per record: a complex
//! whose embedding could not be produced upstream is kept (so test sets stay
//! identical across scorers) but is filtered out of embedding-consuming
//! training sets.

mod ingest;

pub use ingest::{
    ingest_dataset, join_records, read_complex_table, read_embedding_csv, read_embedding_dir,
    read_similarity_csv, write_complex_table, write_embedding_csv, write_similarity_csv,
    EmbeddingCoverage, EmbeddingInput, EmbeddingSource, IngestSources, IngestionReport,
    TableRow,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default dimension of graph-level interaction embeddings.
pub const DEFAULT_EMBEDDING_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("concentration must be positive, got {0}")]
    NonPositiveConcentration(f64),
    #[error("pK value must be finite, got {0}")]
    NonFinitePk(f64),
    #[error("embedding must have at least one dimension")]
    EmptyEmbedding,
    #[error("embedding entry {index} is not finite ({value})")]
    NonFiniteEmbedding { index: usize, value: f64 },
    #[error("duplicate complex_id `{0}`")]
    DuplicateId(String),
    #[error("complex `{0}` has an empty cluster_id")]
    EmptyCluster(String),
    #[error("unknown measurement kind `{0}` (expected Ki, Kd or IC50)")]
    UnknownMeasurement(String),
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("{source_name}: embedding dimension mismatch for `{id}`: expected {expected}, found {found}")]
    DimensionMismatch {
        source_name: String,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("similarity record {id_a}/{id_b}: {message}")]
    InvalidSimilarity {
        id_a: String,
        id_b: String,
        message: String,
    },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Kind of experimental affinity measurement behind a pK label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementKind {
    Ki,
    Kd,
    #[serde(rename = "IC50")]
    Ic50,
}

impl MeasurementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementKind::Ki => "Ki",
            MeasurementKind::Kd => "Kd",
            MeasurementKind::Ic50 => "IC50",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasurementKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ki" => Ok(MeasurementKind::Ki),
            "kd" => Ok(MeasurementKind::Kd),
            "ic50" => Ok(MeasurementKind::Ic50),
            _ => Err(DataError::UnknownMeasurement(s.to_string())),
        }
    }
}

/// Binding affinity as pK = -log10(concentration in molar).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityLabel {
    pub pk_value: f64,
    pub measurement_kind: MeasurementKind,
}

impl AffinityLabel {
    pub fn new(pk_value: f64, measurement_kind: MeasurementKind) -> Result<Self, DataError> {
        if !pk_value.is_finite() {
            return Err(DataError::NonFinitePk(pk_value));
        }
        Ok(Self {
            pk_value,
            measurement_kind,
        })
    }

    /// Concentration in molar corresponding to this label.
    pub fn concentration_molar(&self) -> f64 {
        10f64.powf(-self.pk_value)
    }
}

/// Convert a molar Ki/Kd/IC50 concentration to a pK label.
pub fn pk_from_concentration(value: f64, kind: MeasurementKind) -> Result<AffinityLabel, DataError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(DataError::NonPositiveConcentration(value));
    }
    AffinityLabel::new(-value.log10(), kind)
}

/// A fixed-length, finite embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DataError> {
        if values.is_empty() {
            return Err(DataError::EmptyEmbedding);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFiniteEmbedding { index, value });
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = DataError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexRecord {
    pub complex_id: String,
    pub label: AffinityLabel,
    pub cluster_id: String,
    pub interaction_embedding: Option<EmbeddingVector>,
    pub ligand_embedding: Option<EmbeddingVector>,
    pub molecular_weight: Option<f64>,
}

impl ComplexRecord {
    pub fn pk(&self) -> f64 {
        self.label.pk_value
    }
}

/// An immutable, validated collection of complexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    records: Vec<ComplexRecord>,
    provenance: String,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    provenance: String,
    records: Vec<ComplexRecord>,
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = DataError;

    fn try_from(repr: DatasetRepr) -> Result<Self, Self::Error> {
        Dataset::new(repr.records, repr.provenance)
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr {
            provenance: d.provenance,
            records: d.records,
        }
    }
}

impl Dataset {
    pub fn new(records: Vec<ComplexRecord>, provenance: impl Into<String>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.cluster_id.trim().is_empty() {
                return Err(DataError::EmptyCluster(r.complex_id.clone()));
            }
            if !r.label.pk_value.is_finite() {
                return Err(DataError::NonFinitePk(r.label.pk_value));
            }
            if index.insert(r.complex_id.clone(), i).is_some() {
                return Err(DataError::DuplicateId(r.complex_id.clone()));
            }
        }
        Ok(Self {
            records,
            provenance: provenance.into(),
            index,
        })
    }

    pub fn empty(provenance: impl Into<String>) -> Self {
        Self {
            records: Vec::new(),
            provenance: provenance.into(),
            index: HashMap::new(),
        }
    }

    pub fn records(&self) -> &[ComplexRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, complex_id: &str) -> Option<&ComplexRecord> {
        self.index.get(complex_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, complex_id: &str) -> bool {
        self.index.contains_key(complex_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.complex_id.as_str())
    }

    /// Distinct cluster ids, sorted.
    pub fn cluster_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.cluster_id.as_str()).collect()
    }

    /// Complex ids grouped by cluster, each group sorted.
    pub fn clusters(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.cluster_id.as_str()).or_default().push(r.complex_id.as_str());
        }
        for ids in out.values_mut() {
            ids.sort_unstable();
        }
        out
    }

    /// Resolve ids to records, failing on the first unknown id.
    pub fn select<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Result<Vec<&'a ComplexRecord>, String> {
        ids.iter()
            .map(|id| self.get(id.as_ref()).ok_or_else(|| id.as_ref().to_string()))
            .collect()
    }

    /// Deterministic JSON serialization.
    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Pairwise ligand, pose and pocket similarity between two complexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub id_a: String,
    pub id_b: String,
    pub ligand_similarity: f64,
    pub pose_similarity: f64,
    pub pocket_similarity: f64,
}

impl SimilarityRecord {
    pub fn new(
        id_a: impl Into<String>,
        id_b: impl Into<String>,
        ligand_similarity: f64,
        pose_similarity: f64,
        pocket_similarity: f64,
    ) -> Result<Self, DataError> {
        let rec = Self {
            id_a: id_a.into(),
            id_b: id_b.into(),
            ligand_similarity,
            pose_similarity,
            pocket_similarity,
        };
        let fail = |message: String| DataError::InvalidSimilarity {
            id_a: rec.id_a.clone(),
            id_b: rec.id_b.clone(),
            message,
        };
        if rec.id_a == rec.id_b {
            return Err(fail("ids must differ".into()));
        }
        for (name, v) in rec.scores_named() {
            if !(0.0..=1.0).contains(&v) {
                return Err(fail(format!("{name} similarity {v} outside [0, 1]")));
            }
        }
        Ok(rec)
    }

    /// (ligand, pose, pocket).
    pub fn scores(&self) -> [f64; 3] {
        [self.ligand_similarity, self.pose_similarity, self.pocket_similarity]
    }

    fn scores_named(&self) -> [(&'static str, f64); 3] {
        [
            ("ligand", self.ligand_similarity),
            ("pose", self.pose_similarity),
            ("pocket", self.pocket_similarity),
        ]
    }

    /// The id on the other side of the pair, if `id` is one of the two.
    pub fn partner_of(&self, id: &str) -> Option<&str> {
        if self.id_a == id {
            Some(&self.id_b)
        } else if self.id_b == id {
            Some(&self.id_a)
        } else {
            None
        }
    }
}
