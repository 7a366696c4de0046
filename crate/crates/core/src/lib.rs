//! Out-of-distribution evaluation of embedding-based protein-ligand scoring
//! functions.
//!
//! The crate covers the whole evaluation loop: ingesting complexes with
//! precomputed embeddings ([`dataset`]), building cluster-holdout splits with
//! similarity filtering and stratified folds ([`split`]), training embedding
//! scorers ([`scorer`]) under cross-validation, target-validation and
//! fine-tuning regimes ([`trainer`]), scoring them ([`metrics`]), projecting
//! embeddings to 2-D ([`embedding`]), and generating synthetic datasets with
//! known ground truth ([`synthetic`]).

pub mod dataset;
pub mod embedding;
pub mod metrics;
pub mod scorer;
pub mod seed;
pub mod split;
pub mod synthetic;
pub mod trainer;

pub use dataset::{
    AffinityLabel, ComplexRecord, Dataset, EmbeddingVector, MeasurementKind, SimilarityRecord,
};
pub use metrics::{MetricReport, MetricError};
pub use scorer::{ScorerConfig, ScorerKind, TrainedScorer};
pub use split::SplitManifest;
pub use trainer::{Regime, TrainedEnsemble};
