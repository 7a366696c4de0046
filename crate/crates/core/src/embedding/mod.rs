//! 2-D t-SNE projections of interaction embeddings and their plots.

mod render;
mod tsne;

pub use render::{render_projection, Coloring, PlotFormat, RenderOutput};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("t-SNE with perplexity {perplexity} needs at least {needed} points, got {found}")]
    TooFewPoints {
        perplexity: f64,
        needed: usize,
        found: usize,
    },
    #[error("embedding of `{id}` has a non-finite value at index {index}")]
    NonFinite { id: String, index: usize },
    #[error("embedding of `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid t-SNE parameter: {0}")]
    InvalidParameter(String),
    #[error("complex `{0}` is not in the dataset")]
    UnknownId(String),
    #[error("highlight cluster `{0}` is not in the dataset")]
    UnknownCluster(String),
    #[error("plot error: {0}")]
    Plot(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub n_components: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Barnes–Hut opening angle; 0 computes exact repulsion.
    pub theta: f64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            n_components: 2,
            seed: 0,
            max_iter: 1000,
            theta: 0.5,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParameters {
    pub perplexity: f64,
    pub n_components: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub coordinates: BTreeMap<String, (f64, f64)>,
    pub parameters: ProjectionParameters,
}

impl ProjectionResult {
    /// `complex_id,x,y` in id order.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["complex_id", "x", "y"])?;
        for (id, (x, y)) in &self.coordinates {
            w.write_record([id.as_str(), &x.to_string(), &y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Project embeddings to 2-D. Points are sorted by id first, so the result
/// depends only on the id set, the vectors and the seed.
pub fn project_tsne<'a, I>(embeddings: I, params: &TsneParams) -> Result<ProjectionResult, EmbeddingError>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let bad = |m: String| Err(EmbeddingError::InvalidParameter(m));
    if params.n_components != 2 {
        return bad(format!("only 2 components are supported, got {}", params.n_components));
    }
    if !(params.perplexity > 0.0 && params.perplexity.is_finite()) {
        return bad(format!("perplexity must be positive, got {}", params.perplexity));
    }
    if !(params.theta >= 0.0) || !(params.learning_rate > 0.0) || !(params.early_exaggeration >= 1.0) {
        return bad("theta >= 0, learning_rate > 0 and early_exaggeration >= 1 required".into());
    }
    let mut sorted: BTreeMap<&str, &[f64]> = BTreeMap::new();
    for (id, v) in embeddings {
        if sorted.insert(id, v).is_some() {
            return Err(EmbeddingError::DuplicateId(id.to_string()));
        }
    }
    let needed = (3.0 * params.perplexity).ceil() as usize;
    if sorted.len() < needed {
        return Err(EmbeddingError::TooFewPoints {
            perplexity: params.perplexity,
            needed,
            found: sorted.len(),
        });
    }
    let dim = sorted.values().next().map_or(0, |v| v.len());
    for (id, v) in &sorted {
        if v.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                id: id.to_string(),
                expected: dim,
                found: v.len(),
            });
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                id: id.to_string(),
                index,
            });
        }
    }
    let x: Vec<Vec<f64>> = sorted.values().map(|v| v.to_vec()).collect();
    let y = tsne::run(
        &x,
        &tsne::Settings {
            perplexity: params.perplexity,
            theta: params.theta,
            max_iter: params.max_iter,
            learning_rate: params.learning_rate,
            early_exaggeration: params.early_exaggeration,
            exaggeration_iters: params.exaggeration_iters,
            seed: params.seed,
        },
    );
    if let Some((id, _)) = sorted.keys().zip(&y).find(|(_, p)| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(EmbeddingError::NonFinite {
            id: id.to_string(),
            index: 0,
        });
    }
    Ok(ProjectionResult {
        coordinates: sorted.keys().zip(y).map(|(id, p)| (id.to_string(), (p[0], p[1]))).collect(),
        parameters: ProjectionParameters {
            perplexity: params.perplexity,
            n_components: params.n_components,
            seed: params.seed,
        },
    })
}

/// Interaction embeddings of every complex that has one.
pub fn interaction_embeddings(dataset: &crate::Dataset) -> Vec<(&str, &[f64])> {
    dataset
        .records()
        .iter()
        .filter_map(|r| {
            r.interaction_embedding
                .as_ref()
                .map(|e| (r.complex_id.as_str(), e.values()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, seed_: u64) -> Vec<(String, Vec<f64>)> {
        let mut rng = crate::seed::rng(seed_);
        (0..2 * n)
            .map(|i| {
                let off = if i < n { 0.0 } else { 8.0 };
                let v = (0..32).map(|_| off + rng.sample::<f64, _>(StandardNormal)).collect();
                (format!("p{i:03}"), v)
            })
            .collect()
    }

    fn refs(pts: &[(String, Vec<f64>)]) -> Vec<(&str, &[f64])> {
        pts.iter().map(|(id, v)| (id.as_str(), v.as_slice())).collect()
    }

    #[test]
    fn defaults_and_conservation() {
        let pts = blobs(50, 1);
        let params = TsneParams {
            max_iter: 300,
            ..TsneParams::default()
        };
        let r = project_tsne(refs(&pts), &params).unwrap();
        assert_eq!(r.parameters.perplexity, 30.0);
        assert_eq!(r.parameters.n_components, 2);
        assert_eq!(r.coordinates.len(), 100);
        let mut rev = refs(&pts);
        rev.reverse();
        assert_eq!(project_tsne(rev, &params).unwrap(), r);
    }

    #[test]
    fn input_errors() {
        let pts = blobs(10, 2);
        let p = TsneParams::default();
        assert!(matches!(
            project_tsne(refs(&pts), &p),
            Err(EmbeddingError::TooFewPoints { needed: 90, found: 20, .. })
        ));
        let mut pts = blobs(50, 2);
        pts[7].1[3] = f64::NAN;
        match project_tsne(refs(&pts), &p) {
            Err(EmbeddingError::NonFinite { id, index }) => assert_eq!((id.as_str(), index), ("p007", 3)),
            other => panic!("{other:?}"),
        }
        let mut pts = blobs(50, 2);
        pts[9].1.pop();
        assert!(matches!(project_tsne(refs(&pts), &p), Err(EmbeddingError::DimensionMismatch { .. })));
        let pts = blobs(50, 2);
        let bad = TsneParams {
            n_components: 3,
            ..TsneParams::default()
        };
        assert!(project_tsne(refs(&pts), &bad).is_err());
    }
}
