//! Run configuration: one JSON document per run, with `--set` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oodscore::dataset::{EmbeddingInput, EmbeddingSource};
use oodscore::embedding::{Coloring, PlotFormat, TsneParams};
use oodscore::metrics::{DEFAULT_EF_FRACTIONS, DEFAULT_RMSD_CUTOFF, DEFAULT_TOP_N};
use oodscore::scorer::ScorerConfig;
use oodscore::split::{CleanRule, CleanThresholds, DEFAULT_BINS, DEFAULT_FOLDS, DEFAULT_HOLDOUT};
use oodscore::synthetic::GeneratorSpec;
use oodscore::trainer::{FinetuneConfig, TrainerOptions};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub trainer: TrainerOptions,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub synthetic: GeneratorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingEmbeddingPolicy {
    /// Abort ingestion, naming the complexes without embeddings.
    #[default]
    Error,
    /// Drop those complexes and list them in the ingestion report.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub complex_table: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<EmbeddingInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ligand: Option<EmbeddingInput>,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub missing_embeddings: MissingEmbeddingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Target name to cluster id.
    pub targets: BTreeMap<String, String>,
    /// Similarity table for leakage filtering; no filtering without one.
    pub similarities: Option<PathBuf>,
    /// Ids the filter protects. `null` protects every target test id; a list
    /// such as a benchmark core set filters against those ids only.
    pub clean_reference_ids: Option<Vec<String>>,
    pub clean_thresholds: CleanThresholds,
    pub clean_rule: CleanRule,
    pub folds: usize,
    pub bins: usize,
    /// Complexes reserved per target for VAL and FT; `null` disables.
    pub holdout: Option<usize>,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            targets: BTreeMap::new(),
            similarities: None,
            clean_reference_ids: None,
            clean_thresholds: CleanThresholds::default(),
            clean_rule: CleanRule::default(),
            folds: DEFAULT_FOLDS,
            bins: DEFAULT_BINS,
            holdout: Some(DEFAULT_HOLDOUT),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Decoy CSVs; entries with empty scores are scored by the ensemble.
    pub docking_decoys: Option<PathBuf>,
    pub screening_decoys: Option<PathBuf>,
    /// Embeddings keyed by decoy `entry_id`, needed for unscored entries.
    pub decoy_interaction: Option<EmbeddingInput>,
    pub decoy_ligand: Option<EmbeddingInput>,
    pub rmsd_cutoff: f64,
    pub top_n: usize,
    pub ef_fractions: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            docking_decoys: None,
            screening_decoys: None,
            decoy_interaction: None,
            decoy_ligand: None,
            rmsd_cutoff: DEFAULT_RMSD_CUTOFF,
            top_n: DEFAULT_TOP_N,
            ef_fractions: DEFAULT_EF_FRACTIONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub tsne: TsneParams,
    pub colorings: Vec<Coloring>,
    pub highlight_clusters: Vec<String>,
    pub format: PlotFormat,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tsne: TsneParams::default(),
            colorings: vec![Coloring::Affinity],
            highlight_clusters: Vec::new(),
            format: PlotFormat::Svg,
        }
    }
}

/// Parse `key.path=value`; the value is JSON when it parses, a string otherwise.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{raw}` must look like key.path=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Validation(format!("override `{raw}` has an empty key segment")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn apply_override(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("override `{key}`: `{part}` is not inside an object")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part)
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// A loaded, overridden and validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    /// Read `path` (or start from an empty document), apply overrides in
    /// order, deserialize and check every referenced path.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let (mut doc, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {} is not valid JSON: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (doc, dir)
            }
            None => (
                serde_json::json!({ "schema_version": SCHEMA_VERSION }),
                std::env::current_dir().unwrap_or_default(),
            ),
        };
        for (key, value) in overrides {
            apply_override(&mut doc, key, value.clone())?;
        }
        let config = from_value(doc)?;
        let loaded = Self {
            sha256: digest_config(&config),
            config,
            base_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn resolve_input(&self, input: &EmbeddingInput) -> EmbeddingInput {
        let source = match &input.source {
            EmbeddingSource::Csv(p) => EmbeddingSource::Csv(self.resolve(p)),
            EmbeddingSource::Directory(p) => EmbeddingSource::Directory(self.resolve(p)),
        };
        EmbeddingInput {
            source,
            dimension: input.dimension,
        }
    }

    /// Every file or directory the configuration names, with its key path.
    pub fn referenced_paths(&self) -> Vec<(String, PathBuf)> {
        let c = &self.config;
        let emb = |key: &str, e: &Option<EmbeddingInput>| {
            e.as_ref().map(|e| match &e.source {
                EmbeddingSource::Csv(p) | EmbeddingSource::Directory(p) => (format!("{key}.source.path"), p.clone()),
            })
        };
        let mut out = Vec::new();
        if let Some(d) = &c.data {
            out.push(("data.complex_table".to_string(), d.complex_table.clone()));
            out.extend(emb("data.interaction", &d.interaction));
            out.extend(emb("data.ligand", &d.ligand));
        }
        if let Some(p) = &c.split.similarities {
            out.push(("split.similarities".into(), p.clone()));
        }
        if let Some(p) = &c.evaluate.docking_decoys {
            out.push(("evaluate.docking_decoys".into(), p.clone()));
        }
        if let Some(p) = &c.evaluate.screening_decoys {
            out.push(("evaluate.screening_decoys".into(), p.clone()));
        }
        out.extend(emb("evaluate.decoy_interaction", &c.evaluate.decoy_interaction));
        out.extend(emb("evaluate.decoy_ligand", &c.evaluate.decoy_ligand));
        out.into_iter().map(|(k, p)| (k, self.resolve(&p))).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                c.schema_version
            )));
        }
        for (key, path) in self.referenced_paths() {
            if !path.exists() {
                return Err(CliError::Validation(format!("{key}: {} does not exist", path.display())));
            }
        }
        c.scorer
            .validate()
            .map_err(|e| CliError::Validation(format!("scorer: {e}")))?;
        c.split
            .clean_thresholds
            .validate()
            .map_err(|e| CliError::Validation(format!("split.clean_thresholds: {e}")))?;
        if c.split.holdout == Some(0) {
            return Err(CliError::Validation("split.holdout: must be positive or null".into()));
        }
        if c.evaluate.ef_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(CliError::Validation("evaluate.ef_fractions: values must lie in (0, 1]".into()));
        }
        if c.evaluate.top_n == 0 || !(c.evaluate.rmsd_cutoff > 0.0) {
            return Err(CliError::Validation("evaluate: top_n and rmsd_cutoff must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let c = &self.config;
        [
            ("split", c.split.seed),
            ("scorer", c.scorer.seed),
            ("projection", c.projection.tsne.seed),
            ("synthetic", c.synthetic.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

pub fn from_value(doc: Value) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "config".to_string() } else { path };
        CliError::Validation(format!("{at}: {}", e.into_inner()))
    })
}

/// SHA-256 of the effective configuration's canonical JSON.
pub fn digest_config(config: &RunConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, overrides: &[&str]) -> Result<LoadedConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, text).unwrap();
        let ov: Vec<_> = overrides.iter().map(|o| parse_override(o).unwrap()).collect();
        LoadedConfig::load(Some(&p), &ov)
    }

    fn message(r: Result<LoadedConfig, CliError>) -> String {
        match r {
            Err(CliError::Validation(m)) => m,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = load_str(r#"{"schema_version": 1}"#, &[]).unwrap();
        assert_eq!(c.config.scorer, ScorerConfig::default());
        assert_eq!(c.config.split.folds, 5);
        assert_eq!(c.config.split.holdout, Some(25));
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let m = message(load_str(r#"{"schema_version": 1, "scorer": {"hidden": [4]}}"#, &[]));
        assert!(m.starts_with("scorer.hidden"), "{m}");
        let m = message(load_str(r#"{"schema_version": 1, "scorer": {"hidden_sizes": ["a"]}}"#, &[]));
        assert!(m.starts_with("scorer.hidden_sizes[0]"), "{m}");
        let m = message(load_str(r#"{"schema_version": 1, "bogus": 1}"#, &[]));
        assert!(m.contains("bogus"), "{m}");
        let m = message(load_str(r#"{"schema_version": 2}"#, &[]));
        assert!(m.starts_with("schema_version"), "{m}");
    }

    #[test]
    fn overrides_beat_config_and_defaults() {
        let text = r#"{"schema_version": 1, "scorer": {"max_epochs": 40, "patience": 10}}"#;
        let c = load_str(text, &["scorer.max_epochs=80", "split.seed=9", "split.targets.A=k1"]).unwrap();
        assert_eq!(c.config.scorer.max_epochs, 80);
        assert_eq!(c.config.scorer.patience, 10);
        assert_eq!(c.config.split.seed, 9);
        assert_eq!(c.config.split.targets["A"], "k1");
        let base = load_str(text, &[]).unwrap();
        assert_ne!(base.sha256, c.sha256);
        assert_eq!(base.sha256, load_str(text, &[]).unwrap().sha256);
    }

    #[test]
    fn missing_paths_are_rejected() {
        let m = message(load_str(
            r#"{"schema_version": 1, "data": {"complex_table": "nope.csv"}}"#,
            &[],
        ));
        assert!(m.starts_with("data.complex_table"), "{m}");
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }
}
