//! CSV ingestion of complex tables, embedding tables and similarity tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AffinityLabel, ComplexRecord, DataError, Dataset, EmbeddingVector, MeasurementKind,
    SimilarityRecord,
};

/// One parsed row of the complex table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub complex_id: String,
    pub label: AffinityLabel,
    pub cluster_id: String,
    pub molecular_weight: Option<f64>,
}

/// Where a set of embeddings of one kind lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", content = "path", rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// One CSV with header `complex_id,v0,...,v{d-1}`.
    Csv(PathBuf),
    /// A directory with one `<complex_id>.csv` or `<complex_id>.txt` per complex.
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingInput {
    pub source: EmbeddingSource,
    pub dimension: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSources {
    pub interaction: Option<EmbeddingInput>,
    pub ligand: Option<EmbeddingInput>,
    pub provenance: String,
}

/// Coverage of one embedding kind over the complex table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCoverage {
    pub embedded: usize,
    pub absent: usize,
    pub absent_ids: Vec<String>,
    /// Embedding ids that do not appear in the complex table.
    pub unmatched_embedding_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub table_rows: usize,
    pub interaction: Option<EmbeddingCoverage>,
    pub ligand: Option<EmbeddingCoverage>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn require_column(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    header_index(headers, name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn parse_f64(row: usize, field: &str, raw: &str) -> Result<f64, DataError> {
    raw.trim().parse::<f64>().map_err(|_| DataError::MalformedRow {
        row,
        message: format!("{field} `{raw}` is not a number"),
    })
}

/// Parse the complex table. Row numbers in errors are 1-based data rows.
pub fn read_complex_table<R: Read>(reader: R) -> Result<Vec<TableRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_id = require_column(&headers, "complex_id")?;
    let c_pk = require_column(&headers, "pk_value")?;
    let c_kind = require_column(&headers, "measurement_kind")?;
    let c_cluster = require_column(&headers, "cluster_id")?;
    let c_mw = header_index(&headers, "molecular_weight");

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let complex_id = field(c_id).to_string();
        if complex_id.is_empty() {
            return Err(DataError::MalformedRow {
                row,
                message: "empty complex_id".into(),
            });
        }
        let pk = parse_f64(row, "pk_value", field(c_pk))?;
        let kind: MeasurementKind = field(c_kind).parse().map_err(|e: DataError| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let label = AffinityLabel::new(pk, kind).map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let cluster_id = field(c_cluster).to_string();
        if cluster_id.is_empty() {
            return Err(DataError::MalformedRow {
                row,
                message: "empty cluster_id".into(),
            });
        }
        let molecular_weight = match c_mw.map(field) {
            None | Some("") => None,
            Some(raw) => {
                let mw = parse_f64(row, "molecular_weight", raw)?;
                if !(mw.is_finite() && mw > 0.0) {
                    return Err(DataError::MalformedRow {
                        row,
                        message: format!("molecular_weight {mw} must be positive"),
                    });
                }
                Some(mw)
            }
        };
        rows.push(TableRow {
            complex_id,
            label,
            cluster_id,
            molecular_weight,
        });
    }
    Ok(rows)
}

/// Parse an embedding CSV (`complex_id,v0,...`). Every row must have
/// `dimension` values, matching the header.
pub fn read_embedding_csv<R: Read>(
    reader: R,
    dimension: usize,
    source_name: &str,
) -> Result<BTreeMap<String, EmbeddingVector>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("complex_id") {
        return Err(DataError::MissingColumn("complex_id".into()));
    }
    let header_dim = headers.len() - 1;
    if header_dim != dimension {
        return Err(DataError::DimensionMismatch {
            source_name: source_name.to_string(),
            id: "<header>".into(),
            expected: dimension,
            found: header_dim,
        });
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(DataError::MalformedRow {
                row,
                message: format!("{source_name}: empty complex_id"),
            });
        }
        let found = rec.len() - 1;
        if found != dimension {
            return Err(DataError::DimensionMismatch {
                source_name: source_name.to_string(),
                id,
                expected: dimension,
                found,
            });
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|raw| parse_f64(row, "embedding value", raw))
            .collect::<Result<Vec<_>, _>>()?;
        let v = EmbeddingVector::new(values).map_err(|e| DataError::MalformedRow {
            row,
            message: format!("{source_name} `{id}`: {e}"),
        })?;
        if out.insert(id.clone(), v).is_some() {
            return Err(DataError::DuplicateId(id));
        }
    }
    Ok(out)
}

/// Read a directory of per-complex vector files. The complex id is the file
/// stem; values are separated by commas and/or whitespace.
pub fn read_embedding_dir(
    dir: &Path,
    dimension: usize,
) -> Result<BTreeMap<String, EmbeddingVector>, DataError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "txt"))
        })
        .collect();
    entries.sort();
    let mut out = BTreeMap::new();
    for path in entries {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| parse_f64(1, "embedding value", t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DataError::MalformedRow {
                row: 1,
                message: format!("{}: {e}", path.display()),
            })?;
        if values.len() != dimension {
            return Err(DataError::DimensionMismatch {
                source_name: path.display().to_string(),
                id,
                expected: dimension,
                found: values.len(),
            });
        }
        let v = EmbeddingVector::new(values)?;
        out.insert(id, v);
    }
    Ok(out)
}

fn load_embeddings(input: &EmbeddingInput) -> Result<BTreeMap<String, EmbeddingVector>, DataError> {
    match &input.source {
        EmbeddingSource::Csv(path) => {
            let f = fs::File::open(path).map_err(io_err(path))?;
            read_embedding_csv(f, input.dimension, &path.display().to_string())
        }
        EmbeddingSource::Directory(path) => read_embedding_dir(path, input.dimension),
    }
}

fn coverage(
    rows: &[TableRow],
    embeddings: &BTreeMap<String, EmbeddingVector>,
) -> EmbeddingCoverage {
    let mut cov = EmbeddingCoverage::default();
    for r in rows {
        if embeddings.contains_key(&r.complex_id) {
            cov.embedded += 1;
        } else {
            cov.absent += 1;
            cov.absent_ids.push(r.complex_id.clone());
        }
    }
    let table_ids: std::collections::HashSet<&str> =
        rows.iter().map(|r| r.complex_id.as_str()).collect();
    cov.unmatched_embedding_ids = embeddings
        .keys()
        .filter(|k| !table_ids.contains(k.as_str()))
        .cloned()
        .collect();
    cov
}

/// Join parsed table rows with embedding maps into a dataset and a report.
pub fn join_records(
    rows: Vec<TableRow>,
    interaction: Option<&BTreeMap<String, EmbeddingVector>>,
    ligand: Option<&BTreeMap<String, EmbeddingVector>>,
    provenance: &str,
) -> Result<(Dataset, IngestionReport), DataError> {
    let report = IngestionReport {
        table_rows: rows.len(),
        interaction: interaction.map(|m| coverage(&rows, m)),
        ligand: ligand.map(|m| coverage(&rows, m)),
    };
    let records = rows
        .into_iter()
        .map(|r| ComplexRecord {
            interaction_embedding: interaction.and_then(|m| m.get(&r.complex_id).cloned()),
            ligand_embedding: ligand.and_then(|m| m.get(&r.complex_id).cloned()),
            complex_id: r.complex_id,
            label: r.label,
            cluster_id: r.cluster_id,
            molecular_weight: r.molecular_weight,
        })
        .collect();
    Ok((Dataset::new(records, provenance)?, report))
}

/// Load the complex table and join the configured embedding sources.
///
/// Records whose embedding lookup fails are kept with the embedding absent
/// and listed in the report.
pub fn ingest_dataset(
    complex_table: &Path,
    sources: &IngestSources,
) -> Result<(Dataset, IngestionReport), DataError> {
    let f = fs::File::open(complex_table).map_err(io_err(complex_table))?;
    let rows = read_complex_table(f)?;
    let interaction = sources.interaction.as_ref().map(load_embeddings).transpose()?;
    let ligand = sources.ligand.as_ref().map(load_embeddings).transpose()?;
    join_records(rows, interaction.as_ref(), ligand.as_ref(), &sources.provenance)
}

fn fmt_f64(v: f64) -> String {
    // `{}` on f64 prints the shortest representation that round-trips.
    format!("{v}")
}

pub fn write_complex_table<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let with_mw = dataset.records().iter().any(|r| r.molecular_weight.is_some());
    let mut header = vec!["complex_id", "pk_value", "measurement_kind", "cluster_id"];
    if with_mw {
        header.push("molecular_weight");
    }
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut row = vec![
            r.complex_id.clone(),
            fmt_f64(r.label.pk_value),
            r.label.measurement_kind.to_string(),
            r.cluster_id.clone(),
        ];
        if with_mw {
            row.push(r.molecular_weight.map(fmt_f64).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Write `complex_id,v0,...` rows for every `(id, vector)` pair.
pub fn write_embedding_csv<'a, W, I>(entries: I, dimension: usize, writer: W) -> Result<(), DataError>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a EmbeddingVector)>,
{
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["complex_id".to_string()];
    header.extend((0..dimension).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (id, v) in entries {
        if v.dimension() != dimension {
            return Err(DataError::DimensionMismatch {
                source_name: "<writer>".into(),
                id: id.to_string(),
                expected: dimension,
                found: v.dimension(),
            });
        }
        let mut row = vec![id.to_string()];
        row.extend(v.values().iter().copied().map(fmt_f64));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Parse a similarity table with header `id_a,id_b,ligand_sim,pose_sim,pocket_sim`.
pub fn read_similarity_csv<R: Read>(reader: R) -> Result<Vec<SimilarityRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let a = require_column(&headers, "id_a")?;
    let b = require_column(&headers, "id_b")?;
    let l = require_column(&headers, "ligand_sim")?;
    let p = require_column(&headers, "pose_sim")?;
    let k = require_column(&headers, "pocket_sim")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let s = SimilarityRecord::new(
            field(a),
            field(b),
            parse_f64(row, "ligand_sim", field(l))?,
            parse_f64(row, "pose_sim", field(p))?,
            parse_f64(row, "pocket_sim", field(k))?,
        )
        .map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_similarity_csv<W: Write>(records: &[SimilarityRecord], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id_a", "id_b", "ligand_sim", "pose_sim", "pocket_sim"])?;
    for s in records {
        w.write_record([
            s.id_a.clone(),
            s.id_b.clone(),
            fmt_f64(s.ligand_similarity),
            fmt_f64(s.pose_similarity),
            fmt_f64(s.pocket_similarity),
        ])?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}
