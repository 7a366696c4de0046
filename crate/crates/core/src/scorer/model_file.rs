//! Single-file model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "OODSCMDL"
//! version  u32      1
//! hlen     u64      header length in bytes
//! header   hlen     UTF-8 JSON: config, input_dimension, standardizer,
//!                   activation, layer shapes, history, best epoch, selection
//! count    u64      number of weights
//! weights  count*8  f64, layer by layer, weights then bias
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Activation, Dense, EpochRecord, Mlp, ScorerConfig, ScorerError, SelectionMetric, Standardizer,
    TrainedScorer,
};

const MAGIC: &[u8; 8] = b"OODSCMDL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ScorerConfig,
    input_dimension: usize,
    standardizer: Standardizer,
    activation: Activation,
    /// (inputs, outputs) per layer.
    layers: Vec<(usize, usize)>,
    training_history: Vec<EpochRecord>,
    best_epoch: usize,
    selection: SelectionMetric,
}

pub fn write_scorer<W: Write>(model: &TrainedScorer, mut w: W) -> Result<(), ScorerError> {
    let header = Header {
        config: model.config.clone(),
        input_dimension: model.input_dimension,
        standardizer: model.standardizer.clone(),
        activation: model.network.activation,
        layers: model.network.layers.iter().map(|l| (l.inputs, l.outputs)).collect(),
        training_history: model.training_history.clone(),
        best_epoch: model.best_epoch,
        selection: model.selection,
    };
    let json = serde_json::to_vec(&header).map_err(|e| ScorerError::Corrupt(e.to_string()))?;
    let params = model.network.params();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8], ScorerError> {
    if buf.len() < n {
        return Err(ScorerError::Corrupt(format!("truncated while reading {what}")));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u64(buf: &mut &[u8], what: &str) -> Result<u64, ScorerError> {
    Ok(u64::from_le_bytes(take(buf, 8, what)?.try_into().unwrap()))
}

pub fn read_scorer<R: Read>(mut r: R) -> Result<TrainedScorer, ScorerError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut buf = bytes.as_slice();
    if take(&mut buf, 8, "magic")? != MAGIC {
        return Err(ScorerError::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(ScorerError::Corrupt(format!("unsupported version {version}")));
    }
    let hlen = take_u64(&mut buf, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, hlen, "header")?)
        .map_err(|e| ScorerError::Corrupt(format!("header: {e}")))?;
    let count = take_u64(&mut buf, "weight count")? as usize;
    let payload = take(&mut buf, count.checked_mul(8).ok_or_else(|| ScorerError::Corrupt("weight count overflow".into()))?, "weights")?;
    if !buf.is_empty() {
        return Err(ScorerError::Corrupt(format!("{} trailing bytes", buf.len())));
    }
    if header.layers.is_empty() || header.layers.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(ScorerError::Corrupt("inconsistent layer shapes".into()));
    }
    if header.layers[0].0 != header.input_dimension
        || header.standardizer.mean.len() != header.input_dimension
        || header.standardizer.std.len() != header.input_dimension
    {
        return Err(ScorerError::Corrupt("input dimension disagrees with header".into()));
    }
    let mut network = Mlp {
        activation: header.activation,
        layers: header.layers.iter().map(|&(i, o)| Dense::zeros(i, o)).collect(),
    };
    if network.n_params() != count {
        return Err(ScorerError::Corrupt(format!(
            "expected {} weights, found {count}",
            network.n_params()
        )));
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    network.set_params(&params);
    Ok(TrainedScorer {
        config: header.config,
        input_dimension: header.input_dimension,
        standardizer: header.standardizer,
        network,
        training_history: header.training_history,
        best_epoch: header.best_epoch,
        selection: header.selection,
    })
}

pub fn save_scorer(model: &TrainedScorer, path: &Path) -> Result<(), ScorerError> {
    let mut buf = Vec::new();
    write_scorer(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_scorer(path: &Path) -> Result<TrainedScorer, ScorerError> {
    read_scorer(fs::File::open(path)?)
}

/// `complex_id,predicted_pk` rows in id order.
pub fn write_predictions_csv<W: Write>(
    predictions: &std::collections::BTreeMap<String, f64>,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["complex_id", "predicted_pk"])?;
    for (id, p) in predictions {
        w.write_record([id.as_str(), &p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
