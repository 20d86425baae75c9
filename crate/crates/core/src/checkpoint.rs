//! Versioned JSON checkpoint container.
//!
//! Floats are stored as decimal strings produced by Rust's shortest
//! round-trip formatter, so a write/read cycle reproduces every weight
//! bit-exactly.

use crate::batch::NormMode;
use crate::error::{Error, Result};
use crate::labels::Task;
use crate::model::{GcnModel, LayerVariant};
use crate::optim::AdamState;
use crate::sparse::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixPayload {
    n_rows: usize,
    n_cols: usize,
    /// Row-major decimal strings.
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AdamPayload {
    step: u64,
    lr: String,
    beta1: String,
    beta2: String,
    eps: String,
    m: Vec<MatrixPayload>,
    v: Vec<MatrixPayload>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointPayload {
    version: u32,
    dims: Vec<usize>,
    variant: LayerVariant,
    lambda: String,
    task: Task,
    norm_mode: NormMode,
    weights: Vec<MatrixPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamPayload>,
}

fn encode_f64(v: f64) -> String {
    format!("{v}")
}

fn decode_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::input(format!("bad decimal value `{s}` in checkpoint")))
}

fn encode_matrix(m: &DenseMatrix) -> MatrixPayload {
    MatrixPayload {
        n_rows: m.n_rows(),
        n_cols: m.n_cols(),
        values: m.values().iter().map(|&v| encode_f64(v)).collect(),
    }
}

fn decode_matrix(p: &MatrixPayload) -> Result<DenseMatrix> {
    let values = p
        .values
        .iter()
        .map(|s| decode_f64(s))
        .collect::<Result<Vec<f64>>>()?;
    DenseMatrix::from_values(p.n_rows, p.n_cols, values)
}

/// Serialize the model (and optionally optimizer state) to `path`.
pub fn save_checkpoint(
    path: &Path,
    model: &GcnModel,
    norm_mode: NormMode,
    adam: Option<&AdamState>,
) -> Result<()> {
    let payload = CheckpointPayload {
        version: VERSION,
        dims: model.dims().to_vec(),
        variant: model.variant(),
        lambda: encode_f64(model.lambda()),
        task: model.task(),
        norm_mode,
        weights: model.weights().iter().map(encode_matrix).collect(),
        adam: adam.map(|a| AdamPayload {
            step: a.step,
            lr: encode_f64(a.lr),
            beta1: encode_f64(a.beta1),
            beta2: encode_f64(a.beta2),
            eps: encode_f64(a.eps),
            m: a.m.iter().map(encode_matrix).collect(),
            v: a.v.iter().map(encode_matrix).collect(),
        }),
    };
    let text = serde_json::to_string_pretty(&payload)?;
    crate::data::write_atomic(path, text.as_bytes())
}

/// Load a checkpoint; returns the model, its normalization mode, and the
/// optimizer state when one was saved.
pub fn load_checkpoint(path: &Path) -> Result<(GcnModel, NormMode, Option<AdamState>)> {
    let text = std::fs::read_to_string(path)?;
    let payload: CheckpointPayload = serde_json::from_str(&text)?;
    if payload.version != VERSION {
        return Err(Error::input(format!(
            "unsupported checkpoint version {}",
            payload.version
        )));
    }
    let mut model = GcnModel::new(
        payload.dims.clone(),
        payload.variant,
        decode_f64(&payload.lambda)?,
        payload.task,
    )?;
    let weights = payload
        .weights
        .iter()
        .map(decode_matrix)
        .collect::<Result<Vec<_>>>()?;
    model.set_weights(weights)?;

    let adam = match &payload.adam {
        Some(a) => Some(AdamState {
            step: a.step,
            m: a.m.iter().map(decode_matrix).collect::<Result<Vec<_>>>()?,
            v: a.v.iter().map(decode_matrix).collect::<Result<Vec<_>>>()?,
            lr: decode_f64(&a.lr)?,
            beta1: decode_f64(&a.beta1)?,
            beta2: decode_f64(&a.beta2)?,
            eps: decode_f64(&a.eps)?,
        }),
        None => None,
    };
    Ok((model, payload.norm_mode, adam))
}
