//! JSON persistence for trained scorers.
//!
//! Weights are stored row-major per layer (`weights[layer][row][col]`).
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so a save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ScalarField;
use crate::scorers::{Activation, DenseLayer, MlpScorer, TrainConfig, TrainingRecord};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelFile {
    format_version: u64,
    field: ScalarField,
    m: usize,
    n: usize,
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    #[serde(default)]
    train_config: Option<TrainConfig>,
    #[serde(default)]
    training_loss_trace: Vec<f64>,
    #[serde(default)]
    updates: usize,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    format_version: Option<u64>,
}

pub fn model_to_json(model: &MlpScorer) -> Result<String> {
    let record = model.training();
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        field: model.field(),
        m: model.m(),
        n: model.n(),
        layer_dims: model.layer_dims(),
        activations: model.activations().to_vec(),
        weights: model
            .layers()
            .iter()
            .map(|l| l.weights.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
        biases: model.layers().iter().map(|l| l.bias.iter().copied().collect()).collect(),
        train_config: record.map(|r| r.config.clone()),
        training_loss_trace: record.map(|r| r.loss_trace.clone()).unwrap_or_default(),
        updates: record.map_or(0, |r| r.updates),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn persist_model(model: &MlpScorer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

/// Byte offset of a serde_json error position within `text`.
fn byte_offset(text: &str, err: &serde_json::Error) -> usize {
    let line = err.line().max(1);
    let before: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (before + err.column().saturating_sub(1)).min(text.len())
}

fn corrupt(text: &str, err: serde_json::Error) -> Error {
    Error::CorruptModel {
        offset: byte_offset(text, &err),
        message: err.to_string(),
    }
}

pub fn model_from_json(text: &str) -> Result<MlpScorer> {
    let header: Header = serde_json::from_str(text).map_err(|e| corrupt(text, e))?;
    match header.format_version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedFormat(v)),
        None => {
            return Err(Error::CorruptModel {
                offset: 0,
                message: "missing formatVersion".into(),
            })
        }
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| corrupt(text, e))?;
    let shape_error = |message: String| Error::CorruptModel { offset: 0, message };

    if file.weights.len() != file.biases.len() || file.layer_dims.len() != file.weights.len() + 1 {
        return Err(shape_error(format!(
            "{} weight blocks, {} bias blocks and {} layer widths do not agree",
            file.weights.len(),
            file.biases.len(),
            file.layer_dims.len()
        )));
    }
    let mut layers = Vec::with_capacity(file.weights.len());
    for (i, (rows, bias)) in file.weights.iter().zip(&file.biases).enumerate() {
        let (fan_in, fan_out) = (file.layer_dims[i], file.layer_dims[i + 1]);
        if rows.len() != fan_out || rows.iter().any(|r| r.len() != fan_in) || bias.len() != fan_out {
            return Err(shape_error(format!("layer {i} does not match widths {fan_in} -> {fan_out}")));
        }
        layers.push(DenseLayer {
            weights: DMatrix::from_fn(fan_out, fan_in, |r, c| rows[r][c]),
            bias: DVector::from_column_slice(bias),
        });
    }
    let training = file.train_config.map(|config| TrainingRecord {
        config,
        loss_trace: file.training_loss_trace,
        updates: file.updates,
    });
    MlpScorer::from_parts(file.field, file.m, file.n, layers, file.activations, training)
        .map_err(|e| shape_error(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpScorer> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
