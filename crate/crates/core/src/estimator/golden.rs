//! Golden input/output vectors for cross-implementation conformance.
//!
//! File layout: `{"cases": [{"input": [...], "post_conv": [...],
//! "post_lstm": [...], "post_encoder": [...], "output": [...]}]}`. `input` is
//! the raw `T x 9` window, row-major; the intermediates belong to the force
//! branch (`post_conv` is `N_tokens x kappa`, row-major); `output` is the
//! denormalized force.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::trace::{WindowTensor, N_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub input: Vec<f64>,
    #[serde(default)]
    pub post_conv: Vec<f64>,
    #[serde(default)]
    pub post_lstm: Vec<f64>,
    #[serde(default)]
    pub post_encoder: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFile {
    pub cases: Vec<GoldenCase>,
}

impl GoldenFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

impl GoldenCase {
    pub fn window(&self) -> Result<WindowTensor> {
        let rows = self.input.len() / N_CHANNELS;
        let values = Array2::from_shape_vec((rows, N_CHANNELS), self.input.clone())
            .map_err(|e| Error::Shape(format!("golden input: {e}")))?;
        Ok(WindowTensor { values })
    }
}

/// Worst mismatch of one stage across cases.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub max_abs: f64,
    pub max_rel: f64,
}

fn compare(stage: &'static str, want: &[f64], got: &[f64], acc: &mut StageError) -> Result<()> {
    if want.is_empty() {
        return Ok(());
    }
    if want.len() != got.len() {
        return Err(Error::Shape(format!(
            "{stage}: golden has {} values, engine produced {}",
            want.len(),
            got.len()
        )));
    }
    for (w, g) in want.iter().zip(got) {
        let abs = (w - g).abs();
        acc.max_abs = acc.max_abs.max(abs);
        acc.max_rel = acc.max_rel.max(abs / w.abs().max(1e-12));
    }
    Ok(())
}

/// Run every case through the engine and report per-stage worst errors.
pub fn check_golden(weights: &ModelWeights, golden: &GoldenFile) -> Result<Vec<StageError>> {
    let mut stages: Vec<StageError> = ["post_conv", "post_lstm", "post_encoder", "output"]
        .into_iter()
        .map(|stage| StageError {
            stage,
            max_abs: 0.0,
            max_rel: 0.0,
        })
        .collect();
    for case in &golden.cases {
        let (tr, out) = weights.trace_forward(&case.window()?)?;
        let conv: Vec<f64> = tr.post_conv.iter().copied().collect();
        compare("post_conv", &case.post_conv, &conv, &mut stages[0])?;
        compare("post_lstm", &case.post_lstm, tr.post_lstm.as_slice().unwrap_or(&[]), &mut stages[1])?;
        compare(
            "post_encoder",
            &case.post_encoder,
            &tr.post_encoder.to_vec(),
            &mut stages[2],
        )?;
        compare("output", &case.output, &out, &mut stages[3])?;
    }
    Ok(stages)
}
