//! Dual-branch forward pass: per branch conv(valid) -> conv(same) -> LSTM ->
//! token projection -> encoder; the last tokens are fused and mapped to a
//! force.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::layers::{
    conv1d_forward, encoder_last_token, lstm_forward, relu, transformer_encoder_forward, Padding,
};
use super::weights::{BranchWeights, Mode, ModelWeights};
use crate::error::{Error, Result};
use crate::trace::{Vec3, WindowTensor, N_CHANNELS, N_F};

/// Anything that maps an input window to the next force sample.
pub trait ForceEstimator: Sync {
    fn window_len(&self) -> usize;
    fn predict(&self, window: &WindowTensor) -> Result<Vec3>;
}

/// Per-branch activations, useful for localizing conformance failures.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    /// Output of the conv stack, `N_tokens x kappa`.
    pub post_conv: Array2<f64>,
    /// Last LSTM hidden state.
    pub post_lstm: Array1<f64>,
    /// Last encoder token.
    pub post_encoder: Array1<f64>,
}

fn conv_lstm(window: &ArrayView2<f64>, w: &BranchWeights) -> Result<(Array2<f64>, Array2<f64>)> {
    let h1 = conv1d_forward(window, &w.conv1, Padding::Valid)?;
    let h2 = conv1d_forward(&h1.view(), &w.conv2, Padding::Same)?;
    let hl = lstm_forward(&h2.view(), &w.lstm)?;
    Ok((h2, hl))
}

fn tokens(hl: Array2<f64>, w: &BranchWeights) -> Array2<f64> {
    match &w.proj {
        Some(p) => p.forward(&hl.view()),
        None => hl,
    }
}

/// Branch output (`d` values) for an already-normalized `T x C` window.
pub fn branch_forward(window: &ArrayView2<f64>, w: &BranchWeights) -> Result<Array1<f64>> {
    let (_, hl) = conv_lstm(window, w)?;
    encoder_last_token(&tokens(hl, w).view(), &w.encoder)
}

/// Like [`branch_forward`] but keeps the intermediates, and runs the full
/// encoder rather than the last-token shortcut.
pub fn branch_trace(window: &ArrayView2<f64>, w: &BranchWeights) -> Result<BranchTrace> {
    let (h2, hl) = conv_lstm(window, w)?;
    let post_lstm = hl.row(hl.nrows() - 1).to_owned();
    let enc = transformer_encoder_forward(&tokens(hl, w).view(), &w.encoder)?;
    Ok(BranchTrace {
        post_conv: h2,
        post_lstm,
        post_encoder: enc.row(enc.nrows() - 1).to_owned(),
    })
}

impl ModelWeights {
    fn check_window(&self, window: &WindowTensor) -> Result<()> {
        let (rows, cols) = window.values.dim();
        if rows != self.config.window || cols != N_CHANNELS {
            return Err(Error::Shape(format!(
                "window is {rows}x{cols}, model expects {}x{N_CHANNELS}",
                self.config.window
            )));
        }
        Ok(())
    }

    fn normalized_inputs(&self, window: &WindowTensor) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        self.check_window(window)?;
        let z = self.norm_stats.normalize_window(&window.values);
        let force = z.slice(s![.., ..N_F]).to_owned();
        let command = match self.mode {
            Mode::MultiModal => Some(z.slice(s![.., N_F..]).to_owned()),
            Mode::ForceOnly => None,
        };
        Ok((force, command))
    }

    /// Fused vector fed to the fusion layer (`d` or `2d` wide).
    pub fn fused_features(&self, window: &WindowTensor) -> Result<Array1<f64>> {
        let (force, command) = self.normalized_inputs(window)?;
        let top = branch_forward(&force.view(), &self.top)?;
        match (&self.op, command) {
            (Some(op), Some(cmd)) => {
                let op_out = branch_forward(&cmd.view(), op)?;
                Ok(concatenate(Axis(0), &[top.view(), op_out.view()]).expect("1-d concat"))
            }
            _ => Ok(top),
        }
    }

    fn head(&self, fused: &Array1<f64>) -> Vec3 {
        let mut hidden = self.fuse.forward_vec(&fused.view());
        hidden.mapv_inplace(relu);
        let z = self.head.forward_vec(&hidden.view());
        [
            self.norm_stats.denormalize(0, z[0]),
            self.norm_stats.denormalize(1, z[1]),
            self.norm_stats.denormalize(2, z[2]),
        ]
    }

    /// Next force sample, in newtons.
    pub fn predict_next(&self, window: &WindowTensor) -> Result<Vec3> {
        let fused = self.fused_features(window)?;
        Ok(self.head(&fused))
    }

    /// Force-branch intermediates plus the final prediction.
    pub fn trace_forward(&self, window: &WindowTensor) -> Result<(BranchTrace, Vec3)> {
        let (force, _) = self.normalized_inputs(window)?;
        let top = branch_trace(&force.view(), &self.top)?;
        Ok((top, self.predict_next(window)?))
    }
}

impl ForceEstimator for ModelWeights {
    fn window_len(&self) -> usize {
        self.config.window
    }

    fn predict(&self, window: &WindowTensor) -> Result<Vec3> {
        self.predict_next(window)
    }
}

/// Stub estimator that repeats the newest force in the window.
#[derive(Debug, Clone, Copy)]
pub struct LastForceEcho {
    pub window_len: usize,
}

impl ForceEstimator for LastForceEcho {
    fn window_len(&self) -> usize {
        self.window_len
    }

    fn predict(&self, window: &WindowTensor) -> Result<Vec3> {
        Ok(window.last_force())
    }
}
