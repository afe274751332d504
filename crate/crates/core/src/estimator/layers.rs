//! Forward-pass building blocks. Matrices are row-major with one time step
//! (token) per row, and dense layers compute `x · W + b`.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Zero padding that preserves length; odd deficits put the extra zero
    /// on the right.
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn forward_vec(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `omega x c_in x c_out`.
    pub kernel: Array3<f64>,
    pub bias: Array1<f64>,
}

/// Convolution without the activation.
pub fn conv1d_preactivation(
    input: &ArrayView2<f64>,
    conv: &Conv1d,
    padding: Padding,
) -> Result<Array2<f64>> {
    let (omega, c_in, c_out) = conv.kernel.dim();
    if input.ncols() != c_in {
        return Err(Error::Shape(format!(
            "conv expects {c_in} input channels, got {}",
            input.ncols()
        )));
    }
    if conv.bias.len() != c_out {
        return Err(Error::Shape(format!(
            "conv bias has {} entries for {c_out} filters",
            conv.bias.len()
        )));
    }
    let len = input.nrows();
    let padded;
    let src = match padding {
        Padding::Valid => {
            if len < omega {
                return Err(Error::Shape(format!(
                    "valid conv needs at least {omega} rows, got {len}"
                )));
            }
            input.view()
        }
        Padding::Same => {
            let total = omega - 1;
            let left = total / 2;
            let mut p = Array2::zeros((len + total, c_in));
            p.slice_mut(s![left..left + len, ..]).assign(input);
            padded = p;
            padded.view()
        }
    };
    let out_len = src.nrows() + 1 - omega;
    let mut out = Array2::from_shape_fn((out_len, c_out), |(_, o)| conv.bias[o]);
    for k in 0..omega {
        let taps = conv.kernel.index_axis(Axis(0), k);
        out += &src.slice(s![k..k + out_len, ..]).dot(&taps);
    }
    Ok(out)
}

/// Stride-1 convolution followed by ReLU.
pub fn conv1d_forward(
    input: &ArrayView2<f64>,
    conv: &Conv1d,
    padding: Padding,
) -> Result<Array2<f64>> {
    let mut out = conv1d_preactivation(input, conv, padding)?;
    out.mapv_inplace(relu);
    Ok(out)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate blocks are laid out `[input | forget | cell | output]` along the
/// `4H` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `c_in x 4H`.
    pub w_ih: Array2<f64>,
    /// `H x 4H`.
    pub w_hh: Array2<f64>,
    /// `4H`.
    pub bias: Array1<f64>,
}

impl Lstm {
    pub fn hidden(&self) -> usize {
        self.w_hh.nrows()
    }
}

/// Run the recurrence from zero state and return every hidden state.
pub fn lstm_forward(tokens: &ArrayView2<f64>, lstm: &Lstm) -> Result<Array2<f64>> {
    let h_dim = lstm.hidden();
    if lstm.w_hh.ncols() != 4 * h_dim || lstm.w_ih.ncols() != 4 * h_dim || lstm.bias.len() != 4 * h_dim
    {
        return Err(Error::Shape("LSTM gate matrices must be 4H wide".into()));
    }
    if tokens.ncols() != lstm.w_ih.nrows() {
        return Err(Error::Shape(format!(
            "LSTM expects {} input channels, got {}",
            lstm.w_ih.nrows(),
            tokens.ncols()
        )));
    }
    let x_proj = tokens.dot(&lstm.w_ih) + &lstm.bias;
    let mut h = Array1::<f64>::zeros(h_dim);
    let mut c = Array1::<f64>::zeros(h_dim);
    let mut out = Array2::zeros((tokens.nrows(), h_dim));
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let gates = &x_proj.row(t) + &h.dot(&lstm.w_hh);
        for j in 0..h_dim {
            let i = sigmoid(gates[j]);
            let f = sigmoid(gates[h_dim + j]);
            let g = gates[2 * h_dim + j].tanh();
            let o = sigmoid(gates[3 * h_dim + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        row.assign(&h);
    }
    Ok(out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    pub fn forward_vec(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        Array1::from_shape_fn(x.len(), |i| (x[i] - mean) * inv * self.gamma[i] + self.beta[i])
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            dst.assign(&self.forward_vec(&src));
        }
        out
    }
}

/// One post-norm encoder layer: self-attention and a ReLU feed-forward
/// block, each wrapped in a residual connection and layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub n_heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: LayerNorm,
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub ln2: LayerNorm,
}

impl EncoderLayer {
    pub fn d_model(&self) -> usize {
        self.q.in_dim()
    }

    pub fn d_head(&self) -> usize {
        self.d_model() / self.n_heads
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Attention weights of each head, `n_heads` matrices of `queries x keys`.
pub fn attention_weights(
    queries: &ArrayView2<f64>,
    keys: &ArrayView2<f64>,
    n_heads: usize,
) -> Vec<Array2<f64>> {
    let d_head = queries.ncols() / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();
    (0..n_heads)
        .map(|h| {
            let cols = s![.., h * d_head..(h + 1) * d_head];
            let mut scores = queries.slice(cols).dot(&keys.slice(cols).t()) * scale;
            for mut row in scores.rows_mut() {
                softmax_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
            }
            scores
        })
        .collect()
}

fn check_encoder(x: &ArrayView2<f64>, layer: &EncoderLayer) -> Result<()> {
    let d = layer.d_model();
    if layer.n_heads == 0 || d % layer.n_heads != 0 {
        return Err(Error::Shape(format!(
            "model width {d} not divisible by {} heads",
            layer.n_heads
        )));
    }
    if x.ncols() != d {
        return Err(Error::Shape(format!(
            "encoder expects {d}-wide tokens, got {}",
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("encoder needs at least one token".into()));
    }
    Ok(())
}

/// Multi-head attention for the given query rows against all of `x`.
fn attend(queries_src: &ArrayView2<f64>, x: &ArrayView2<f64>, layer: &EncoderLayer) -> Array2<f64> {
    let q = layer.q.forward(queries_src);
    let k = layer.k.forward(x);
    let v = layer.v.forward(x);
    let d_head = layer.d_head();
    let weights = attention_weights(&q.view(), &k.view(), layer.n_heads);
    let mut heads = Array2::zeros((q.nrows(), layer.d_model()));
    for (h, a) in weights.iter().enumerate() {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        heads.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
    }
    layer.o.forward(&heads.view())
}

fn ffn_block(x1: &ArrayView2<f64>, layer: &EncoderLayer) -> Array2<f64> {
    let mut hidden = layer.ffn1.forward(x1);
    hidden.mapv_inplace(relu);
    let y = layer.ffn2.forward(&hidden.view()) + x1;
    layer.ln2.forward(&y.view())
}

pub fn transformer_encoder_forward(x: &ArrayView2<f64>, layer: &EncoderLayer) -> Result<Array2<f64>> {
    check_encoder(x, layer)?;
    let x1 = layer.ln1.forward(&(attend(x, x, layer) + x).view());
    Ok(ffn_block(&x1.view(), layer))
}

/// Encoder output of the last token only. Rows are independent after the
/// attention mixing, so this equals the last row of the full forward pass.
pub fn encoder_last_token(x: &ArrayView2<f64>, layer: &EncoderLayer) -> Result<Array1<f64>> {
    check_encoder(x, layer)?;
    let n = x.nrows();
    let last = x.slice(s![n - 1..n, ..]);
    let x1 = layer.ln1.forward(&(attend(&last, x, layer) + last).view());
    Ok(ffn_block(&x1.view(), layer).row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array3};

    #[test]
    fn valid_and_same_lengths() {
        let x = Array2::from_shape_fn((100, 3), |(i, c)| (i * 3 + c) as f64 * 0.01);
        let conv = Conv1d {
            kernel: Array3::from_elem((5, 3, 4), 0.1),
            bias: Array1::zeros(4),
        };
        assert_eq!(conv1d_forward(&x.view(), &conv, Padding::Valid).unwrap().dim(), (96, 4));
        assert_eq!(conv1d_forward(&x.view(), &conv, Padding::Same).unwrap().dim(), (100, 4));
        let short = Array2::zeros((4, 3));
        assert!(matches!(
            conv1d_forward(&short.view(), &conv, Padding::Valid),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identity_kernel_is_relu() {
        let x = arr2(&[[1.0, -2.0], [-0.5, 3.0], [0.0, 4.0]]);
        let mut kernel = Array3::zeros((1, 2, 2));
        kernel[[0, 0, 0]] = 1.0;
        kernel[[0, 1, 1]] = 1.0;
        let conv = Conv1d {
            kernel,
            bias: Array1::zeros(2),
        };
        let y = conv1d_forward(&x.view(), &conv, Padding::Same).unwrap();
        assert_eq!(y, x.mapv(relu));
    }

    #[test]
    fn same_padding_even_kernel_pads_right() {
        // omega = 2: one pad zero, placed on the right.
        let x = arr2(&[[1.0], [2.0], [3.0]]);
        let conv = Conv1d {
            kernel: Array3::from_shape_vec((2, 1, 1), vec![1.0, 10.0]).unwrap(),
            bias: arr1(&[0.0]),
        };
        let y = conv1d_preactivation(&x.view(), &conv, Padding::Same).unwrap();
        assert_eq!(y.column(0).to_vec(), vec![21.0, 32.0, 3.0]);
    }

    #[test]
    fn zero_lstm_is_zero() {
        let lstm = Lstm {
            w_ih: Array2::zeros((3, 8)),
            w_hh: Array2::zeros((2, 8)),
            bias: Array1::zeros(8),
        };
        let x = Array2::from_elem((5, 3), 0.7);
        let h = lstm_forward(&x.view(), &lstm).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_handles_large_scores() {
        let mut row = [1000.0, 1000.0, -1000.0];
        softmax_in_place(&mut row);
        assert!((row[0] - 0.5).abs() < 1e-15 && row[2] == 0.0);
    }
}
