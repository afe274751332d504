//! Model configuration, parameters, and the portable JSON weights format.
//!
//! ```text
//! { "schema_version": 1,
//!   "mode": "MultiModal" | "ForceOnly",
//!   "config": { "T": .., "omega": .., ... },
//!   "norm_stats": { "mean": [9], "std": [9] },
//!   "tensors": { "<name>": { "shape": [..], "data": [row-major f64] } } }
//! ```
//!
//! Tensor names are listed by [`tensor_names`]; per branch (`top`, `op`):
//! `conv1.kernel [omega, C_in, kappa]`, `conv1.bias [kappa]`, `conv2.*` likewise
//! with `C_in = kappa`, `lstm.w_ih [kappa, 4H]`, `lstm.w_hh [H, 4H]`,
//! `lstm.bias [4H]` (gate order input, forget, cell, output),
//! `proj.weight [H, d]` and `proj.bias [d]` (only when `H != d`),
//! `enc.{q,k,v,o}.weight [d, d]` and `.bias [d]`, `enc.ln1.{gamma,beta} [d]`,
//! `enc.ffn1.weight [d, F]`, `enc.ffn1.bias [F]`, `enc.ffn2.weight [F, d]`,
//! `enc.ffn2.bias [d]`, `enc.ln2.{gamma,beta} [d]`. Shared: `fuse.weight
//! [branches*d, fuse_hidden]`, `fuse.bias`, `head.weight [fuse_hidden, n_f]`,
//! `head.bias [n_f]`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv1d, EncoderLayer, LayerNorm, Linear, Lstm};
use crate::error::{Error, Result};
use crate::trace::{NormStats, N_C, N_F};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length.
    #[serde(rename = "T")]
    pub window: usize,
    /// Conv filter width.
    pub omega: usize,
    /// Conv filters per layer.
    pub kappa: usize,
    pub n_lstm: usize,
    /// Token width.
    pub d: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub ffn_hidden: usize,
    pub fuse_hidden: usize,
    pub n_f: usize,
    pub n_c: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 100,
            omega: 5,
            kappa: 64,
            n_lstm: 128,
            d: 128,
            n_heads: 8,
            d_head: 16,
            ffn_hidden: 256,
            fuse_hidden: 32,
            n_f: N_F,
            n_c: N_C,
        }
    }
}

impl ModelConfig {
    /// Tokens entering the encoder: `T - omega + 1`.
    pub fn n_tokens(&self) -> usize {
        self.window + 1 - self.omega
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("T", self.window),
            ("omega", self.omega),
            ("kappa", self.kappa),
            ("n_lstm", self.n_lstm),
            ("d", self.d),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("ffn_hidden", self.ffn_hidden),
            ("fuse_hidden", self.fuse_hidden),
        ];
        if let Some((name, _)) = pos.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Schema(format!("config field {name} must be >= 1")));
        }
        if self.d != self.n_heads * self.d_head {
            return Err(Error::Schema(format!(
                "d = {} must equal n_heads * d_head = {}",
                self.d,
                self.n_heads * self.d_head
            )));
        }
        if self.omega > self.window {
            return Err(Error::Schema(format!(
                "filter width {} exceeds window {}",
                self.omega, self.window
            )));
        }
        if self.n_f != N_F || self.n_c != N_C {
            return Err(Error::Schema(format!(
                "feature counts must be n_f={N_F}, n_c={N_C}; got {}, {}",
                self.n_f, self.n_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    MultiModal,
    ForceOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchWeights {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub lstm: Lstm,
    /// `None` when `n_lstm == d`.
    pub proj: Option<Linear>,
    pub encoder: EncoderLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub mode: Mode,
    pub norm_stats: NormStats,
    /// Force branch.
    pub top: BranchWeights,
    /// Command branch; absent in force-only mode.
    pub op: Option<BranchWeights>,
    pub fuse: Linear,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormFile {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    schema_version: u32,
    mode: Mode,
    config: ModelConfig,
    norm_stats: NormFile,
    tensors: BTreeMap<String, TensorFile>,
}

/// Expected tensor shapes for a config and mode, in file order.
pub fn tensor_names(config: &ModelConfig, mode: Mode) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let branches: &[(&str, usize)] = match mode {
        Mode::MultiModal => &[("top", N_F), ("op", N_C)],
        Mode::ForceOnly => &[("top", N_F)],
    };
    let ModelConfig {
        omega,
        kappa,
        n_lstm: h,
        d,
        ffn_hidden: f,
        fuse_hidden,
        n_f,
        ..
    } = *config;
    for &(b, c_in) in branches {
        let mut add = |name: &str, shape: Vec<usize>| out.push((format!("{b}.{name}"), shape));
        add("conv1.kernel", vec![omega, c_in, kappa]);
        add("conv1.bias", vec![kappa]);
        add("conv2.kernel", vec![omega, kappa, kappa]);
        add("conv2.bias", vec![kappa]);
        add("lstm.w_ih", vec![kappa, 4 * h]);
        add("lstm.w_hh", vec![h, 4 * h]);
        add("lstm.bias", vec![4 * h]);
        if h != d {
            add("proj.weight", vec![h, d]);
            add("proj.bias", vec![d]);
        }
        for m in ["q", "k", "v", "o"] {
            add(&format!("enc.{m}.weight"), vec![d, d]);
            add(&format!("enc.{m}.bias"), vec![d]);
        }
        add("enc.ln1.gamma", vec![d]);
        add("enc.ln1.beta", vec![d]);
        add("enc.ffn1.weight", vec![d, f]);
        add("enc.ffn1.bias", vec![f]);
        add("enc.ffn2.weight", vec![f, d]);
        add("enc.ffn2.bias", vec![d]);
        add("enc.ln2.gamma", vec![d]);
        add("enc.ln2.beta", vec![d]);
    }
    out.push(("fuse.weight".into(), vec![branches.len() * d, fuse_hidden]));
    out.push(("fuse.bias".into(), vec![fuse_hidden]));
    out.push(("head.weight".into(), vec![fuse_hidden, n_f]));
    out.push(("head.bias".into(), vec![n_f]));
    out
}

/// Tensor store keyed by name, used for both directions of the file format.
struct Tensors {
    map: BTreeMap<String, TensorFile>,
}

impl Tensors {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .map
            .remove(name)
            .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(Error::Schema(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        let n: usize = shape.iter().product();
        if t.data.len() != n {
            return Err(Error::Schema(format!(
                "tensor {name} holds {} values, shape {:?} needs {n}",
                t.data.len(),
                shape
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("tensor {name} has non-finite values")));
        }
        Ok(t.data)
    }

    fn vec1(&mut self, name: &str, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.take(name, &[n])?))
    }

    fn mat(&mut self, name: &str, r: usize, c: usize) -> Result<Array2<f64>> {
        let data = self.take(name, &[r, c])?;
        Ok(Array2::from_shape_vec((r, c), data).expect("length checked"))
    }

    fn cube(&mut self, name: &str, a: usize, b: usize, c: usize) -> Result<Array3<f64>> {
        let data = self.take(name, &[a, b, c])?;
        Ok(Array3::from_shape_vec((a, b, c), data).expect("length checked"))
    }

    fn linear(&mut self, name: &str, i: usize, o: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.mat(&format!("{name}.weight"), i, o)?,
            bias: self.vec1(&format!("{name}.bias"), o)?,
        })
    }

    fn put(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) {
        self.map.insert(name, TensorFile { shape, data });
    }

    fn put_linear(&mut self, name: &str, l: &Linear) {
        self.put(
            format!("{name}.weight"),
            l.weight.shape().to_vec(),
            l.weight.iter().copied().collect(),
        );
        self.put(format!("{name}.bias"), vec![l.bias.len()], l.bias.to_vec());
    }
}

fn read_branch(t: &mut Tensors, b: &str, c_in: usize, cfg: &ModelConfig) -> Result<BranchWeights> {
    let ModelConfig {
        omega,
        kappa,
        n_lstm: h,
        d,
        ffn_hidden: f,
        n_heads,
        ..
    } = *cfg;
    let conv = |t: &mut Tensors, n: &str, ci: usize| -> Result<Conv1d> {
        Ok(Conv1d {
            kernel: t.cube(&format!("{b}.{n}.kernel"), omega, ci, kappa)?,
            bias: t.vec1(&format!("{b}.{n}.bias"), kappa)?,
        })
    };
    let ln = |t: &mut Tensors, n: &str| -> Result<LayerNorm> {
        Ok(LayerNorm {
            gamma: t.vec1(&format!("{b}.enc.{n}.gamma"), d)?,
            beta: t.vec1(&format!("{b}.enc.{n}.beta"), d)?,
        })
    };
    Ok(BranchWeights {
        conv1: conv(t, "conv1", c_in)?,
        conv2: conv(t, "conv2", kappa)?,
        lstm: Lstm {
            w_ih: t.mat(&format!("{b}.lstm.w_ih"), kappa, 4 * h)?,
            w_hh: t.mat(&format!("{b}.lstm.w_hh"), h, 4 * h)?,
            bias: t.vec1(&format!("{b}.lstm.bias"), 4 * h)?,
        },
        proj: if h != d {
            Some(t.linear(&format!("{b}.proj"), h, d)?)
        } else {
            None
        },
        encoder: EncoderLayer {
            n_heads,
            q: t.linear(&format!("{b}.enc.q"), d, d)?,
            k: t.linear(&format!("{b}.enc.k"), d, d)?,
            v: t.linear(&format!("{b}.enc.v"), d, d)?,
            o: t.linear(&format!("{b}.enc.o"), d, d)?,
            ln1: ln(t, "ln1")?,
            ffn1: t.linear(&format!("{b}.enc.ffn1"), d, f)?,
            ffn2: t.linear(&format!("{b}.enc.ffn2"), f, d)?,
            ln2: ln(t, "ln2")?,
        },
    })
}

fn write_branch(t: &mut Tensors, b: &str, w: &BranchWeights) {
    for (n, c) in [("conv1", &w.conv1), ("conv2", &w.conv2)] {
        t.put(
            format!("{b}.{n}.kernel"),
            c.kernel.shape().to_vec(),
            c.kernel.iter().copied().collect(),
        );
        t.put(format!("{b}.{n}.bias"), vec![c.bias.len()], c.bias.to_vec());
    }
    let l = &w.lstm;
    t.put(format!("{b}.lstm.w_ih"), l.w_ih.shape().to_vec(), l.w_ih.iter().copied().collect());
    t.put(format!("{b}.lstm.w_hh"), l.w_hh.shape().to_vec(), l.w_hh.iter().copied().collect());
    t.put(format!("{b}.lstm.bias"), vec![l.bias.len()], l.bias.to_vec());
    if let Some(p) = &w.proj {
        t.put_linear(&format!("{b}.proj"), p);
    }
    let e = &w.encoder;
    for (n, lin) in [("q", &e.q), ("k", &e.k), ("v", &e.v), ("o", &e.o), ("ffn1", &e.ffn1), ("ffn2", &e.ffn2)] {
        t.put_linear(&format!("{b}.enc.{n}"), lin);
    }
    for (n, ln) in [("ln1", &e.ln1), ("ln2", &e.ln2)] {
        t.put(format!("{b}.enc.{n}.gamma"), vec![ln.gamma.len()], ln.gamma.to_vec());
        t.put(format!("{b}.enc.{n}.beta"), vec![ln.beta.len()], ln.beta.to_vec());
    }
}

fn norm_from_file(n: &NormFile) -> Result<NormStats> {
    let arr = |v: &[f64], what: &str| -> Result<[f64; 9]> {
        v.try_into()
            .map_err(|_| Error::Schema(format!("norm_stats.{what} must have 9 entries, got {}", v.len())))
    };
    let stats = NormStats {
        mean: arr(&n.mean, "mean")?,
        std: arr(&n.std, "std")?,
    };
    if stats.mean.iter().any(|v| !v.is_finite()) || stats.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Schema("norm_stats must be finite with std > 0".into()));
    }
    Ok(stats)
}

impl ModelWeights {
    pub fn from_json_str(s: &str) -> Result<Self> {
        // Check the version before strict field validation so a future
        // format reports a version error rather than a field error.
        let probe: serde_json::Value = serde_json::from_str(s)?;
        match probe.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Version(v as u32)),
            None => return Err(Error::Schema("missing schema_version".into())),
        }
        let file: WeightsFile = serde_json::from_value(probe)?;
        let config = file.config;
        config.validate()?;
        let norm_stats = norm_from_file(&file.norm_stats)?;
        let mut t = Tensors { map: file.tensors };
        let top = read_branch(&mut t, "top", N_F, &config)?;
        let op = match file.mode {
            Mode::MultiModal => Some(read_branch(&mut t, "op", N_C, &config)?),
            Mode::ForceOnly => None,
        };
        let n_branches = if op.is_some() { 2 } else { 1 };
        let fuse = t.linear("fuse", n_branches * config.d, config.fuse_hidden)?;
        let head = t.linear("head", config.fuse_hidden, config.n_f)?;
        if let Some(extra) = t.map.keys().next() {
            return Err(Error::Schema(format!("unexpected tensor {extra}")));
        }
        Ok(Self {
            config,
            mode: file.mode,
            norm_stats,
            top,
            op,
            fuse,
            head,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut t = Tensors {
            map: BTreeMap::new(),
        };
        write_branch(&mut t, "top", &self.top);
        if let Some(op) = &self.op {
            write_branch(&mut t, "op", op);
        }
        t.put_linear("fuse", &self.fuse);
        t.put_linear("head", &self.head);
        let file = WeightsFile {
            schema_version: SCHEMA_VERSION,
            mode: self.mode,
            config: self.config,
            norm_stats: NormFile {
                mean: self.norm_stats.mean.to_vec(),
                std: self.norm_stats.std.to_vec(),
            },
            tensors: t.map,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    /// Glorot-uniform initialization; biases zero except the LSTM forget
    /// gate, which starts at 1. Layer norms start as identity.
    pub fn random(config: ModelConfig, mode: Mode, norm_stats: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut branch = |c_in: usize| random_branch(&config, c_in, &mut rng);
        let top = branch(N_F);
        let op = match mode {
            Mode::MultiModal => Some(branch(N_C)),
            Mode::ForceOnly => None,
        };
        let nb = if op.is_some() { 2 } else { 1 };
        let fuse = random_linear(nb * config.d, config.fuse_hidden, &mut rng);
        let head = random_linear(config.fuse_hidden, config.n_f, &mut rng);
        Ok(Self {
            config,
            mode,
            norm_stats,
            top,
            op,
            fuse,
            head,
        })
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelWeights::from_json_str(&s)
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn random_mat(r: usize, c: usize, limit: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-limit..limit))
}

fn random_linear(i: usize, o: usize, rng: &mut ChaCha8Rng) -> Linear {
    Linear {
        weight: random_mat(i, o, glorot(i, o), rng),
        bias: Array1::zeros(o),
    }
}

fn random_branch(cfg: &ModelConfig, c_in: usize, rng: &mut ChaCha8Rng) -> BranchWeights {
    let ModelConfig {
        omega,
        kappa,
        n_lstm: h,
        d,
        ffn_hidden: f,
        n_heads,
        ..
    } = *cfg;
    let mut conv = |ci: usize| {
        let lim = glorot(omega * ci, omega * kappa);
        Conv1d {
            kernel: Array3::from_shape_simple_fn((omega, ci, kappa), || rng.random_range(-lim..lim)),
            bias: Array1::zeros(kappa),
        }
    };
    let conv1 = conv(c_in);
    let conv2 = conv(kappa);
    let mut bias = Array1::zeros(4 * h);
    bias.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
    let lstm = Lstm {
        w_ih: random_mat(kappa, 4 * h, glorot(kappa, 4 * h), rng),
        w_hh: random_mat(h, 4 * h, glorot(h, 4 * h), rng),
        bias,
    };
    let proj = (h != d).then(|| random_linear(h, d, rng));
    let ln = || LayerNorm {
        gamma: Array1::ones(d),
        beta: Array1::zeros(d),
    };
    let encoder = EncoderLayer {
        n_heads,
        q: random_linear(d, d, rng),
        k: random_linear(d, d, rng),
        v: random_linear(d, d, rng),
        o: random_linear(d, d, rng),
        ln1: ln(),
        ffn1: random_linear(d, f, rng),
        ffn2: random_linear(f, d, rng),
        ln2: ln(),
    };
    BranchWeights {
        conv1,
        conv2,
        lstm,
        proj,
        encoder,
    }
}
