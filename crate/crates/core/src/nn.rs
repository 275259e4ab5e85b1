//! Minimal dense networks with manual backpropagation and Adam.
//!
//! Batches are row-major in the sense that each row of an activation matrix
//! is one sample. A layer maps `X (B x in)` to `X W + 1 b'` with `W (in x out)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: DMatrix::zeros(input, output), b: DVector::zeros(output) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let w = DMatrix::from_fn(input, output, |_, _| rng.random_range(-limit..limit));
        Self { w, b: DVector::zeros(output) }
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.w;
        for mut row in y.row_iter_mut() {
            row += self.b.transpose();
        }
        y
    }
}

/// Fully connected network: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations retained for the backward pass.
pub struct ForwardCache {
    /// Input followed by each hidden layer's post-activation output.
    inputs: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

/// Parameter gradients with the same layout as [`Mlp::layers`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { layers: sizes.windows(2).map(|s| Dense::glorot(s[0], s[1], rng)).collect() })
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|s| Dense::zeros(s[0], s[1])).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h.apply(|v| *v = v.tanh());
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(&h);
            inputs.push(h);
            h = next;
            if i < last {
                h.apply(|v| *v = v.tanh());
            }
        }
        ForwardCache { inputs, output: h }
    }

    /// Parameter gradients given `dL/d output` (same shape as the output).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &DMatrix<f64>) -> Gradients {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let gw = input.tr_mul(&delta);
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.push(Dense { w: gw, b: gb });
            if i > 0 {
                let mut back = &delta * self.layers[i].w.transpose();
                // input of layer i is tanh(z) of layer i-1: dtanh = 1 - h^2
                back.zip_apply(input, |d, h| *d *= 1.0 - h * h);
                delta = back;
            }
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn to_doc(&self) -> MlpDoc {
        MlpDoc {
            sizes: self.sizes(),
            weights: self.layers.iter().map(|l| l.w.row_iter().map(|r| r.iter().copied().collect()).collect()).collect(),
            biases: self.layers.iter().map(|l| l.b.iter().copied().collect()).collect(),
        }
    }

    pub fn from_doc(doc: &MlpDoc) -> Result<Self> {
        let n = doc.sizes.len();
        if n < 2 || doc.weights.len() != n - 1 || doc.biases.len() != n - 1 {
            return Err(Error::Compatibility("network document has inconsistent layer counts".into()));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for (i, (w, b)) in doc.weights.iter().zip(&doc.biases).enumerate() {
            let (rows, cols) = (doc.sizes[i], doc.sizes[i + 1]);
            if w.len() != rows || w.iter().any(|r| r.len() != cols) || b.len() != cols {
                return Err(Error::Compatibility(format!("layer {i} does not match sizes {rows}x{cols}")));
            }
            layers.push(Dense { w: DMatrix::from_fn(rows, cols, |r, c| w[r][c]), b: DVector::from_column_slice(b) });
        }
        Ok(Self { layers })
    }
}

/// Serialisable network weights (row-major `in x out` matrices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDoc {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Mlp::from_doc(&MlpDoc::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let zeros = || net.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect();
        Self { cfg, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            update(layer.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice());
            update(layer.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice());
        }
    }
}

/// Shuffled mini-batch index lists for one epoch.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Copies the listed rows of `m` into a new matrix.
pub fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}
