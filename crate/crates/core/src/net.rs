//! Dense bias-free ReLU multilayer perceptrons.
//!
//! Weights are stored per layer as row-major matrices with one row per
//! destination node and one column per source node. Layer `l` (zero based)
//! maps width `dims[l]` to width `dims[l + 1]`; there are `L + 1` weight
//! layers for `L` hidden layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Magnitude below which a freshly initialized skeleton weight is resampled.
pub const SKELETON_INIT_FLOOR: f64 = 0.05;

/// A fully connected ReLU network without bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

/// Per hidden layer, which nodes had a strictly positive pre-activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub layers: Vec<Vec<bool>>,
}

impl ActivationRecord {
    /// 0/1 indicator vectors, one per hidden layer.
    pub fn indicators(&self) -> Vec<Vec<u8>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|&a| a as u8).collect())
            .collect()
    }

    pub fn is_active(&self, hidden_layer: usize, node: usize) -> bool {
        self.layers[hidden_layer][node]
    }
}

/// Uniform initialization in `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub radius: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            radius: 0.5,
            seed: 0,
        }
    }
}

/// Checks the shape rules shared by every network in the crate.
pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 {
        return Err(Error::InvalidDims(format!(
            "need at least one hidden layer, got dims {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims(format!("zero width in {dims:?}")));
    }
    let hidden = &dims[1..dims.len() - 1];
    if hidden.iter().any(|&d| d != hidden[0]) {
        return Err(Error::InvalidDims(format!(
            "hidden layers must share one width, got {hidden:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<f64>>) -> Result<Self> {
        validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 {
            return Err(Error::InvalidDims(format!(
                "expected {} weight layers, got {}",
                dims.len() - 1,
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            let expected = dims[l] * dims[l + 1];
            if w.len() != expected {
                return Err(Error::DimensionMismatch {
                    layer: l,
                    expected,
                    got: w.len(),
                });
            }
        }
        Ok(Self { dims, weights })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let weights = dims.windows(2).map(|p| vec![0.0; p[0] * p[1]]).collect();
        Ok(Self { dims, weights })
    }

    /// Network filled with a constant value.
    pub fn constant(dims: Vec<usize>, value: f64) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        net.weights.iter_mut().flatten().for_each(|w| *w = value);
        Ok(net)
    }

    /// Uniform random weights; skeleton weights smaller than
    /// [`SKELETON_INIT_FLOOR`] in magnitude are redrawn.
    pub fn random(dims: Vec<usize>, init: InitConfig) -> Result<Self> {
        if !(init.radius > SKELETON_INIT_FLOOR && init.radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "init radius must exceed {SKELETON_INIT_FLOOR}, got {}",
                init.radius
            )));
        }
        let mut net = Self::zeros(dims)?;
        let skeleton = crate::paths::select_skeleton(&net.dims)?;
        let mut rng = rng::stream(init.seed, rng::salt::INIT);
        for l in 0..net.weights.len() {
            let cols = net.dims[l];
            for idx in 0..net.weights[l].len() {
                let (row, col) = (idx / cols, idx % cols);
                let mut w = rng.random_range(-init.radius..=init.radius);
                if skeleton.is_skeleton(l, row, col) {
                    while w.abs() < SKELETON_INIT_FLOOR {
                        w = rng.random_range(-init.radius..=init.radius);
                    }
                }
                net.weights[l][idx] = w;
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from its flattened weights.
    pub fn from_flat(dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(dims.to_vec())?;
        let m = net.num_weights();
        if flat.len() != m {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: m,
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for w in &mut net.weights {
            let n = w.len();
            w.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of hidden layers `L`.
    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn hidden_width(&self) -> usize {
        self.dims[1]
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Total weight count `m`.
    pub fn num_weights(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    /// Hidden node count `H`.
    pub fn num_hidden(&self) -> usize {
        self.hidden_layers() * self.hidden_width()
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.weights[l]
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.weights[layer][row * self.dims[layer] + col]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        let cols = self.dims[layer];
        self.weights[layer][row * cols + col] = value;
    }

    /// Index of `(layer, row, col)` in the flattened weight vector.
    pub fn flat_index(&self, layer: usize, row: usize, col: usize) -> usize {
        flat_offsets(&self.dims)[layer] + row * self.dims[layer] + col
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    /// Output and activation pattern for one input.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ActivationRecord)> {
        if x.len() != self.dims[0] {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.dims[0],
                got: x.len(),
            });
        }
        let mut record = Vec::with_capacity(self.hidden_layers());
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = matvec(w, self.dims[l + 1], self.dims[l], &h);
            if l < last {
                let gates: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
                for (v, &g) in z.iter_mut().zip(&gates) {
                    if !g {
                        *v = 0.0;
                    }
                }
                record.push(gates);
            }
            h = z;
        }
        Ok((h, ActivationRecord { layers: record }))
    }

    /// Output only.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(out, _)| out)
    }

    /// Mean softmax cross-entropy over the dataset.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        let mut total = 0.0;
        let mut buf = Buffers::new(&self.dims);
        for i in 0..data.len() {
            self.forward_into(data.input(i), &mut buf);
            total += cross_entropy(buf.acts.last().unwrap(), data.labels[i]);
        }
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of [`Mlp::loss`], shaped like the weights.
    pub fn gradient(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.loss_and_gradient(data).map(|(_, g)| g)
    }

    pub fn loss_and_gradient(&self, data: &Dataset) -> Result<(f64, Vec<Vec<f64>>)> {
        self.loss_and_gradient_on(data, &(0..data.len()).collect::<Vec<_>>())
    }

    /// Loss and gradient restricted to the samples in `batch`.
    pub fn loss_and_gradient_on(
        &self,
        data: &Dataset,
        batch: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check_data(data)?;
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut grad: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut buf = Buffers::new(&self.dims);
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        let n_layers = self.weights.len();
        for &i in batch {
            self.forward_into(data.input(i), &mut buf);
            let logits = buf.acts.last().unwrap();
            let label = data.labels[i];
            total += cross_entropy(logits, label);
            let mut delta = softmax(logits);
            delta[label] -= 1.0;
            delta.iter_mut().for_each(|d| *d *= scale);
            for l in (0..n_layers).rev() {
                let (rows, cols) = (self.dims[l + 1], self.dims[l]);
                let input = &buf.acts[l];
                let g = &mut grad[l];
                for r in 0..rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut g[r * cols..(r + 1) * cols];
                    for (gv, &a) in row.iter_mut().zip(input) {
                        *gv += d * a;
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut next = vec![0.0; cols];
                    for r in 0..rows {
                        let d = delta[r];
                        if d == 0.0 {
                            continue;
                        }
                        for (nv, &wv) in next.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                            *nv += d * wv;
                        }
                    }
                    // acts[l] holds post-ReLU values of hidden layer l; the
                    // gate is open exactly when that value is positive.
                    for (nv, &a) in next.iter_mut().zip(&buf.acts[l]) {
                        if a <= 0.0 {
                            *nv = 0.0;
                        }
                    }
                    delta = next;
                }
            }
        }
        Ok((total * scale, grad))
    }

    /// Fraction of samples whose arg-max output matches the label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        let mut buf = Buffers::new(&self.dims);
        let mut correct = 0usize;
        for i in 0..data.len() {
            self.forward_into(data.input(i), &mut buf);
            if argmax(buf.acts.last().unwrap()) == data.labels[i] {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                got: data.dim(),
            });
        }
        let classes = self.output_dim();
        if let Some((index, &label)) = data.labels.iter().enumerate().find(|(_, &y)| y >= classes)
        {
            return Err(Error::InvalidLabel {
                index,
                label,
                classes,
            });
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], buf: &mut Buffers) {
        buf.acts[0].copy_from_slice(x);
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let (rows, cols) = (self.dims[l + 1], self.dims[l]);
            let (head, tail) = buf.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            for r in 0..rows {
                let z = dot(&w[r * cols..(r + 1) * cols], input);
                out[r] = if l < last && z <= 0.0 { 0.0 } else { z };
            }
        }
    }
}

struct Buffers {
    acts: Vec<Vec<f64>>,
}

impl Buffers {
    fn new(dims: &[usize]) -> Self {
        Self {
            acts: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }
}

/// Start offset of each weight layer in the flattened vector.
pub fn flat_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len() - 1);
    let mut acc = 0;
    for p in dims.windows(2) {
        offsets.push(acc);
        acc += p[0] * p[1];
    }
    offsets
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| dot(&w[r * cols..(r + 1) * cols], x))
        .collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} input values do not form {} rows of width {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(pos) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature in row {}",
                pos / dim
            )));
        }
        Ok(Self {
            inputs,
            labels,
            dim,
            name: name.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDataset("ragged input rows".into()));
        }
        Self::new(rows.concat(), labels, dim, name)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// The dataset repeated `k` times.
    pub fn repeated(&self, k: usize) -> Self {
        Self {
            inputs: self.inputs.repeat(k),
            labels: self.labels.repeat(k),
            dim: self.dim,
            name: format!("{}x{k}", self.name),
        }
    }

    /// Subset by sample indices.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            inputs.extend_from_slice(self.input(i));
        }
        Self {
            inputs,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
            name: self.name.clone(),
        }
    }
}
