use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to the target probability inside the log.
pub const LOSS_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite parameter in layer {layer}")]
    NonFinite { layer: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

/// Dense layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn set_weight(&mut self, out: usize, inp: usize, value: f64) {
        self.weights[out * self.inputs + inp] = value;
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }
}

/// Feed-forward classifier: ReLU hidden layers, softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Per-hidden-layer multipliers: 0 for dropped units, `1/(1-rate)` for kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub scales: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn sample<R: Rng + ?Sized>(hidden_dims: &[usize], rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - rate);
        let scales = hidden_dims
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect()
            })
            .collect();
        DropoutMask { scales }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub probabilities: Vec<f64>,
    /// Post-ReLU (and post-dropout, when masked) activations per hidden layer.
    pub hidden: Vec<Vec<f64>>,
}

/// Gradient buffers with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            w.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Reusable buffers for [`Network::accumulate`].
#[derive(Debug, Clone)]
pub struct Scratch {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn new(net: &Network) -> Self {
        let outs: Vec<usize> = net.layers.iter().map(|l| l.outputs).collect();
        Scratch {
            pre: outs.iter().map(|&n| vec![0.0; n]).collect(),
            post: outs.iter().map(|&n| vec![0.0; n]).collect(),
            delta: outs.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Output probabilities from the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("network has layers")
    }

    /// Hidden activations from the last forward pass.
    pub fn hidden(&self) -> &[Vec<f64>] {
        &self.post[..self.post.len() - 1]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Cross-entropy of one prediction: `-ln(max(p[label], 1e-12))`.
pub fn loss(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(LOSS_EPSILON).ln()
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn affine(layer: &Layer, input: &[f64], out: &mut [f64]) {
    for (o, (row, b)) in out
        .iter_mut()
        .zip(layer.weights.chunks_exact(layer.inputs).zip(&layer.biases))
    {
        let mut acc = *b;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *o = acc;
    }
}

impl Network {
    /// All-zero network with the given layer widths, input first.
    pub fn zeros(dims: &[usize]) -> Result<Self, NetworkError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NetworkError::Dimension(format!("bad layer dims {dims:?}")));
        }
        Ok(Network {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// He-style uniform init: weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, NetworkError> {
        let mut net = Network::zeros(dims)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Dimension("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0
                || l.outputs == 0
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(NetworkError::Dimension(format!(
                    "layer {i} declares {}x{} but holds {} weights and {} biases",
                    l.outputs,
                    l.inputs,
                    l.weights.len(),
                    l.biases.len()
                )));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(NetworkError::Dimension(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.inputs,
                    i - 1,
                    layers[i - 1].outputs
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|x| !x.is_finite()) {
                return Err(NetworkError::NonFinite { layer: i });
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Widths from input to output, e.g. `[100, 17, 17, 4]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|x| x.is_finite()))
    }

    fn check(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<(), NetworkError> {
        if input.len() != self.input_dim() {
            return Err(NetworkError::Dimension(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if let Some(mask) = mask {
            let hidden = self.hidden_dims();
            let shape: Vec<usize> = mask.scales.iter().map(Vec::len).collect();
            if shape != hidden {
                return Err(NetworkError::Dimension(format!(
                    "dropout mask shape {shape:?} does not match hidden dims {hidden:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        input: &[f64],
        mask: Option<&DropoutMask>,
    ) -> Result<ForwardPass, NetworkError> {
        self.check(input, mask)?;
        let mut scratch = Scratch::new(self);
        self.forward_into(input, mask, &mut scratch);
        let last = self.layers.len() - 1;
        Ok(ForwardPass {
            probabilities: scratch.post[last].clone(),
            hidden: scratch.post[..last].to_vec(),
        })
    }

    /// Inference-mode predicted class.
    pub fn predict(&self, input: &[f64], scratch: &mut Scratch) -> usize {
        self.forward_into(input, None, scratch);
        argmax(&scratch.post[self.layers.len() - 1])
    }

    /// Fill `scratch.post` with activations; the last entry holds probabilities.
    pub fn forward_into(&self, input: &[f64], mask: Option<&DropoutMask>, scratch: &mut Scratch) {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.post.split_at_mut(i);
            let src: &[f64] = if i == 0 { input } else { &before[i - 1] };
            let pre = &mut scratch.pre[i];
            affine(layer, src, pre);
            let post = &mut after[0];
            if i == last {
                post.copy_from_slice(pre);
                softmax_in_place(post);
            } else {
                for (j, (p, z)) in post.iter_mut().zip(pre.iter()).enumerate() {
                    let mut a = z.max(0.0);
                    if let Some(m) = mask {
                        a *= m.scales[i][j];
                    }
                    *p = a;
                }
            }
        }
    }

    /// Add the gradient of the loss for one example into `grads` and return
    /// that example's loss.
    pub fn accumulate(
        &self,
        input: &[f64],
        label: usize,
        mask: Option<&DropoutMask>,
        grads: &mut Gradients,
        scratch: &mut Scratch,
    ) -> f64 {
        self.forward_into(input, mask, scratch);
        let last = self.layers.len() - 1;
        let probs = &scratch.post[last];
        let loss_value = loss(probs, label);
        let out_delta = &mut scratch.delta[last];
        out_delta.copy_from_slice(probs);
        out_delta[label] -= 1.0;

        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            let (lower, upper) = scratch.delta.split_at_mut(i);
            let delta = &upper[0];
            let src: &[f64] = if i == 0 { input } else { &scratch.post[i - 1] };
            let gw = &mut grads.weights[i];
            let gb = &mut grads.biases[i];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, x) in row.iter_mut().zip(src) {
                        *g += d * x;
                    }
                }
            }
            if i > 0 {
                let prev = &mut lower[i - 1];
                prev.fill(0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (p, w) in prev.iter_mut().zip(layer.row(o)) {
                            *p += d * w;
                        }
                    }
                }
                let pre = &scratch.pre[i - 1];
                for (j, p) in prev.iter_mut().enumerate() {
                    let mut gate = if pre[j] > 0.0 { 1.0 } else { 0.0 };
                    if let Some(m) = mask {
                        gate *= m.scales[i - 1][j];
                    }
                    *p *= gate;
                }
            }
        }
        loss_value
    }

    /// Exact gradients of the single-example loss.
    pub fn backward(
        &self,
        input: &[f64],
        label: usize,
        mask: Option<&DropoutMask>,
    ) -> Result<Gradients, NetworkError> {
        self.check(input, mask)?;
        if label >= self.output_dim() {
            return Err(NetworkError::Label {
                label,
                classes: self.output_dim(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut scratch = Scratch::new(self);
        self.accumulate(input, label, mask, &mut grads, &mut scratch);
        Ok(grads)
    }
}
