//! Reference implementations and fixtures shared by the integration tests and
//! the acceptance runner. Nothing here calls into the code under test except
//! to build inputs or read back results.
#![allow(dead_code)]

use mirrornet::cmni::NeuronRef;
use mirrornet::neural::{Layer, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

/// Plain forward pass: ReLU hidden layers, softmax output, cross-entropy on
/// `label`. Written from scratch so it shares no code with the library.
pub fn naive_loss(layers: &[Layer], input: &[f64], label: usize) -> f64 {
    let mut a = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let mut z = vec![0.0; layer.outputs];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = layer.biases[o];
            for (k, x) in a.iter().enumerate() {
                s += layer.weights[o * layer.inputs + k] * x;
            }
            *zo = s;
        }
        if i + 1 < layers.len() {
            a = z.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            a = z;
        }
    }
    let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = a.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    log_sum - a[label]
}

/// Smallest |pre-activation| over all hidden units. Central differences are
/// only meaningful away from the ReLU kink.
pub fn min_hidden_margin(layers: &[Layer], input: &[f64]) -> f64 {
    let mut a = input.to_vec();
    let mut margin = f64::INFINITY;
    for layer in &layers[..layers.len() - 1] {
        let mut next = vec![0.0; layer.outputs];
        for (o, n) in next.iter_mut().enumerate() {
            let mut s = layer.biases[o];
            for (k, x) in a.iter().enumerate() {
                s += layer.weights[o * layer.inputs + k] * x;
            }
            margin = margin.min(s.abs());
            *n = s.max(0.0);
        }
        a = next;
    }
    margin
}

pub struct GradCheck {
    pub dims: Vec<usize>,
    pub parameters: usize,
    pub max_rel_err: f64,
}

/// Compare analytic gradients with central differences (step `h`) on a
/// random net with the given widths. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(dims: &[usize], seed: u64, h: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (net, input, label) = loop {
        let mut net = Network::he_uniform(dims, &mut rng).unwrap();
        for layer in net.layers_mut() {
            layer
                .biases
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(0.0..1.0)).collect();
        let label = rng.gen_range(0..dims[dims.len() - 1]);
        if min_hidden_margin(net.layers(), &input) > 1e-3 {
            break (net, input, label);
        }
    };
    let grads = net.backward(&input, label, None).unwrap();
    let mut layers = net.layers().to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut parameters = 0;
    let mut compare = |analytic: f64, numeric: f64| {
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel_err = max_rel_err.max((analytic - numeric).abs() / denom);
    };
    for l in 0..layers.len() {
        for i in 0..layers[l].weights.len() {
            let orig = layers[l].weights[i];
            layers[l].weights[i] = orig + h;
            let plus = naive_loss(&layers, &input, label);
            layers[l].weights[i] = orig - h;
            let minus = naive_loss(&layers, &input, label);
            layers[l].weights[i] = orig;
            compare(grads.weights[l][i], (plus - minus) / (2.0 * h));
            parameters += 1;
        }
        for i in 0..layers[l].biases.len() {
            let orig = layers[l].biases[i];
            layers[l].biases[i] = orig + h;
            let plus = naive_loss(&layers, &input, label);
            layers[l].biases[i] = orig - h;
            let minus = naive_loss(&layers, &input, label);
            layers[l].biases[i] = orig;
            compare(grads.biases[l][i], (plus - minus) / (2.0 * h));
            parameters += 1;
        }
    }
    GradCheck {
        dims: dims.to_vec(),
        parameters,
        max_rel_err,
    }
}

// ---------------------------------------------------------------------------
// Two-pass moments

#[derive(Debug, Clone, Copy)]
pub struct NaiveMoments {
    pub mean: f64,
    pub variance: f64,
    pub population_variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Mean first, then central sums. Skewness is g1 and kurtosis is excess g2,
/// both from population central moments.
pub fn naive_moments(xs: &[f64]) -> NaiveMoments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        s2 += d * d;
        s3 += d * d * d;
        s4 += d * d * d * d;
    }
    let m2 = s2 / n;
    NaiveMoments {
        mean,
        variance: s2 / (n - 1.0),
        population_variance: m2,
        skewness: (s3 / n) / m2.powf(1.5),
        kurtosis: (s4 / n) / (m2 * m2) - 3.0,
    }
}

/// Columns shaped like hidden activations: mixtures of exact zeros,
/// uniform and heavy-tailed positives, with assorted lengths and offsets.
pub fn random_column(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.gen_range(2..600);
    let zero_share = rng.gen_range(0.0..0.9);
    let scale = 10f64.powi(rng.gen_range(-3..2));
    let offset = if rng.gen_bool(0.3) {
        rng.gen_range(-5.0..5.0)
    } else {
        0.0
    };
    (0..len)
        .map(|_| {
            if rng.gen_bool(zero_share) {
                offset
            } else if rng.gen_bool(0.2) {
                offset + scale * (-rng.gen_range(1e-9f64..1.0).ln()).powi(2)
            } else {
                offset + scale * rng.gen_range(0.0..1.0)
            }
        })
        .collect()
}

/// `|a - b|` scaled by `max(1, |b|)`.
pub fn close(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Reference tables

/// (layers, neurons per layer, MNS total, CMNI), high-CMNI rows then low.
pub const CMNI_ROWS: [(usize, usize, f64, f64); 10] = [
    (2, 11, 0.31917, 0.01228),
    (1, 15, 0.22439, 0.01181),
    (2, 9, 0.24761, 0.01125),
    (1, 11, 0.16879, 0.01125),
    (1, 10, 0.15665, 0.01119),
    (2, 10, 0.01100, 0.00046),
    (3, 11, 0.00944, 0.00026),
    (3, 10, 0.01529, 0.00045),
    (3, 10, 0.00989, 0.00029),
    (3, 10, 0.01679, 0.00049),
];

/// Layer-1 mean activations of the 1×17 case study: none, frog, toad, both.
pub const LAYER1_MEANS: [[f64; 4]; 17] = [
    [0.04241, 0.04540, 0.03790, 0.03471],
    [0.04103, 0.04391, 0.03649, 0.03345],
    [0.02176, 0.01813, 0.01120, 0.02862],
    [0.00471, 0.04827, 0.03987, 0.10065],
    [0.04203, 0.04507, 0.03736, 0.03446],
    [0.04147, 0.04441, 0.03698, 0.03409],
    [0.04151, 0.04446, 0.03696, 0.03392],
    [0.00270, 0.05432, 0.03930, 0.12933],
    [0.02266, 0.02641, 0.01465, 0.01535],
    [0.02035, 0.01283, 0.07424, 0.01121],
    [0.04099, 0.04384, 0.03644, 0.03335],
    [0.03000, 0.03451, 0.09562, 0.03632],
    [0.02022, 0.06299, 0.03550, 0.10880],
    [0.01653, 0.05898, 0.03298, 0.10155],
    [0.04242, 0.04546, 0.03784, 0.03477],
    [0.02233, 0.01585, 0.01294, 0.00847],
    [0.04096, 0.04375, 0.03639, 0.03344],
];

/// Δ_frog, Δ_toad, MNS worked by hand from the reference means.
pub const HAND_DELTAS: [(usize, f64, f64, f64); 5] = [
    (3, 0.04356, 0.03516, 0.03516),
    (7, 0.05162, 0.03660, 0.03660),
    (9, -0.00752, 0.05389, -0.00752),
    (12, 0.04277, 0.01528, 0.01528),
    (13, 0.04245, 0.01645, 0.01645),
];

pub const MIRROR_EXEMPLARS: [usize; 4] = [3, 7, 12, 13];
pub const DIFFERENTIATOR_EXEMPLARS: [usize; 2] = [9, 11];

// ---------------------------------------------------------------------------
// Planted circuits

pub fn n(layer: usize, neuron: usize) -> NeuronRef {
    NeuronRef { layer, neuron }
}

pub const LEAP_WEIGHT: f64 = 9.6226;

/// 20-17-8-4 net. Layer 1→2 is background negative noise except for strong
/// positive projections from the four mirror candidates into L2N0. L2N0
/// projects 9.6226 to Leap and negative weights to every other action.
pub fn planted_mirror_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::zeros(&[20, 17, 8, 4]).unwrap();
    let layers = net.layers_mut();
    for w in layers[0].weights.iter_mut() {
        *w = rng.gen_range(-0.5..0.5);
    }
    for w in layers[1].weights.iter_mut() {
        *w = rng.gen_range(-0.09..-0.03);
    }
    for c in MIRROR_EXEMPLARS {
        layers[1].set_weight(0, c, 0.035);
    }
    for w in layers[2].weights.iter_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    for (a, w) in [-4.5877, -3.2544, LEAP_WEIGHT, -3.6689]
        .into_iter()
        .enumerate()
    {
        layers[2].set_weight(a, 0, w);
    }
    net
}

/// Same shape; L2N1 receives equal positive weights from three candidates and
/// two differentiators, and nothing else is positive.
pub fn planted_mixed_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::zeros(&[20, 17, 8, 4]).unwrap();
    let layers = net.layers_mut();
    for w in layers[0].weights.iter_mut() {
        *w = rng.gen_range(-0.5..0.5);
    }
    for w in layers[1].weights.iter_mut() {
        *w = rng.gen_range(-0.09..-0.03);
    }
    for c in [3, 7, 12] {
        layers[1].set_weight(1, c, 0.03);
    }
    for d in DIFFERENTIATOR_EXEMPLARS {
        layers[1].set_weight(1, d, 0.03);
    }
    for w in layers[2].weights.iter_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    net
}

pub fn planted_negative_net(seed: u64) -> Network {
    let mut net = planted_mirror_net(seed);
    for w in net.layers_mut()[1].weights.iter_mut() {
        *w = -w.abs() - 1e-3;
    }
    net
}

pub fn exemplar_candidates() -> Vec<NeuronRef> {
    MIRROR_EXEMPLARS.iter().map(|&i| n(1, i)).collect()
}

pub fn exemplar_differentiators() -> Vec<NeuronRef> {
    DIFFERENTIATOR_EXEMPLARS.iter().map(|&i| n(1, i)).collect()
}

// ---------------------------------------------------------------------------
// Evaluation fixtures

/// Rows whose first four cells one-hot encode the label, `counts[a]` rows of
/// action `a`, interleaved.
pub fn one_hot_dataset(counts: [usize; 4]) -> mirrornet::dataset::Dataset {
    use mirrornet::dataset::{Dataset, LabeledExample};
    use mirrornet::env::{Action, STATE_DIM};
    let mut left = counts;
    let mut examples = Vec::with_capacity(counts.iter().sum());
    while left.iter().any(|&c| c > 0) {
        for (a, c) in left.iter_mut().enumerate() {
            if *c > 0 {
                *c -= 1;
                let mut features = [0u8; STATE_DIM];
                features[a] = 1;
                features[10 + examples.len() % 7] = 2;
                examples.push(LabeledExample {
                    features,
                    label: Action::from_index(a).unwrap(),
                });
            }
        }
    }
    Dataset::new(examples)
}

/// Reads the one-hot cells straight through a 4-unit hidden layer.
pub fn perfect_net() -> Network {
    let mut net = Network::zeros(&[100, 4, 4]).unwrap();
    for a in 0..4 {
        net.layers_mut()[0].set_weight(a, a, 1.0);
        net.layers_mut()[1].set_weight(a, a, 3.0);
    }
    net
}

/// Ignores its input and always prefers `action`.
pub fn constant_net(action: usize) -> Network {
    let mut net = Network::zeros(&[100, 5, 4]).unwrap();
    net.layers_mut()[1].biases[action] = 1.0;
    net
}
