//! Dense feed-forward networks with exact backpropagation and Adam.
//!
//! Hidden layers use ReLU, the output layer is affine. Weights are stored
//! row-major as `outputs x inputs`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `inputs[k]` is the input to layer `k`.
    inputs: Vec<Vec<f64>>,
    /// `pre[k]` is layer `k`'s affine output before the rectifier.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("non-empty network")
    }
}

/// Gradient buffers shaped like a [`DenseNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTape {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
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

    pub fn zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|g| *g == 0.0)
    }

    pub fn add_assign(&mut self, other: &GradientTape) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn check_shape(&self, other: &GradientTape) -> Result<()> {
        let same = self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.len() == b.len());
        if same {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.iter().count(),
                got: other.iter().count(),
            })
        }
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for v in self.weights.iter().chain(self.biases.iter()) {
            write_f64s(w, v)?;
        }
        Ok(())
    }

    fn read_into(&mut self, r: &mut impl Read) -> Result<()> {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            read_f64s(r, v)?;
        }
        Ok(())
    }
}

impl DenseNet {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.gen_range(-limit..=limit))
                        .collect(),
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        let mut sizes = vec![layers[0].inputs];
        for l in &layers {
            if l.inputs != *sizes.last().unwrap() {
                return Err(Error::Shape {
                    expected: *sizes.last().unwrap(),
                    got: l.inputs,
                });
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Shape {
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                });
            }
            sizes.push(l.outputs);
        }
        Ok(Self { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    /// Mutable access to parameter `index` in [`DenseNet::params`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let n = l.weights.len() + l.biases.len();
            if index < n {
                return if index < l.weights.len() {
                    &mut l.weights[index]
                } else {
                    &mut l.biases[index - l.weights.len()]
                };
            }
            index -= n;
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Shape {
                expected: self.input_size(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = affine(layer, &x);
            if k < last {
                relu_in_place(&mut y);
            }
            x = y;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let y = affine(layer, &x);
            let next = if k < last {
                let mut a = y.clone();
                relu_in_place(&mut a);
                a
            } else {
                Vec::new()
            };
            inputs.push(x);
            pre.push(y);
            x = next;
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Gradient of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::zeros_like(self);
        self.backward_into(cache, output_gradient, &mut tape)?;
        Ok(tape)
    }

    /// Like [`DenseNet::backward`] but accumulates into `tape`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
        tape: &mut GradientTape,
    ) -> Result<()> {
        if output_gradient.len() != self.output_size() {
            return Err(Error::Shape {
                expected: self.output_size(),
                got: output_gradient.len(),
            });
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::Shape {
                expected: self.layers.len(),
                got: cache.pre.len(),
            });
        }
        let mut delta = output_gradient.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache.inputs[k];
            let gw = &mut tape.weights[k];
            let gb = &mut tape.biases[k];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
            }
            if k == 0 {
                break;
            }
            // propagate through W^T and the previous layer's rectifier
            let prev_pre = &cache.pre[k - 1];
            let mut next = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                next.iter_mut().zip(row).for_each(|(n, w)| *n += d * w);
            }
            for (n, p) in next.iter_mut().zip(prev_pre) {
                if *p <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for s in &self.sizes {
            w.write_all(&(*s as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            write_f64s(w, &l.weights)?;
            write_f64s(w, &l.biases)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let count = read_u32(r)? as usize;
        if !(2..=64).contains(&count) {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {count}"
            )));
        }
        let sizes = (0..count)
            .map(|_| read_u32(r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|s| *s == 0 || *s > 1 << 16) {
            return Err(Error::Checkpoint(format!(
                "implausible layer sizes {sizes:?}"
            )));
        }
        let mut layers = Vec::with_capacity(count - 1);
        for w in sizes.windows(2) {
            let mut weights = vec![0.0; w[0] * w[1]];
            let mut biases = vec![0.0; w[1]];
            read_f64s(r, &mut weights)?;
            read_f64s(r, &mut biases)?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                biases,
            });
        }
        Self::from_layers(layers)
    }
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    layer
        .weights
        .chunks_exact(layer.inputs)
        .zip(&layer.biases)
        .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
        .collect()
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
}

/// Softmax over the entries where `mask` is true; masked entries get 0.
pub fn softmax_logits_to_probs(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape {
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(probs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: GradientTape,
    pub v: GradientTape,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        Self {
            m: GradientTape::zeros_like(net),
            v: GradientTape::zeros_like(net),
            t: 0,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.t.to_le_bytes())?;
        self.m.write_to(w)?;
        self.v.write_to(w)
    }

    pub fn read_for(net: &DenseNet, r: &mut impl Read) -> Result<Self> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let mut state = Self::new(net);
        state.t = u64::from_le_bytes(buf);
        state.m.read_into(r)?;
        state.v.read_into(r)?;
        Ok(state)
    }
}

/// One bias-corrected Adam update; descends along `tape`.
pub fn adam_step(
    net: &mut DenseNet,
    tape: &GradientTape,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    state.m.check_shape(tape)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (k, layer) in net.layers.iter_mut().enumerate() {
        let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
        let grads = tape.weights[k].iter().chain(tape.biases[k].iter());
        let ms = state.m.weights[k]
            .iter_mut()
            .chain(state.m.biases[k].iter_mut());
        let vs = state.v.weights[k]
            .iter_mut()
            .chain(state.v.biases[k].iter_mut());
        for (((p, g), m), v) in params.zip(grads).zip(ms).zip(vs) {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.step_size * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated parameters: {e}")))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(sizes: &[usize], seed: u64) -> DenseNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DenseNet::new(sizes, &mut rng).unwrap();
        // non-zero biases so every code path is exercised
        for l in net.layers_mut() {
            l.biases
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
        net
    }

    /// Reference forward pass with explicit index loops.
    fn reference_forward(net: &DenseNet, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let n = net.layers().len();
        for (k, l) in net.layers().iter().enumerate() {
            let mut y = vec![0.0; l.outputs];
            for o in 0..l.outputs {
                let mut acc = l.biases[o];
                for i in 0..l.inputs {
                    acc += l.weights[o * l.inputs + i] * x[i];
                }
                y[o] = if k + 1 < n { acc.max(0.0) } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = random_net(&[3, 5, 2], 0);
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = DenseNet::from_layers(vec![Layer {
            inputs: 3,
            outputs: 3,
            weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            biases: vec![0.0; 3],
        }])
        .unwrap();
        assert_eq!(
            net.forward(&[1.5, -2.0, 0.25]).unwrap(),
            vec![1.5, -2.0, 0.25]
        );
    }

    #[test]
    fn forward_matches_reference() {
        let net = random_net(&[4, 8, 3], 42);
        let input = [0.3, -1.2, 0.8, 2.0];
        let got = net.forward(&input).unwrap();
        let want = reference_forward(&net, &input);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
        assert_eq!(net.forward_cached(&input).unwrap().output(), got.as_slice());
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = random_net(&[4, 8, 3], 7);
        let input = [0.5, -0.3, 1.1, 0.2];
        let weights = [0.7, -1.3, 0.4];
        let loss = |n: &DenseNet| -> f64 {
            n.forward(&input)
                .unwrap()
                .iter()
                .zip(&weights)
                .map(|(o, w)| o * w)
                .sum()
        };
        let cache = net.forward_cached(&input).unwrap();
        let tape = net.backward(&cache, &weights).unwrap();
        let analytic: Vec<f64> = tape.iter().copied().collect();
        // tape order is all weights then all biases; map to param order
        let mut by_param = Vec::new();
        let mut wi = 0;
        let mut bi = 0;
        for l in net.layers() {
            by_param.extend_from_slice(&tape.weights[wi][..l.weights.len()]);
            by_param.extend_from_slice(&tape.biases[bi][..l.biases.len()]);
            wi += 1;
            bi += 1;
        }
        assert_eq!(analytic.len(), by_param.len());
        let h = 1e-5;
        for i in 0..net.param_count() {
            let orig = *net.param_mut(i);
            *net.param_mut(i) = orig + h;
            let up = loss(&net);
            *net.param_mut(i) = orig - h;
            let down = loss(&net);
            *net.param_mut(i) = orig;
            let fd = (up - down) / (2.0 * h);
            let a = by_param[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {a} fd {fd}");
        }
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let net = random_net(&[4, 8, 3], 9);
        let cache = net.forward_cached(&[0.1, 0.2, -0.3, 0.9]).unwrap();
        let g1 = [0.3, 0.0, -1.0];
        let g2 = [0.5, 2.0, 0.25];
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let t_sum = net.backward(&cache, &sum).unwrap();
        let mut t_parts = net.backward(&cache, &g1).unwrap();
        t_parts
            .add_assign(&net.backward(&cache, &g2).unwrap())
            .unwrap();
        for (a, b) in t_sum.iter().zip(t_parts.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        assert!(net.backward(&cache, &[0.0; 3]).unwrap().is_zero());
        assert!(net.backward(&cache, &[0.0; 2]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_logits_to_probs(&[2.0; 4], &[true; 4]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = softmax_logits_to_probs(&[0.0, 3f64.ln()], &[true; 2]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);

        // shifted closed form: exp(0), exp(1), exp(-1) over their sum
        let p = softmax_logits_to_probs(&[1000.0, 1001.0, 999.0], &[true; 3]).unwrap();
        let z = 1.0 + 1f64.exp() + (-1f64).exp();
        let want = [1.0 / z, 1f64.exp() / z, (-1f64).exp() / z];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }

        let p = softmax_logits_to_probs(&[5.0, 1.0, 1.0], &[false, true, true]).unwrap();
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
        assert!(matches!(
            softmax_logits_to_probs(&[1.0, 2.0], &[false, false]),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn softmax_extreme_logits_stay_finite() {
        let logits = [1e4, -1e4, 0.0, 9999.0, -3.5];
        let p = softmax_logits_to_probs(&logits, &[true; 5]).unwrap();
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = random_net(&[4, 8, 3], 1);
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let tape = GradientTape::zeros_like(&net);
        adam_step(&mut net, &tape, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let mut net = DenseNet::from_layers(vec![Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![0.5],
            biases: vec![0.0],
        }])
        .unwrap();
        let mut state = AdamState::new(&net);
        let mut tape = GradientTape::zeros_like(&net);
        tape.weights[0][0] = 2.0;
        let cfg = AdamConfig {
            step_size: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut net, &tape, &mut state, &cfg).unwrap();
        // m = 0.2, v = 0.004; m_hat = 2, v_hat = 4; step = 0.1 * 2 / (2 + 1e-8)
        let want = 0.5 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((net.layers()[0].weights[0] - want).abs() < 1e-15);
        assert_eq!(net.layers()[0].biases[0], 0.0);
    }

    #[test]
    fn identical_seeds_identical_nets_and_updates() {
        let mut a = random_net(&[4, 64, 64, 1], 5);
        let mut b = random_net(&[4, 64, 64, 1], 5);
        assert_eq!(a, b);
        for l in a.layers() {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= limit));
        }
        let cache = a.forward_cached(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let tape = a.backward(&cache, &[1.0]).unwrap();
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        adam_step(&mut a, &tape, &mut sa, &AdamConfig::default()).unwrap();
        adam_step(&mut b, &tape, &mut sb, &AdamConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_round_trip() {
        let net = random_net(&[4, 8, 3], 3);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        let back = DenseNet::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(net, back);
        assert!(DenseNet::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }
}
