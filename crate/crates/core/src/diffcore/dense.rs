//! Fully connected networks with batched forward/backward passes.
//!
//! Batches are flat row-major buffers: a batch of `n` vectors of width `w`
//! occupies `n * w` contiguous values. Weights are stored `inputs x outputs`
//! row-major so that both the forward pass and the weight gradient reduce to
//! contiguous axpy loops.

use rand::Rng;

use super::activation::Activation;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs x outputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Scaled uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, x: &[f64], batch: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(batch * self.outputs);
        for row in x.chunks_exact(self.inputs).take(batch) {
            let start = out.len();
            out.extend_from_slice(&self.bias);
            let dst = &mut out[start..];
            for (xi, wrow) in row.iter().zip(self.weights.chunks_exact(self.outputs)) {
                if *xi == 0.0 {
                    continue;
                }
                for (o, w) in dst.iter_mut().zip(wrow) {
                    *o += xi * w;
                }
            }
        }
    }
}

/// A feed-forward network: `hidden` after every layer but the last, the last
/// layer linear.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    hidden: Activation,
}

/// Forward-pass record needed by [`DenseNet::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    recorded: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradient buffers shaped exactly like a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> f64 {
        *flat_ref(&self.layers, index)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn same_shape(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.inputs == l.inputs && g.outputs == l.outputs)
    }
}

fn flat_ref(layers: &[Dense], mut index: usize) -> &f64 {
    for l in layers {
        if index < l.weights.len() {
            return &l.weights[index];
        }
        index -= l.weights.len();
        if index < l.bias.len() {
            return &l.bias[index];
        }
        index -= l.bias.len();
    }
    panic!("parameter index out of range");
}

fn flat_mut(layers: &mut [Dense], mut index: usize) -> &mut f64 {
    for l in layers {
        if index < l.weights.len() {
            return &mut l.weights[index];
        }
        index -= l.weights.len();
        if index < l.bias.len() {
            return &mut l.bias[index];
        }
        index -= l.bias.len();
    }
    panic!("parameter index out of range");
}

impl DenseNet {
    /// Randomly initialised network over `widths = [input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { layers, hidden })
    }

    pub fn zeros(widths: &[usize], hidden: Activation) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self { layers, hidden })
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for l in &layers {
            if l.inputs == 0
                || l.outputs == 0
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::invalid("layer buffers do not match its shape"));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid(format!(
                    "layer shapes do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers, hidden })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flat parameter access in layer order, weights before bias.
    pub fn param(&self, index: usize) -> f64 {
        *flat_ref(&self.layers, index)
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *flat_mut(&mut self.layers, index) = value;
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// Same layer shapes and activation.
    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.hidden == other.hidden && self.widths() == other.widths()
    }

    fn check_batch(&self, x: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.input_width() {
            return Err(Error::invalid(format!(
                "input of length {} is not a batch of {} vectors of width {}",
                x.len(),
                batch,
                self.input_width()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(x, 1)
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_batch(x, batch)?;
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, batch, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    *v = self.hidden.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass that records what [`DenseNet::backward`] needs.
    pub fn forward_tape(&self, x: &[f64], batch: usize, tape: &mut Tape) -> Result<Vec<f64>> {
        self.check_batch(x, batch)?;
        let n = self.layers.len();
        tape.batch = batch;
        tape.inputs.resize_with(n, Vec::new);
        tape.pre.resize_with(n, Vec::new);
        tape.inputs[0].clear();
        tape.inputs[0].extend_from_slice(x);
        for i in 0..n {
            self.layers[i].forward_into(&tape.inputs[i], batch, &mut tape.pre[i]);
            if i + 1 < n {
                let act = self.hidden;
                let dst = &mut tape.inputs[i + 1];
                dst.clear();
                dst.extend(tape.pre[i].iter().map(|&z| act.apply(z)));
            }
        }
        tape.recorded = true;
        Ok(tape.pre[n - 1].clone())
    }

    /// Back-propagates `upstream = dL/d(output)` through the recorded batch.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if !tape.recorded || tape.pre.len() != self.layers.len() {
            return Err(Error::State("backward called before forward".into()));
        }
        let batch = tape.batch;
        if upstream.len() != batch * self.output_width() {
            return Err(Error::invalid(format!(
                "upstream gradient of length {} does not match output batch {}x{}",
                upstream.len(),
                batch,
                self.output_width()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let input = &tape.inputs[i];
            for (x_row, d_row) in input
                .chunks_exact(layer.inputs)
                .zip(delta.chunks_exact(layer.outputs))
            {
                for (o, d) in g.bias.iter_mut().zip(d_row) {
                    *o += d;
                }
                for (xi, grow) in x_row.iter().zip(g.weights.chunks_exact_mut(layer.outputs)) {
                    if *xi == 0.0 {
                        continue;
                    }
                    for (gw, d) in grow.iter_mut().zip(d_row) {
                        *gw += xi * d;
                    }
                }
            }
            let mut dx = vec![0.0; batch * layer.inputs];
            for (dx_row, d_row) in dx
                .chunks_exact_mut(layer.inputs)
                .zip(delta.chunks_exact(layer.outputs))
            {
                for (dxi, wrow) in dx_row
                    .iter_mut()
                    .zip(layer.weights.chunks_exact(layer.outputs))
                {
                    let mut s = 0.0;
                    for (w, d) in wrow.iter().zip(d_row) {
                        s += w * d;
                    }
                    *dxi = s;
                }
            }
            if i > 0 {
                // dx is w.r.t. the activation of layer i-1; push through it.
                let pre = &tape.pre[i - 1];
                let act = &tape.inputs[i];
                for ((v, &z), &a) in dx.iter_mut().zip(pre).zip(act) {
                    *v *= self.hidden.derivative(z, a);
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::invalid("widths need an input and an output"));
    }
    if widths.contains(&0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_like_relu_net() {
        let mut l1 = Dense::zeros(1, 1);
        l1.weights[0] = 1.0;
        let mut l2 = Dense::zeros(1, 1);
        l2.weights[0] = 1.0;
        let net = DenseNet::from_layers(vec![l1, l2], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = DenseNet::zeros(&[3, 2], Activation::Relu).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
        let bad = DenseNet::from_layers(
            vec![Dense::zeros(2, 3), Dense::zeros(2, 1)],
            Activation::Relu,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn random_net_stays_finite_on_bounded_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(&[8, 64, 64, 32], Activation::Relu, &mut rng).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(net.forward(&x).unwrap().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = DenseNet::new(&[8, 64], Activation::Relu, &mut rng).unwrap();
        let limit = (6.0f64 / 72.0).sqrt();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let net = DenseNet::zeros(&[2, 1], Activation::Relu).unwrap();
        let err = net.backward(&Tape::new(), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn linear_layer_weight_gradient_is_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNet::new(&[3, 1], Activation::Relu, &mut rng).unwrap();
        let x = [0.5, -1.5, 2.0];
        let mut tape = Tape::new();
        net.forward_tape(&x, 1, &mut tape).unwrap();
        let (g, dx) = net.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, x.to_vec());
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx, net.layers()[0].weights);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = DenseNet::new(&[4, 6, 3], Activation::Relu, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut tape = Tape::new();
        net.forward_tape(&x, 2, &mut tape).unwrap();
        let (g, dx) = net.backward(&tape, &[0.0; 6]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_forward_matches_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = DenseNet::new(&[3, 5, 2], Activation::Tanh, &mut rng).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let all = net.forward_batch(&x, 4).unwrap();
        let mut tape = Tape::new();
        let taped = net.forward_tape(&x, 4, &mut tape).unwrap();
        assert_eq!(all, taped);
        for r in 0..4 {
            let one = net.forward(&x[r * 3..r * 3 + 3]).unwrap();
            assert_eq!(one, all[r * 2..r * 2 + 2].to_vec());
        }
    }
}
