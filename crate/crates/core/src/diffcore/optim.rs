use super::dense::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// `w <- w - lr * g`. Used by analytic tests.
    Plain,
    /// Adaptive first/second-moment update with bias correction.
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-network optimizer state. Moment buffers mirror the network's shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub lr: f64,
    pub kind: OptimizerKind,
    first: Gradients,
    second: Gradients,
    steps: u64,
}

impl Optimizer {
    pub fn new(net: &DenseNet, lr: f64, kind: OptimizerKind) -> Self {
        Self {
            lr,
            kind,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            steps: 0,
        }
    }

    pub fn adam(net: &DenseNet, lr: f64) -> Self {
        Self::new(net, lr, OptimizerKind::adam())
    }

    pub fn plain(net: &DenseNet, lr: f64) -> Self {
        Self::new(net, lr, OptimizerKind::Plain)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(net) || !self.first.same_shape(net) {
            return Err(Error::invalid(
                "gradient/optimizer shapes do not match the network",
            ));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Plain => {
                for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= self.lr * d;
                    }
                    for (w, d) in layer.bias.iter_mut().zip(&g.bias) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let lr = self.lr;
                let update = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                };
                for (((layer, g), m), v) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(self.first.layers.iter_mut())
                    .zip(self.second.layers.iter_mut())
                {
                    update(
                        &mut layer.weights,
                        &g.weights,
                        &mut m.weights,
                        &mut v.weights,
                    );
                    update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, Dense};

    fn scalar_net(w: f64) -> DenseNet {
        let mut l = Dense::zeros(1, 1);
        l.weights[0] = w;
        DenseNet::from_layers(vec![l], Activation::Identity).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        let mut opt = Optimizer::adam(&net, 1e-3);
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn plain_step_on_square() {
        // f(w) = w^2, f'(1) = 2
        let mut net = scalar_net(1.0);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[0] = 2.0 * net.param(0);
        let mut opt = Optimizer::plain(&net, 0.1);
        opt.step(&mut net, &g).unwrap();
        assert!((net.param(0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        // f(a, b) = 3 (a - 1)^2 + 0.5 (b + 2)^2, parameters held as weight + bias.
        let mut l = Dense::zeros(1, 1);
        l.weights[0] = -3.0;
        l.bias[0] = 4.0;
        let mut net = DenseNet::from_layers(vec![l], Activation::Identity).unwrap();
        let mut opt = Optimizer::adam(&net, 0.05);
        for _ in 0..500 {
            let (a, b) = (net.param(0), net.param(1));
            let mut g = Gradients::zeros_like(&net);
            g.layers[0].weights[0] = 6.0 * (a - 1.0);
            g.layers[0].bias[0] = b + 2.0;
            opt.step(&mut net, &g).unwrap();
        }
        let dist = ((net.param(0) - 1.0).powi(2) + (net.param(1) + 2.0).powi(2)).sqrt();
        assert!(dist < 1e-3, "distance {dist}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net = scalar_net(1.0);
        let other = DenseNet::zeros(&[2, 1], Activation::Identity).unwrap();
        let g = Gradients::zeros_like(&other);
        let mut opt = Optimizer::adam(&net, 0.1);
        assert!(matches!(
            opt.step(&mut net, &g),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut net = scalar_net(0.3);
            let mut opt = Optimizer::adam(&net, 0.01);
            for i in 0..50 {
                let mut g = Gradients::zeros_like(&net);
                g.layers[0].weights[0] = (i as f64 * 0.7).sin();
                opt.step(&mut net, &g).unwrap();
            }
            net.param(0).to_bits()
        };
        assert_eq!(run(), run());
    }
}
