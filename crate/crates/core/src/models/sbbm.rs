use rand::Rng;

use super::Batch;
use crate::diffcore::{
    ce_with_logit, sigmoid, softplus, Activation, DenseNet, Gradients, Optimizer, Tape,
};
use crate::error::{Error, Result};

/// Largest normalized incentive `predict` accepts; anything above is almost
/// certainly a raw currency amount that skipped normalization.
pub const MAX_NORMALIZED_T: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotone {
    /// `sigmoid(g(h(x)) t + p(h(x)))`
    Plain,
    /// `sigmoid(softplus(g(h(x))) t + p(h(x)))`, nondecreasing in `t`.
    Softplus,
}

impl Monotone {
    #[inline]
    fn slope(self, raw: f64) -> f64 {
        match self {
            Monotone::Plain => raw,
            Monotone::Softplus => softplus(raw),
        }
    }

    #[inline]
    fn slope_derivative(self, raw: f64) -> f64 {
        match self {
            Monotone::Plain => 1.0,
            Monotone::Softplus => sigmoid(raw),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbbmArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub activation: Activation,
}

impl SbbmArch {
    pub fn new(input: usize) -> Self {
        Self {
            input,
            hidden: vec![64, 64],
            latent: 32,
            activation: Activation::Relu,
        }
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.latent);
        w
    }
}

/// Inverse-propensity sample weights, clipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpwWeighting {
    pub clip_max: f64,
}

impl Default for IpwWeighting {
    fn default() -> Self {
        Self { clip_max: 100.0 }
    }
}

impl IpwWeighting {
    pub fn weight(&self, propensity: f64) -> Result<f64> {
        if !(propensity > 0.0 && propensity <= 1.0) {
            return Err(Error::invalid(format!(
                "propensity must lie in (0, 1], got {propensity}"
            )));
        }
        Ok((1.0 / propensity).min(self.clip_max))
    }
}

/// Semi-black-box response model: an encoder `h` and two linear heads on the
/// latent, `w_g` (treatment slope) and `w_p` (offset).
#[derive(Clone, Debug, PartialEq)]
pub struct SbbmModel {
    pub encoder: DenseNet,
    pub head_g: DenseNet,
    pub head_p: DenseNet,
    pub monotone: Monotone,
}

/// Gradients for the three parts of an [`SbbmModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct SbbmGrads {
    pub encoder: Gradients,
    pub head_g: Gradients,
    pub head_p: Gradients,
}

impl SbbmGrads {
    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.head_g.is_finite() && self.head_p.is_finite()
    }
}

#[derive(Clone, Debug)]
pub struct SupervisedLoss {
    pub loss: f64,
    pub grads: SbbmGrads,
}

pub(crate) fn check_t(t: f64) -> Result<()> {
    if !(0.0..=MAX_NORMALIZED_T).contains(&t) {
        return Err(Error::invalid(format!(
            "normalized incentive {t} outside [0, {MAX_NORMALIZED_T}]; normalize raw amounts first"
        )));
    }
    Ok(())
}

impl SbbmModel {
    pub fn new<R: Rng + ?Sized>(arch: &SbbmArch, monotone: Monotone, rng: &mut R) -> Result<Self> {
        let encoder = DenseNet::new(&arch.encoder_widths(), arch.activation, rng)?;
        let head_g = DenseNet::new(&[arch.latent, 1], Activation::Identity, rng)?;
        let head_p = DenseNet::new(&[arch.latent, 1], Activation::Identity, rng)?;
        Self::from_parts(encoder, head_g, head_p, monotone)
    }

    pub fn from_parts(
        encoder: DenseNet,
        head_g: DenseNet,
        head_p: DenseNet,
        monotone: Monotone,
    ) -> Result<Self> {
        let latent = encoder.output_width();
        for head in [&head_g, &head_p] {
            if head.input_width() != latent || head.output_width() != 1 {
                return Err(Error::invalid(
                    "heads must map the latent width to one value",
                ));
            }
        }
        Ok(Self {
            encoder,
            head_g,
            head_p,
            monotone,
        })
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn same_architecture(&self, other: &SbbmModel) -> bool {
        self.monotone == other.monotone
            && self.encoder.same_architecture(&other.encoder)
            && self.head_g.same_architecture(&other.head_g)
            && self.head_p.same_architecture(&other.head_p)
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.head_g.is_finite() && self.head_p.is_finite()
    }

    pub fn nets(&self) -> [&DenseNet; 3] {
        [&self.encoder, &self.head_g, &self.head_p]
    }

    pub fn nets_mut(&mut self) -> [&mut DenseNet; 3] {
        [&mut self.encoder, &mut self.head_g, &mut self.head_p]
    }

    /// Payment probability at normalized incentive `t`.
    pub fn predict(&self, features: &[f64], t: f64) -> Result<f64> {
        check_t(t)?;
        let z = self.encoder.forward(features)?;
        let g = self.head_g.forward(&z)?[0];
        let p = self.head_p.forward(&z)?[0];
        Ok(sigmoid(self.monotone.slope(g) * t + p))
    }

    /// Latent representation `h(x)` for every row of the batch.
    pub fn latent(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.encoder.forward_batch(&batch.features, batch.len())
    }

    /// Slope and offset for each row; the logit at `t` is `slope * t + offset`.
    pub fn slope_offset(&self, features: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.encoder.forward_batch(features, rows)?;
        let g = self.head_g.forward_batch(&z, rows)?;
        let p = self.head_p.forward_batch(&z, rows)?;
        Ok((g.into_iter().map(|v| self.monotone.slope(v)).collect(), p))
    }

    pub fn predict_batch(&self, batch: &Batch) -> Result<Vec<f64>> {
        for &t in &batch.t {
            check_t(t)?;
        }
        let (slope, offset) = self.slope_offset(&batch.features, batch.len())?;
        Ok(slope
            .iter()
            .zip(&offset)
            .zip(&batch.t)
            .map(|((s, p), t)| sigmoid(s * t + p))
            .collect())
    }

    /// Mean (optionally inverse-propensity weighted) cross-entropy over the
    /// batch: `(1/n) sum_i w_i CE(y_i, f(x_i, t_i))`.
    pub fn supervised_loss(
        &self,
        batch: &Batch,
        weighting: Option<&IpwWeighting>,
    ) -> Result<SupervisedLoss> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::invalid("supervised loss needs a nonempty batch"));
        }
        let weights: Vec<f64> = match weighting {
            None => vec![1.0; n],
            Some(w) => {
                let props = batch
                    .propensity
                    .as_ref()
                    .ok_or_else(|| Error::invalid("IPW weighting needs logged propensities"))?;
                props.iter().map(|&p| w.weight(p)).collect::<Result<_>>()?
            }
        };
        for &t in &batch.t {
            check_t(t)?;
        }
        let mut enc_tape = Tape::new();
        let mut g_tape = Tape::new();
        let mut p_tape = Tape::new();
        let z = self
            .encoder
            .forward_tape(&batch.features, n, &mut enc_tape)?;
        let g_raw = self.head_g.forward_tape(&z, n, &mut g_tape)?;
        let p = self.head_p.forward_tape(&z, n, &mut p_tape)?;

        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d_g = vec![0.0; n];
        let mut d_p = vec![0.0; n];
        for i in 0..n {
            let slope = self.monotone.slope(g_raw[i]);
            let logit = slope * batch.t[i] + p[i];
            let (l, dl) = ce_with_logit(logit, batch.y[i]);
            loss += weights[i] * l;
            let dlogit = weights[i] * dl * inv_n;
            d_p[i] = dlogit;
            d_g[i] = dlogit * batch.t[i] * self.monotone.slope_derivative(g_raw[i]);
        }
        loss *= inv_n;

        let (head_g, mut dz) = self.head_g.backward(&g_tape, &d_g)?;
        let (head_p, dz_p) = self.head_p.backward(&p_tape, &d_p)?;
        for (a, b) in dz.iter_mut().zip(&dz_p) {
            *a += b;
        }
        let (encoder, _) = self.encoder.backward(&enc_tape, &dz)?;
        Ok(SupervisedLoss {
            loss,
            grads: SbbmGrads {
                encoder,
                head_g,
                head_p,
            },
        })
    }
}

/// One optimizer per part of an [`SbbmModel`].
#[derive(Clone, Debug)]
pub struct SbbmOptimizer {
    pub encoder: Optimizer,
    pub head_g: Optimizer,
    pub head_p: Optimizer,
}

impl SbbmOptimizer {
    pub fn adam(model: &SbbmModel, lr: f64) -> Self {
        Self {
            encoder: Optimizer::adam(&model.encoder, lr),
            head_g: Optimizer::adam(&model.head_g, lr),
            head_p: Optimizer::adam(&model.head_p, lr),
        }
    }

    pub fn step(&mut self, model: &mut SbbmModel, grads: &SbbmGrads) -> Result<()> {
        self.encoder.step(&mut model.encoder, &grads.encoder)?;
        self.head_g.step(&mut model.head_g, &grads.head_g)?;
        self.head_p.step(&mut model.head_p, &grads.head_p)
    }
}
