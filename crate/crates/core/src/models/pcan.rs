//! Dual-tower price-bias correction network: a BiasedNet and an UnbiasedNet
//! (both [`SbbmModel`]s) and a discriminator that tells their latent
//! representations apart.

use rand::Rng;

use super::sbbm::{Monotone, SbbmArch, SbbmModel};
use super::Batch;
use crate::diffcore::{ce_with_logit, Activation, DenseNet, Gradients, Tape};
use crate::error::{Error, Result};

/// Form of the generator objective for the BiasedNet encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorLoss {
    /// Minimize `-E log d(h_b(x))`.
    NonSaturating,
    /// Minimize `E log(1 - d(h_b(x)))`.
    Saturating,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcanModel {
    pub biased: SbbmModel,
    pub unbiased: SbbmModel,
    /// Latent -> one logit; `d = sigmoid(logit)` is the probability that a
    /// representation came from the UnbiasedNet.
    pub discriminator: DenseNet,
}

#[derive(Clone, Debug)]
pub struct DiscLoss {
    /// `-mean log d(h_u(x))` over the unbiased batch.
    pub unbiased_side: f64,
    /// `-mean log(1 - d(h_b(x)))` over the biased batch.
    pub biased_side: f64,
    pub grads: Gradients,
}

impl DiscLoss {
    pub fn total(&self) -> f64 {
        self.unbiased_side + self.biased_side
    }
}

#[derive(Clone, Debug)]
pub struct GenLoss {
    pub loss: f64,
    /// Gradients for the BiasedNet encoder only.
    pub encoder: Gradients,
}

impl PcanModel {
    pub fn new<R: Rng + ?Sized>(
        arch: &SbbmArch,
        monotone: Monotone,
        disc_hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let biased = SbbmModel::new(arch, monotone, rng)?;
        let unbiased = SbbmModel::new(arch, monotone, rng)?;
        let mut widths = vec![arch.latent];
        widths.extend(disc_hidden);
        widths.push(1);
        let discriminator = DenseNet::new(&widths, Activation::Relu, rng)?;
        Self::from_parts(biased, unbiased, discriminator)
    }

    pub fn from_parts(
        biased: SbbmModel,
        unbiased: SbbmModel,
        discriminator: DenseNet,
    ) -> Result<Self> {
        if biased.latent_width() != unbiased.latent_width() {
            return Err(Error::invalid("towers must share the latent width"));
        }
        if discriminator.input_width() != biased.latent_width() || discriminator.output_width() != 1
        {
            return Err(Error::invalid(
                "discriminator must map the latent width to one logit",
            ));
        }
        Ok(Self {
            biased,
            unbiased,
            discriminator,
        })
    }

    /// Deployable prediction: the BiasedNet.
    pub fn predict(&self, features: &[f64], t: f64) -> Result<f64> {
        self.biased.predict(features, t)
    }

    /// Discriminator loss with `h_u` as class 1 and `h_b` as class 0.
    /// Only the discriminator receives gradients.
    pub fn disc_loss(&self, batch_u: &Batch, batch_b: &Batch) -> Result<DiscLoss> {
        if batch_u.is_empty() || batch_b.is_empty() {
            return Err(Error::invalid(
                "discriminator loss needs both batches nonempty",
            ));
        }
        let hu = self.unbiased.latent(batch_u)?;
        let hb = self.biased.latent(batch_b)?;
        let (unbiased_side, mut grads) = self.disc_side(&hu, batch_u.len(), 1.0)?;
        let (biased_side, g_b) = self.disc_side(&hb, batch_b.len(), 0.0)?;
        grads.add_assign(&g_b);
        Ok(DiscLoss {
            unbiased_side,
            biased_side,
            grads,
        })
    }

    fn disc_side(&self, latent: &[f64], n: usize, target: f64) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let logits = self.discriminator.forward_tape(latent, n, &mut tape)?;
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let upstream: Vec<f64> = logits
            .iter()
            .map(|&s| {
                let (l, dl) = ce_with_logit(s, target);
                loss += l;
                dl * inv_n
            })
            .collect();
        let (grads, _) = self.discriminator.backward(&tape, &upstream)?;
        Ok((loss * inv_n, grads))
    }

    /// Generator loss on the biased batch, differentiated through the frozen
    /// discriminator into the BiasedNet encoder.
    pub fn gen_loss(&self, batch_b: &Batch, form: GeneratorLoss) -> Result<GenLoss> {
        let n = batch_b.len();
        if n == 0 {
            return Err(Error::invalid("generator loss needs a nonempty batch"));
        }
        let mut enc_tape = Tape::new();
        let mut disc_tape = Tape::new();
        let hb = self
            .biased
            .encoder
            .forward_tape(&batch_b.features, n, &mut enc_tape)?;
        let logits = self.discriminator.forward_tape(&hb, n, &mut disc_tape)?;
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let upstream: Vec<f64> = logits
            .iter()
            .map(|&s| match form {
                GeneratorLoss::NonSaturating => {
                    let (l, dl) = ce_with_logit(s, 1.0);
                    loss += l;
                    dl * inv_n
                }
                GeneratorLoss::Saturating => {
                    let (l, dl) = ce_with_logit(s, 0.0);
                    loss -= l;
                    -dl * inv_n
                }
            })
            .collect();
        let (_, d_latent) = self.discriminator.backward(&disc_tape, &upstream)?;
        let (encoder, _) = self.biased.encoder.backward(&enc_tape, &d_latent)?;
        Ok(GenLoss {
            loss: loss * inv_n,
            encoder,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Optimizer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Batch {
        Batch {
            features: (0..rows * dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
            dim,
            t: vec![0.5; rows],
            y: vec![1.0; rows],
            propensity: None,
        }
    }

    fn small(rng: &mut ChaCha8Rng) -> PcanModel {
        let arch = SbbmArch {
            input: 3,
            hidden: vec![8],
            latent: 4,
            activation: Activation::Relu,
        };
        PcanModel::new(&arch, Monotone::Softplus, &[6], rng).unwrap()
    }

    fn zero_last_layer(net: &mut DenseNet) {
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|w| *w = 0.0);
    }

    #[test]
    fn half_discriminator_reference_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = small(&mut rng);
        zero_last_layer(&mut m.discriminator);
        let (bu, bb) = (batch(5, 3, &mut rng), batch(7, 3, &mut rng));
        let ln2 = std::f64::consts::LN_2;
        let d = m.disc_loss(&bu, &bb).unwrap();
        assert!((d.unbiased_side - ln2).abs() < 1e-12 && (d.biased_side - ln2).abs() < 1e-12);
        let g = m.gen_loss(&bb, GeneratorLoss::NonSaturating).unwrap();
        assert!((g.loss - ln2).abs() < 1e-12);
        assert!(g.encoder.is_finite());
    }

    #[test]
    fn confident_discriminator_drives_generator_loss_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = small(&mut rng);
        zero_last_layer(&mut m.discriminator);
        m.discriminator.layers_mut().last_mut().unwrap().bias[0] = 40.0;
        let g = m
            .gen_loss(&batch(4, 3, &mut rng), GeneratorLoss::NonSaturating)
            .unwrap();
        assert!(g.loss < 1e-6);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = small(&mut rng);
        let empty = Batch {
            features: vec![],
            dim: 3,
            t: vec![],
            y: vec![],
            propensity: None,
        };
        assert!(matches!(
            m.disc_loss(&empty, &batch(2, 3, &mut rng)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn separated_latents_are_learned_by_the_discriminator() {
        // Encoders with zero weights emit their bias: a constant latent per tower.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = small(&mut rng);
        for (enc, v) in [
            (&mut m.unbiased.encoder, 1.0),
            (&mut m.biased.encoder, -1.0),
        ] {
            for l in enc.layers_mut() {
                l.weights.iter_mut().for_each(|w| *w = 0.0);
            }
            let last = enc.layers_mut().last_mut().unwrap();
            last.bias.iter_mut().for_each(|b| *b = v);
        }
        let mut opt = Optimizer::adam(&m.discriminator, 1e-2);
        let (bu, bb) = (batch(32, 3, &mut rng), batch(32, 3, &mut rng));
        for _ in 0..200 {
            let d = m.disc_loss(&bu, &bb).unwrap();
            opt.step(&mut m.discriminator, &d.grads).unwrap();
        }
        let d = m.disc_loss(&bu, &bb).unwrap();
        assert!(d.total() < 0.05, "loss {}", d.total());
    }
}
