use super::sbbm::{SbbmGrads, SbbmModel};
use super::Batch;
use crate::diffcore::{DenseNet, Gradients};
use crate::error::{Error, Result};

/// Two identically shaped towers, one fit on `D_u` and one on `D_b`, tied by
/// a squared-distance penalty on their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CausePair {
    /// Trained on the randomized data; used for prediction.
    pub control: SbbmModel,
    /// Trained on the biased data.
    pub treatment: SbbmModel,
    pub reg_strength: f64,
}

#[derive(Clone, Debug)]
pub struct CauseLoss {
    pub ce_control: f64,
    pub ce_treatment: f64,
    /// `reg_strength * sum (theta_c - theta_t)^2`
    pub penalty: f64,
    pub control: SbbmGrads,
    pub treatment: SbbmGrads,
}

impl CauseLoss {
    pub fn total(&self) -> f64 {
        self.ce_control + self.ce_treatment + self.penalty
    }
}

impl CausePair {
    pub fn new(control: SbbmModel, treatment: SbbmModel, reg_strength: f64) -> Result<Self> {
        if !(reg_strength >= 0.0) {
            return Err(Error::invalid("regularizer strength must be nonnegative"));
        }
        if !control.same_architecture(&treatment) {
            return Err(Error::invalid("CausE towers must share one architecture"));
        }
        Ok(Self {
            control,
            treatment,
            reg_strength,
        })
    }

    pub fn predict(&self, features: &[f64], t: f64) -> Result<f64> {
        self.control.predict(features, t)
    }

    /// Sum of squared parameter differences over all three parts, unscaled.
    pub fn parameter_distance(&self) -> f64 {
        self.control
            .nets()
            .iter()
            .zip(self.treatment.nets())
            .map(|(a, b)| {
                a.params()
                    .zip(b.params())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn cause_loss(&self, batch_u: &Batch, batch_b: &Batch) -> Result<CauseLoss> {
        let c = self.control.supervised_loss(batch_u, None)?;
        let t = self.treatment.supervised_loss(batch_b, None)?;
        let mut control = c.grads;
        let mut treatment = t.grads;
        let lambda = self.reg_strength;
        if lambda > 0.0 {
            let pairs = [
                (
                    &self.control.encoder,
                    &self.treatment.encoder,
                    &mut control.encoder,
                    &mut treatment.encoder,
                ),
                (
                    &self.control.head_g,
                    &self.treatment.head_g,
                    &mut control.head_g,
                    &mut treatment.head_g,
                ),
                (
                    &self.control.head_p,
                    &self.treatment.head_p,
                    &mut control.head_p,
                    &mut treatment.head_p,
                ),
            ];
            for (a, b, ga, gb) in pairs {
                add_tie_gradient(a, b, ga, gb, lambda);
            }
        }
        Ok(CauseLoss {
            ce_control: c.loss,
            ce_treatment: t.loss,
            penalty: lambda * self.parameter_distance(),
            control,
            treatment,
        })
    }
}

fn add_tie_gradient(
    a: &DenseNet,
    b: &DenseNet,
    ga: &mut Gradients,
    gb: &mut Gradients,
    lambda: f64,
) {
    for (((la, lb), gla), glb) in a
        .layers()
        .iter()
        .zip(b.layers())
        .zip(ga.layers.iter_mut())
        .zip(gb.layers.iter_mut())
    {
        let tie = |xa: &[f64], xb: &[f64], da: &mut [f64], db: &mut [f64]| {
            for (((x, y), u), v) in xa.iter().zip(xb).zip(da.iter_mut()).zip(db.iter_mut()) {
                let g = 2.0 * lambda * (x - y);
                *u += g;
                *v -= g;
            }
        };
        tie(&la.weights, &lb.weights, &mut gla.weights, &mut glb.weights);
        tie(&la.bias, &lb.bias, &mut gla.bias, &mut glb.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sbbm::{Monotone, SbbmArch};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch() -> Batch {
        Batch {
            features: vec![0.2, -0.4, 1.0, 0.1],
            dim: 2,
            t: vec![0.0, 0.75],
            y: vec![1.0, 0.0],
            propensity: None,
        }
    }

    fn pair(reg: f64) -> CausePair {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let arch = SbbmArch::new(2);
        let a = SbbmModel::new(&arch, Monotone::Plain, &mut rng).unwrap();
        let b = SbbmModel::new(&arch, Monotone::Plain, &mut rng).unwrap();
        CausePair::new(a, b, reg).unwrap()
    }

    #[test]
    fn no_regularizer_is_sum_of_losses() {
        let p = pair(0.0);
        let l = p.cause_loss(&batch(), &batch()).unwrap();
        let a = p.control.supervised_loss(&batch(), None).unwrap().loss;
        let b = p.treatment.supervised_loss(&batch(), None).unwrap().loss;
        assert_eq!(l.total(), a + b);
        assert_eq!(l.penalty, 0.0);
    }

    #[test]
    fn identical_towers_have_zero_penalty() {
        let mut p = pair(3.0);
        p.treatment = p.control.clone();
        assert_eq!(p.cause_loss(&batch(), &batch()).unwrap().penalty, 0.0);
    }

    #[test]
    fn single_weight_difference() {
        let mut p = pair(1.0);
        p.treatment = p.control.clone();
        let w = p.treatment.encoder.param(3);
        p.treatment.encoder.set_param(3, w + 2.0);
        let l = p.cause_loss(&batch(), &batch()).unwrap();
        assert!((l.penalty - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_towers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = SbbmModel::new(&SbbmArch::new(2), Monotone::Plain, &mut rng).unwrap();
        let b = SbbmModel::new(&SbbmArch::new(3), Monotone::Plain, &mut rng).unwrap();
        assert!(CausePair::new(a.clone(), b, 1.0).is_err());
        assert!(CausePair::new(a.clone(), a, -1.0).is_err());
    }
}
