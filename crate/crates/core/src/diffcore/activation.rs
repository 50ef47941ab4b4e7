//! Scalar activations and the clamped cross-entropy used by every model.

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`, evaluated without overflow for large `z` and without
/// collapsing to zero for very negative `z`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Hidden-layer nonlinearity tag. Also persisted in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy `-[y ln p + (1-y) ln(1-p)]` with `p` clamped, and
/// its derivative with respect to `p` (zero where the clamp is active).
pub fn ce_loss(p: f64, y: f64) -> (f64, f64) {
    let q = clamp_prob(p);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        -y / q + (1.0 - y) / (1.0 - q)
    };
    (loss, grad)
}

/// Cross-entropy of `sigmoid(logit)` against `y`, with the derivative taken
/// with respect to the logit. Agrees with [`ce_loss`] composed with the
/// sigmoid, including the flat region where the clamp is active.
#[inline]
pub fn ce_with_logit(logit: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let q = clamp_prob(p);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        p - y
    };
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_softplus_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let tiny = softplus(-500.0);
        assert!(tiny > 0.0 && tiny.is_finite());
        assert!((softplus(500.0) - 500.0).abs() < 1e-12);
        for z in [-500.0, -40.0, -1.0, 1.0, 40.0, 500.0] {
            let s = sigmoid(z);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
        assert!(sigmoid(-30.0) > 0.0 && sigmoid(30.0) < 1.0);
    }

    #[test]
    fn ce_reference_points() {
        let (l, _) = ce_loss(0.5, 1.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ce_loss(1.0, 1.0).0 <= 1e-6);
        assert!(ce_loss(0.0, 0.0).0 <= 1e-6);
        // clamped: finite even at the boundary of the wrong class
        assert!(ce_loss(0.0, 1.0).0.is_finite());
    }

    #[test]
    fn ce_gradient_matches_central_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..200 {
            let p: f64 = rng.random_range(0.01..0.99);
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let (_, g) = ce_loss(p, y);
            let fd = (ce_loss(p + h, y).0 - ce_loss(p - h, y).0) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "p={p} y={y} g={g} fd={fd}");
        }
    }

    #[test]
    fn logit_form_matches_chain_rule() {
        for &z in &[-5.0, -0.3, 0.0, 0.7, 4.0] {
            for &y in &[0.0, 1.0] {
                let (l1, g1) = ce_with_logit(z, y);
                let p = sigmoid(z);
                let (l2, dp) = ce_loss(p, y);
                assert!((l1 - l2).abs() < 1e-14);
                assert!((g1 - dp * p * (1.0 - p)).abs() < 1e-12);
            }
        }
    }
}
