//! Response-model zoo: SBBM (plain and Softplus-monotone), inverse-propensity
//! weighting, a CausE-style regularized pair and the PCAN dual tower.

mod cause;
mod pcan;
mod sbbm;

use std::fmt;
use std::str::FromStr;

pub use cause::{CauseLoss, CausePair};
pub use pcan::{DiscLoss, GenLoss, GeneratorLoss, PcanModel};
pub use sbbm::{
    IpwWeighting, Monotone, SbbmArch, SbbmGrads, SbbmModel, SbbmOptimizer, SupervisedLoss,
    MAX_NORMALIZED_T,
};

use crate::diffcore::{Checkpoint, DenseNet};
use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::synth::{Sample, TreatmentList, TreatmentNorm, UserProfile};

/// Training rows in model space: features, normalized incentive, label and
/// (optionally) logging propensity.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `len x dim`, row-major.
    pub features: Vec<f64>,
    pub dim: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub propensity: Option<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn from_samples<'a>(
        samples: impl IntoIterator<Item = &'a Sample>,
        norm: &TreatmentNorm,
    ) -> Self {
        let mut b = Batch {
            features: Vec::new(),
            dim: 0,
            t: Vec::new(),
            y: Vec::new(),
            propensity: Some(Vec::new()),
        };
        for s in samples {
            b.dim = s.user.features.len();
            b.features.extend_from_slice(&s.user.features);
            b.t.push(norm.apply(s.t));
            b.y.push(f64::from(s.y));
            if let Some(p) = b.propensity.as_mut() {
                p.push(s.propensity);
            }
        }
        b
    }

    pub fn gather(samples: &[Sample], idx: &[usize], norm: &TreatmentNorm) -> Self {
        Self::from_samples(idx.iter().map(|&i| &samples[i]), norm)
    }

    /// Concatenates two batches; propensities survive only if both carry them.
    pub fn concat(mut self, other: &Batch) -> Self {
        if self.is_empty() {
            self.dim = other.dim;
        }
        self.features.extend_from_slice(&other.features);
        self.t.extend_from_slice(&other.t);
        self.y.extend_from_slice(&other.y);
        self.propensity = match (self.propensity, &other.propensity) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self
    }
}

/// The six compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Plain SBBM on `D_u` only.
    SbbmU,
    /// Plain SBBM on `D_u ∪ D_b`.
    SbbmB,
    /// Softplus-monotone SBBM on `D_u ∪ D_b`.
    SbbmSoftplus,
    /// Plain SBBM on `D_u ∪ D_b` with clipped inverse-propensity weights.
    Ipw,
    /// Regularized tower pair.
    Cause,
    /// Adversarial dual tower.
    Pcan,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SbbmU,
        Method::SbbmB,
        Method::SbbmSoftplus,
        Method::Ipw,
        Method::Cause,
        Method::Pcan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SbbmU => "sbbm_u",
            Method::SbbmB => "sbbm_b",
            Method::SbbmSoftplus => "sbbm_softplus",
            Method::Ipw => "ipw",
            Method::Cause => "cause",
            Method::Pcan => "pcan",
        }
    }

    /// Backbone monotonicity used when the method is trained.
    pub fn monotone(self) -> Monotone {
        match self {
            Method::SbbmSoftplus | Method::Pcan => Monotone::Softplus,
            _ => Monotone::Plain,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key || (key == "sbbm_sp" && *m == Method::SbbmSoftplus))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResponseModel {
    Sbbm(SbbmModel),
    Cause(CausePair),
    Pcan(PcanModel),
}

impl ResponseModel {
    /// The tower that serves predictions.
    pub fn deployable(&self) -> &SbbmModel {
        match self {
            ResponseModel::Sbbm(m) => m,
            ResponseModel::Cause(p) => &p.control,
            ResponseModel::Pcan(p) => &p.biased,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ResponseModel::Sbbm(m) => m.is_finite(),
            ResponseModel::Cause(p) => p.control.is_finite() && p.treatment.is_finite(),
            ResponseModel::Pcan(p) => {
                p.biased.is_finite() && p.unbiased.is_finite() && p.discriminator.is_finite()
            }
        }
    }
}

/// A trained model together with the incentive normalization it was fit under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub model: ResponseModel,
    pub norm: TreatmentNorm,
}

const KIND_PREFIX: &str = "response-model/";

impl TrainedModel {
    /// Prediction at a raw incentive amount.
    pub fn predict_raw(&self, features: &[f64], t: f64) -> Result<f64> {
        self.model
            .deployable()
            .predict(features, self.norm.apply(t))
    }

    /// `users x |T|` matrix of predicted payment probabilities, row-major.
    pub fn score_matrix(
        &self,
        users: &[UserProfile],
        treatments: &TreatmentList,
    ) -> Result<Vec<f64>> {
        let net = self.model.deployable();
        let k = treatments.len();
        let ts: Vec<f64> = treatments
            .values()
            .iter()
            .map(|&t| self.norm.apply(t))
            .collect();
        for &t in &ts {
            sbbm::check_t(t)?;
        }
        let mut out = Vec::with_capacity(users.len() * k);
        for chunk in users.chunks(1024) {
            let mut feats = Vec::with_capacity(chunk.len() * net.input_width());
            for u in chunk {
                feats.extend_from_slice(&u.features);
            }
            let (slope, offset) = net.slope_offset(&feats, chunk.len())?;
            for (s, p) in slope.iter().zip(&offset) {
                out.extend(ts.iter().map(|t| crate::diffcore::sigmoid(s * t + p)));
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mono = |m: &SbbmModel| match m.monotone {
            Monotone::Plain => 0.0,
            Monotone::Softplus => 1.0,
        };
        let tower = |ck: Checkpoint, prefix: &str, m: &SbbmModel| {
            ck.with_meta(&format!("{prefix}.monotone"), mono(m))
                .with_net(&format!("{prefix}.encoder"), &m.encoder)
                .with_net(&format!("{prefix}.head_g"), &m.head_g)
                .with_net(&format!("{prefix}.head_p"), &m.head_p)
        };
        let ck = Checkpoint::new(format!("{KIND_PREFIX}{}", self.method.name()))
            .with_meta("t_lo", self.norm.lo)
            .with_meta("t_span", self.norm.span);
        match &self.model {
            ResponseModel::Sbbm(m) => tower(ck, "model", m),
            ResponseModel::Cause(p) => {
                let ck = ck.with_meta("reg_strength", p.reg_strength);
                let ck = tower(ck, "control", &p.control);
                tower(ck, "treatment", &p.treatment)
            }
            ResponseModel::Pcan(p) => {
                let ck = tower(ck, "biased", &p.biased);
                tower(ck, "unbiased", &p.unbiased).with_net("discriminator", &p.discriminator)
            }
        }
    }

    /// Rebuilds a model; fails if `expected` is given and the stored kind differs.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<Method>) -> Result<Self> {
        let name = ck.kind.strip_prefix(KIND_PREFIX).ok_or_else(|| {
            Error::Checkpoint(format!("`{}` is not a response-model checkpoint", ck.kind))
        })?;
        let method: Method = name
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unknown model kind `{name}`")))?;
        if let Some(want) = expected {
            if want != method {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a `{method}` model, expected `{want}`"
                )));
            }
        }
        let tower = |prefix: &str| -> Result<SbbmModel> {
            let monotone = if ck.meta(&format!("{prefix}.monotone"))? == 1.0 {
                Monotone::Softplus
            } else {
                Monotone::Plain
            };
            let net = |part: &str| -> Result<DenseNet> { ck.net(&format!("{prefix}.{part}")) };
            SbbmModel::from_parts(net("encoder")?, net("head_g")?, net("head_p")?, monotone)
                .map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let model = match method {
            Method::Cause => ResponseModel::Cause(CausePair::new(
                tower("control")?,
                tower("treatment")?,
                ck.meta("reg_strength")?,
            )?),
            Method::Pcan => ResponseModel::Pcan(PcanModel::from_parts(
                tower("biased")?,
                tower("unbiased")?,
                ck.net("discriminator")?,
            )?),
            _ => ResponseModel::Sbbm(tower("model")?),
        };
        let norm = TreatmentNorm {
            lo: ck.meta("t_lo")?,
            span: ck.meta("t_span")?,
        };
        Ok(Self {
            method,
            model,
            norm,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>, expected: Option<Method>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, expected)
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, user: &UserProfile, t: f64) -> Result<f64> {
        self.predict_raw(&user.features, t)
    }
}
