//! Synthetic campaign: users, a ground-truth payment-probability oracle, and
//! logging policies (full-random and activity-biased) that produce the
//! logged datasets.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose,
//! user id)`, so generation is reproducible, parallelizable per user, and the
//! label noise for a given user does not depend on which policy logged them.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{sigmoid, softplus};
use crate::error::{Error, Result};

const STREAM_USERS: u64 = 1;
const STREAM_TREAT: u64 = 2;
const STREAM_LABEL: u64 = 3;
const STREAM_ORACLE: u64 = 4;
const STREAM_TEST: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose)));
    rng.set_stream(index);
    rng
}

/// Derives a child seed; used to give sub-experiments their own streams.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix(seed.wrapping_mul(31).wrapping_add(splitmix(purpose)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub id: u64,
    pub features: Vec<f64>,
    /// Engagement in `[0, 1]`, a deterministic function of `features`.
    pub activity: f64,
}

/// Engagement model. The linear part is a smooth function of the features;
/// the idiosyncratic part is a hash of the exact feature values, which no
/// smooth model of the features can represent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Engagement {
    pub linear_weight: f64,
    pub idiosyncratic_weight: f64,
}

impl Default for Engagement {
    fn default() -> Self {
        Self {
            linear_weight: 1.0,
            idiosyncratic_weight: 4.0,
        }
    }
}

impl Engagement {
    pub fn activity(&self, features: &[f64]) -> f64 {
        let d = features.len().max(1) as f64;
        let lin = features.iter().sum::<f64>() / d.sqrt();
        let mut h = 0x243F_6A88_85A3_08D3u64;
        for x in features {
            h = splitmix(h ^ x.to_bits());
        }
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        sigmoid(self.linear_weight * lin + self.idiosyncratic_weight * (2.0 * u - 1.0))
    }
}

/// Strictly increasing incentive amounts, at least two of them.
#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentList {
    values: Vec<f64>,
}

impl TreatmentList {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("treatment list needs at least two levels"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("treatments must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("treatments must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// `count` levels evenly spaced over `[lo, hi]`.
    pub fn linear(count: usize, lo: f64, hi: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("treatment list needs at least two levels"));
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|j| lo + step * j as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.values.iter().position(|&v| v == t)
    }

    /// Nearest level; tolerates the rounding introduced by CSV round trips.
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (j, v) in self.values.iter().enumerate() {
            if (v - t).abs() < (self.values[best] - t).abs() {
                best = j;
            }
        }
        best
    }

    pub fn norm(&self) -> TreatmentNorm {
        TreatmentNorm {
            lo: self.min(),
            span: self.max() - self.min(),
        }
    }
}

/// Affine map of raw incentive amounts onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreatmentNorm {
    pub lo: f64,
    pub span: f64,
}

impl TreatmentNorm {
    pub fn identity() -> Self {
        Self { lo: 0.0, span: 1.0 }
    }

    pub fn apply(&self, t: f64) -> f64 {
        (t - self.lo) / self.span
    }

    pub fn invert(&self, t: f64) -> f64 {
        t * self.span + self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Spread of the slope index `u . x`.
    pub slope_spread: f64,
    /// Multiplier on `softplus(u . x)`; payment log-odds per currency unit.
    pub slope_scale: f64,
    /// Spread of the linear offset `v . x`.
    pub offset_spread: f64,
    pub base: f64,
    /// Log-odds added per unit of engagement (centered at 0.5).
    pub engagement_effect: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            slope_spread: 0.5,
            slope_scale: 0.4,
            offset_spread: 1.0,
            base: -1.5,
            engagement_effect: 5.0,
        }
    }
}

/// Ground truth `f*(x, t) = sigmoid(a(x) t + b(x))` with
/// `a(x) = softplus(u . x) * scale > 0` and
/// `b(x) = v . x + base + effect * (activity - 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignOracle {
    slope_dir: Vec<f64>,
    slope_scale: f64,
    offset_dir: Vec<f64>,
    base: f64,
    engagement_effect: f64,
    constant: Option<(f64, f64)>,
}

impl CampaignOracle {
    pub fn random(dim: usize, params: &OracleParams, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if params.slope_scale <= 0.0 {
            return Err(Error::invalid("slope scale must be positive"));
        }
        let mut rng = stream_rng(seed, STREAM_ORACLE, 0);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = |spread: f64| -> Vec<f64> {
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale * spread)
                .collect()
        };
        let slope_dir = draw(params.slope_spread);
        let offset_dir = draw(params.offset_spread);
        Ok(Self {
            slope_dir,
            slope_scale: params.slope_scale,
            offset_dir,
            base: params.base,
            engagement_effect: params.engagement_effect,
            constant: None,
        })
    }

    /// Oracle with the same `a` and `b` for every user.
    pub fn constant(slope: f64, offset: f64) -> Result<Self> {
        if slope <= 0.0 {
            return Err(Error::invalid("oracle slope must be positive"));
        }
        Ok(Self {
            slope_dir: Vec::new(),
            slope_scale: slope,
            offset_dir: Vec::new(),
            base: offset,
            engagement_effect: 0.0,
            constant: Some((slope, offset)),
        })
    }

    pub fn slope(&self, user: &UserProfile) -> f64 {
        match self.constant {
            Some((a, _)) => a,
            None => softplus(dot(&self.slope_dir, &user.features)) * self.slope_scale,
        }
    }

    pub fn offset(&self, user: &UserProfile) -> f64 {
        match self.constant {
            Some((_, b)) => b,
            None => {
                dot(&self.offset_dir, &user.features)
                    + self.base
                    + self.engagement_effect * (user.activity - 0.5)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True payment probability of `user` at raw incentive `t`.
pub fn true_mpp(oracle: &CampaignOracle, user: &UserProfile, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!(
            "incentive must be nonnegative, got {t}"
        )));
    }
    Ok(sigmoid(oracle.slope(user) * t + oracle.offset(user)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyKind {
    UniformRandom,
    /// `pi_j = floor + (1 - |T| floor) q_j`, `q_j ∝ exp(-beta * activity * j)`.
    ActivityBiased {
        beta: f64,
        floor: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoggingPolicy {
    pub kind: PolicyKind,
    levels: usize,
}

impl LoggingPolicy {
    pub fn uniform(treatments: &TreatmentList) -> Self {
        Self {
            kind: PolicyKind::UniformRandom,
            levels: treatments.len(),
        }
    }

    pub fn activity_biased(treatments: &TreatmentList, beta: f64, floor: f64) -> Result<Self> {
        let k = treatments.len() as f64;
        if !(beta >= 0.0) || !(floor > 0.0) || floor * k >= 1.0 {
            return Err(Error::invalid(format!(
                "biased policy needs beta >= 0 and 0 < floor < 1/|T| (beta={beta}, floor={floor})"
            )));
        }
        Ok(Self {
            kind: PolicyKind::ActivityBiased { beta, floor },
            levels: treatments.len(),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Smallest propensity the policy can ever assign.
    pub fn floor(&self) -> f64 {
        match self.kind {
            PolicyKind::UniformRandom => 1.0 / self.levels as f64,
            PolicyKind::ActivityBiased { floor, .. } => floor,
        }
    }

    /// `pi(t_j | x)` over every level.
    pub fn propensities(&self, user: &UserProfile) -> Vec<f64> {
        let k = self.levels;
        match self.kind {
            PolicyKind::UniformRandom => vec![1.0 / k as f64; k],
            PolicyKind::ActivityBiased { beta, floor } => {
                let raw: Vec<f64> = (0..k)
                    .map(|j| (-beta * user.activity * j as f64).exp())
                    .collect();
                let total: f64 = raw.iter().sum();
                let mass = 1.0 - k as f64 * floor;
                raw.iter().map(|q| floor + mass * q / total).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Biased,
    Unbiased,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Biased => "b",
            Source::Unbiased => "u",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub user: UserProfile,
    /// Raw incentive amount, one of the treatment levels.
    pub t: f64,
    pub y: u8,
    pub source: Source,
    pub propensity: f64,
}

/// Users with ids `id_offset..id_offset + n`; features standard normal.
pub fn gen_users_with(
    n: usize,
    dim: usize,
    seed: u64,
    id_offset: u64,
    engagement: &Engagement,
) -> Result<Vec<UserProfile>> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid(format!(
            "need at least one user and one feature (n={n}, d={dim})"
        )));
    }
    Ok((0..n as u64)
        .map(|i| {
            let id = id_offset + i;
            let mut rng = stream_rng(seed, STREAM_USERS, id);
            let features: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let activity = engagement.activity(&features);
            UserProfile {
                id,
                features,
                activity,
            }
        })
        .collect())
}

pub fn gen_users(n: usize, dim: usize, seed: u64) -> Result<Vec<UserProfile>> {
    gen_users_with(n, dim, seed, 0, &Engagement::default())
}

/// Logs one sample per user: `t ~ pi(.|x)`, `y ~ Bernoulli(f*(x, t))`.
pub fn sample_logged(
    oracle: &CampaignOracle,
    policy: &LoggingPolicy,
    treatments: &TreatmentList,
    users: &[UserProfile],
    seed: u64,
    source: Source,
) -> Result<Vec<Sample>> {
    if policy.levels() != treatments.len() {
        return Err(Error::invalid("policy and treatment list disagree on |T|"));
    }
    users
        .iter()
        .map(|user| {
            let probs = policy.propensities(user);
            let u: f64 = stream_rng(seed, STREAM_TREAT, user.id).random();
            let mut j = probs.len() - 1;
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    j = k;
                    break;
                }
            }
            let t = treatments.values()[j];
            let p = true_mpp(oracle, user, t)?;
            let v: f64 = stream_rng(seed, STREAM_LABEL, user.id).random();
            Ok(Sample {
                user: user.clone(),
                t,
                y: u8::from(v < p),
                source,
                propensity: probs[j],
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub dim: usize,
    pub levels: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub beta: f64,
    pub floor: f64,
    pub oracle_seed: u64,
    pub oracle: OracleParams,
    pub engagement: Engagement,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            levels: 5,
            t_min: 1.0,
            t_max: 5.0,
            beta: 2.0,
            floor: 0.01,
            oracle_seed: 2020,
            oracle: OracleParams::default(),
            engagement: Engagement::default(),
        }
    }
}

/// Everything needed to generate logged data for one synthetic campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub dim: usize,
    pub treatments: TreatmentList,
    pub oracle: CampaignOracle,
    pub engagement: Engagement,
    pub uniform: LoggingPolicy,
    pub biased: LoggingPolicy,
}

/// `D_u` (full-random policy) and `D_b` (biased policy) over disjoint users.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub unbiased: Vec<Sample>,
    pub biased: Vec<Sample>,
}

impl Campaign {
    pub fn new(config: &CampaignConfig) -> Result<Self> {
        let treatments = TreatmentList::linear(config.levels, config.t_min, config.t_max)?;
        let oracle = CampaignOracle::random(config.dim, &config.oracle, config.oracle_seed)?;
        let biased = LoggingPolicy::activity_biased(&treatments, config.beta, config.floor)?;
        Ok(Self {
            dim: config.dim,
            uniform: LoggingPolicy::uniform(&treatments),
            biased,
            treatments,
            oracle,
            engagement: config.engagement,
        })
    }

    pub fn true_mpp(&self, user: &UserProfile, t: f64) -> Result<f64> {
        true_mpp(&self.oracle, user, t)
    }

    /// Splits `n` users into `round(n * frac)` logged by the random policy
    /// and the remainder logged by the biased one.
    pub fn gen_dataset(&self, n: usize, unbiased_frac: f64, seed: u64) -> Result<Dataset> {
        if !(unbiased_frac > 0.0 && unbiased_frac < 1.0) {
            return Err(Error::invalid(format!(
                "unbiased fraction must lie in (0, 1), got {unbiased_frac}"
            )));
        }
        let users = gen_users_with(n, self.dim, seed, 0, &self.engagement)?;
        let n_u = ((n as f64) * unbiased_frac).round() as usize;
        let (u_users, b_users) = users.split_at(n_u.min(n));
        let unbiased = if u_users.is_empty() {
            Vec::new()
        } else {
            sample_logged(
                &self.oracle,
                &self.uniform,
                &self.treatments,
                u_users,
                seed,
                Source::Unbiased,
            )?
        };
        let biased = if b_users.is_empty() {
            Vec::new()
        } else {
            sample_logged(
                &self.oracle,
                &self.biased,
                &self.treatments,
                b_users,
                seed,
                Source::Biased,
            )?
        };
        Ok(Dataset { unbiased, biased })
    }

    /// Fresh users logged by the random policy; ids start at `id_offset` so
    /// they never collide with training users.
    pub fn gen_test(&self, n: usize, seed: u64, id_offset: u64) -> Result<Vec<Sample>> {
        let seed = derive_seed(seed, STREAM_TEST);
        let users = gen_users_with(n, self.dim, seed, id_offset, &self.engagement)?;
        sample_logged(
            &self.oracle,
            &self.uniform,
            &self.treatments,
            &users,
            seed,
            Source::Unbiased,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    /// `None` when no sample was logged at this level.
    pub mean: Option<f64>,
    pub count: usize,
}

/// Mean payment rate per treatment level, ordered by level.
pub fn empirical_curve(samples: &[Sample], treatments: &TreatmentList) -> Vec<CurvePoint> {
    let k = treatments.len();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for s in samples {
        let j = treatments.nearest_index(s.t);
        sum[j] += f64::from(s.y);
        count[j] += 1;
    }
    treatments
        .values()
        .iter()
        .enumerate()
        .map(|(j, &t)| CurvePoint {
            t,
            mean: (count[j] > 0).then(|| sum[j] / count[j] as f64),
            count: count[j],
        })
        .collect()
}

/// Nine significant digits, the CSV float convention.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes `user_id, f_0..f_{d-1}, activity, t, y, source, propensity`.
pub fn write_samples_csv<W: Write>(samples: &[Sample], dim: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string()];
    header.extend((0..dim).map(|j| format!("f_{j}")));
    header.extend(["activity", "t", "y", "source", "propensity"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        if s.user.features.len() != dim {
            return Err(Error::invalid(
                "sample feature width does not match the header",
            ));
        }
        let mut rec = Vec::with_capacity(dim + 6);
        rec.push(s.user.id.to_string());
        rec.extend(s.user.features.iter().map(|v| fmt_float(*v)));
        rec.push(fmt_float(s.user.activity));
        rec.push(fmt_float(s.t));
        rec.push(s.y.to_string());
        rec.push(s.source.tag().to_string());
        rec.push(fmt_float(s.propensity));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn samples_to_csv_bytes(samples: &[Sample], dim: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_samples_csv(samples, dim, &mut buf)?;
    Ok(buf)
}

pub fn read_samples_csv<R: std::io::Read>(input: R) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let dim = header.iter().filter(|h| h.starts_with("f_")).count();
    let expected = dim + 6;
    if header.len() != expected || header.get(0) != Some("user_id") {
        return Err(Error::Data(format!("unexpected sample header: {header:?}")));
    }
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Data(format!("bad {what} value `{s}`")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Data(format!("bad user id `{}`", &rec[0])))?;
        let features = (0..dim)
            .map(|j| parse(&rec[1 + j], "feature"))
            .collect::<Result<Vec<_>>>()?;
        let activity = parse(&rec[dim + 1], "activity")?;
        let t = parse(&rec[dim + 2], "t")?;
        let y = match rec[dim + 3].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Data(format!("label must be 0 or 1, got `{other}`"))),
        };
        let source = match rec[dim + 4].trim() {
            "b" => Source::Biased,
            "u" => Source::Unbiased,
            other => return Err(Error::Data(format!("source must be b or u, got `{other}`"))),
        };
        let propensity = parse(&rec[dim + 5], "propensity")?;
        out.push(Sample {
            user: UserProfile {
                id,
                features,
                activity,
            },
            t,
            y,
            source,
            propensity,
        });
    }
    Ok(out)
}

pub fn save_samples(path: impl AsRef<Path>, samples: &[Sample], dim: usize) -> Result<()> {
    std::fs::write(path, samples_to_csv_bytes(samples, dim)?)?;
    Ok(())
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let f = std::fs::File::open(path)?;
    read_samples_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pearson, spearman};

    fn user(features: Vec<f64>, activity: f64) -> UserProfile {
        UserProfile {
            id: 0,
            features,
            activity,
        }
    }

    #[test]
    fn users_are_deterministic_and_validated() {
        let a = gen_users(3, 4, 7).unwrap();
        let b = gen_users(3, 4, 7).unwrap();
        assert_eq!(a.len(), 3);
        let bits = |u: &[UserProfile]| {
            u.iter()
                .flat_map(|p| p.features.iter().chain([&p.activity]).map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert!(matches!(gen_users(0, 4, 7), Err(Error::InvalidArgument(_))));
        assert!(matches!(gen_users(3, 0, 7), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn activity_is_spread_over_unit_interval() {
        let users = gen_users(1000, 8, 1).unwrap();
        let acts: Vec<f64> = users.iter().map(|u| u.activity).collect();
        assert!(acts.iter().all(|a| (0.0..=1.0).contains(a)));
        let mean = acts.iter().sum::<f64>() / acts.len() as f64;
        let var = acts.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (acts.len() - 1) as f64;
        assert!(var > 0.01, "activity variance {var}");
    }

    #[test]
    fn true_mpp_reference_values() {
        let x = user(vec![0.3, -1.0], 0.5);
        let o = CampaignOracle::constant(1.0, 0.0).unwrap();
        assert_eq!(true_mpp(&o, &x, 0.0).unwrap(), 0.5);
        let o = CampaignOracle::constant(0.5, -1.0).unwrap();
        assert_eq!(true_mpp(&o, &x, 2.0).unwrap(), 0.5);
        assert!(matches!(
            true_mpp(&o, &x, -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn true_mpp_strictly_increasing() {
        let o = CampaignOracle::random(8, &OracleParams::default(), 3).unwrap();
        for u in gen_users(200, 8, 5).unwrap() {
            let mut prev = 0.0;
            for t in [0.0, 0.5, 1.0, 2.0, 5.0] {
                let p = true_mpp(&o, &u, t).unwrap();
                assert!(p > prev && p < 1.0);
                prev = p;
            }
        }
    }

    #[test]
    fn propensities_are_normalized_and_floored() {
        let tl = TreatmentList::linear(5, 1.0, 5.0).unwrap();
        let pol = LoggingPolicy::activity_biased(&tl, 2.0, 0.01).unwrap();
        for a in [0.0, 0.3, 0.9, 1.0] {
            let p = pol.propensities(&user(vec![0.0], a));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&q| q >= 0.01));
            if a > 0.0 {
                assert!(
                    p.windows(2).all(|w| w[0] > w[1]),
                    "small incentives favoured"
                );
            }
        }
        assert!(LoggingPolicy::activity_biased(&tl, 2.0, 0.2).is_err());
    }

    #[test]
    fn uniform_policy_frequencies_within_three_sigma() {
        let tl = TreatmentList::linear(4, 1.0, 4.0).unwrap();
        let o = CampaignOracle::random(4, &OracleParams::default(), 1).unwrap();
        let users = gen_users(10_000, 4, 2).unwrap();
        let s = sample_logged(
            &o,
            &LoggingPolicy::uniform(&tl),
            &tl,
            &users,
            4,
            Source::Unbiased,
        )
        .unwrap();
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for &t in tl.values() {
            let c = s.iter().filter(|x| x.t == t).count() as f64;
            assert!((c - 2500.0).abs() < 3.0 * sigma, "level {t}: {c}");
        }
        assert!(s.iter().all(|x| x.propensity == 0.25));
    }

    #[test]
    fn biased_policy_gives_active_users_small_incentives() {
        let tl = TreatmentList::linear(5, 1.0, 5.0).unwrap();
        let o = CampaignOracle::random(8, &OracleParams::default(), 1).unwrap();
        let pol = LoggingPolicy::activity_biased(&tl, 2.0, 0.01).unwrap();
        let users = gen_users(10_000, 8, 4).unwrap();
        let s = sample_logged(&o, &pol, &tl, &users, 9, Source::Biased).unwrap();
        let act: Vec<f64> = s.iter().map(|x| x.user.activity).collect();
        let t: Vec<f64> = s.iter().map(|x| x.t).collect();
        assert!(pearson(&act, &t) < 0.0);
        for x in &s {
            let expect = pol.propensities(&x.user)[tl.index_of(x.t).unwrap()];
            assert_eq!(x.propensity.to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn near_flat_oracle_pays_half_the_time() {
        let tl = TreatmentList::linear(3, 0.0, 2.0).unwrap();
        let o = CampaignOracle::constant(1e-12, 0.0).unwrap();
        let users = gen_users(10_000, 2, 8).unwrap();
        let s = sample_logged(
            &o,
            &LoggingPolicy::uniform(&tl),
            &tl,
            &users,
            1,
            Source::Unbiased,
        )
        .unwrap();
        let rate = s.iter().map(|x| f64::from(x.y)).sum::<f64>() / 10_000.0;
        assert!(
            (rate - 0.5).abs() < 3.0 * (0.25f64 / 10_000.0).sqrt(),
            "rate {rate}"
        );
    }

    #[test]
    fn label_noise_is_paired_across_policies() {
        // Same user, same level, same seed: the label does not depend on the policy.
        let c = Campaign::new(&CampaignConfig::default()).unwrap();
        let users = gen_users(2000, 8, 3).unwrap();
        let seed = 17;
        let a = sample_logged(
            &c.oracle,
            &c.uniform,
            &c.treatments,
            &users,
            seed,
            Source::Unbiased,
        )
        .unwrap();
        let b = sample_logged(
            &c.oracle,
            &c.biased,
            &c.treatments,
            &users,
            seed,
            Source::Biased,
        )
        .unwrap();
        let same_t = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x.t == y.t)
            .collect::<Vec<_>>();
        assert!(!same_t.is_empty());
        assert!(same_t.iter().all(|(x, y)| x.y == y.y));
    }

    #[test]
    fn dataset_split_sizes() {
        let c = Campaign::new(&CampaignConfig::default()).unwrap();
        let d = c.gen_dataset(100, 0.5, 1).unwrap();
        assert_eq!((d.unbiased.len(), d.biased.len()), (50, 50));
        assert!(matches!(
            c.gen_dataset(100, 1.5, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            c.gen_dataset(100, 0.0, 1),
            Err(Error::InvalidArgument(_))
        ));
        let ids_u: std::collections::HashSet<u64> = d.unbiased.iter().map(|s| s.user.id).collect();
        assert!(d.biased.iter().all(|s| !ids_u.contains(&s.user.id)));
        assert!(d.unbiased.iter().all(|s| s.source == Source::Unbiased));
    }

    #[test]
    fn curve_reports_missing_levels() {
        let tl = TreatmentList::linear(3, 1.0, 3.0).unwrap();
        let mk = |t: f64| Sample {
            user: user(vec![0.0], 0.5),
            t,
            y: 1,
            source: Source::Unbiased,
            propensity: 1.0 / 3.0,
        };
        let curve = empirical_curve(&[mk(1.0), mk(3.0), mk(3.0)], &tl);
        assert_eq!(curve[0].mean, Some(1.0));
        assert_eq!(curve[1].mean, None);
        assert_eq!(curve[2].mean, Some(1.0));
        assert_eq!(curve[2].count, 2);
    }

    #[test]
    fn default_campaign_shows_price_bias() {
        let c = Campaign::new(&CampaignConfig::default()).unwrap();
        let d = c.gen_dataset(100_000, 0.5, 1).unwrap();
        let curve = |s: &[Sample]| {
            let pts = empirical_curve(s, &c.treatments);
            let t: Vec<f64> = pts.iter().map(|p| p.t).collect();
            let m: Vec<f64> = pts.iter().map(|p| p.mean.unwrap()).collect();
            (spearman(&t, &m), m)
        };
        let (rho_u, m_u) = curve(&d.unbiased);
        let (rho_b, _) = curve(&d.biased);
        let inversions = m_u.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(rho_u > 0.0 && inversions <= 1, "{m_u:?}");
        assert!(rho_b < 0.0);
    }

    #[test]
    fn csv_round_trip_preserves_nine_digits() {
        let c = Campaign::new(&CampaignConfig::default()).unwrap();
        let d = c.gen_dataset(50, 0.2, 4).unwrap();
        let bytes = samples_to_csv_bytes(&d.biased, 8).unwrap();
        let header = std::str::from_utf8(&bytes)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(
            header,
            "user_id,f_0,f_1,f_2,f_3,f_4,f_5,f_6,f_7,activity,t,y,source,propensity"
        );
        let back = read_samples_csv(&bytes[..]).unwrap();
        assert_eq!(back.len(), d.biased.len());
        for (a, b) in back.iter().zip(&d.biased) {
            assert_eq!(a.user.id, b.user.id);
            assert_eq!((a.t, a.y, a.source), (b.t, b.y, b.source));
            for (x, y) in a.user.features.iter().zip(&b.user.features) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-300));
            }
        }
        assert_eq!(samples_to_csv_bytes(&back, 8).unwrap(), bytes);
    }
}
