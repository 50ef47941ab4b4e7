//! Training loops: the alternating PCAN schedule and plain mini-batch loops
//! for the baselines, with validation-AUC early stopping on a `D_u` holdout.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Optimizer;
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::models::{
    Batch, CausePair, GeneratorLoss, IpwWeighting, Method, Monotone, PcanModel, ResponseModel,
    SbbmArch, SbbmModel, SbbmOptimizer, TrainedModel,
};
use crate::synth::{fmt_float, stream_rng, Sample, TreatmentList, TreatmentNorm};

const STREAM_INIT: u64 = 11;
const STREAM_SAMPLER_U: u64 = 12;
const STREAM_SAMPLER_B: u64 = 13;
const STREAM_HOLDOUT: u64 = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Supervised warm-up steps per cycle.
    pub n_w: usize,
    /// Steps in each adversarial phase.
    pub adv_steps: usize,
    /// Discriminator updates per generator update.
    pub disc_per_gen: usize,
    pub batch_size: usize,
    pub max_cycles: usize,
    /// Cycles without a validation-AUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub lr_tower: f64,
    pub lr_disc: f64,
    pub lr_gen: f64,
    pub holdout_frac: f64,
    pub warmup_first_cycle_only: bool,
    pub generator_loss: GeneratorLossConfig,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub disc_hidden: Vec<usize>,
    pub ipw_clip: f64,
    pub cause_reg: f64,
    /// Written on every validation improvement when set.
    #[serde(skip)]
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLossConfig {
    NonSaturating,
    Saturating,
}

impl From<GeneratorLossConfig> for GeneratorLoss {
    fn from(v: GeneratorLossConfig) -> Self {
        match v {
            GeneratorLossConfig::NonSaturating => GeneratorLoss::NonSaturating,
            GeneratorLossConfig::Saturating => GeneratorLoss::Saturating,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_w: 100,
            adv_steps: 6,
            disc_per_gen: 5,
            batch_size: 256,
            max_cycles: 200,
            patience: 10,
            seed: 0,
            lr_tower: 1e-3,
            lr_disc: 1e-3,
            lr_gen: 1e-4,
            holdout_frac: 0.1,
            warmup_first_cycle_only: false,
            generator_loss: GeneratorLossConfig::NonSaturating,
            hidden: vec![64, 64],
            latent: 32,
            disc_hidden: vec![32, 32],
            ipw_clip: 100.0,
            cause_reg: 1e-2,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_w", self.n_w),
            ("adv_steps", self.adv_steps),
            ("disc_per_gen", self.disc_per_gen),
            ("batch_size", self.batch_size),
            ("max_cycles", self.max_cycles),
            ("patience", self.patience),
            ("latent", self.latent),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.hidden.contains(&0) || self.disc_hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        for (name, lr) in [
            ("lr_tower", self.lr_tower),
            ("lr_disc", self.lr_disc),
            ("lr_gen", self.lr_gen),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a positive number")));
            }
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::invalid("holdout_frac must lie in (0, 1)"));
        }
        if !(self.ipw_clip >= 1.0) {
            return Err(Error::invalid("ipw_clip must be at least 1"));
        }
        if !(self.cause_reg >= 0.0) {
            return Err(Error::invalid("cause_reg must be nonnegative"));
        }
        Ok(())
    }

    pub fn arch(&self, input: usize) -> SbbmArch {
        SbbmArch {
            input,
            hidden: self.hidden.clone(),
            latent: self.latent,
            activation: crate::diffcore::Activation::Relu,
        }
    }

    /// Steps per cycle for the baselines, matching one PCAN cycle.
    pub fn steps_per_cycle(&self) -> usize {
        self.n_w + self.adv_steps
    }

    fn is_generator_step(&self, adv_index: usize) -> bool {
        (adv_index + 1).is_multiple_of(self.disc_per_gen + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Adversarial,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Adversarial => "adversarial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Update {
    /// Both towers (PCAN warm-up) or the single baseline model.
    Supervised,
    Discriminator,
    Generator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub cycle: usize,
    /// Global step index, starting at 0.
    pub step: usize,
    pub phase: Phase,
    pub update: Update,
    pub loss_b: Option<f64>,
    pub loss_u: Option<f64>,
    pub loss_disc: Option<f64>,
    pub loss_gen: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub val_auc: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub cycles: Vec<CycleRecord>,
    /// Cycle whose parameters were returned.
    pub best_cycle: usize,
    pub best_auc: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn count(&self, cycle: usize, update: Update) -> usize {
        self.steps
            .iter()
            .filter(|s| s.cycle == cycle && s.update == update)
            .count()
    }

    /// `cycle,step,phase,loss_b,loss_u,loss_disc,loss_gen,val_auc`; the
    /// validation AUC is filled on the last step of each cycle.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let mut out = String::from("cycle,step,phase,loss_b,loss_u,loss_disc,loss_gen,val_auc\n");
        for (i, s) in self.steps.iter().enumerate() {
            let last_of_cycle = self.steps.get(i + 1).is_none_or(|n| n.cycle != s.cycle);
            let val = if last_of_cycle {
                self.cycles
                    .iter()
                    .find(|c| c.cycle == s.cycle)
                    .map(|c| c.val_auc)
            } else {
                None
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.cycle,
                s.step,
                s.phase.tag(),
                opt(s.loss_b),
                opt(s.loss_u),
                opt(s.loss_disc),
                opt(s.loss_gen),
                opt(val)
            );
        }
        out
    }
}

/// Seeded mini-batch sampler; reshuffles at the start of every epoch.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(indices: Vec<usize>, batch: usize, rng: ChaCha8Rng) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid(
                "cannot sample batches from an empty dataset",
            ));
        }
        let batch = batch.min(indices.len());
        let mut s = Self {
            order: indices,
            pos: 0,
            batch,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        Ok(s)
    }

    pub fn next_indices(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

/// Shuffled split of `D_u` into (train, holdout) index lists.
pub fn holdout_split(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_hold = ((n as f64) * frac).round().max(1.0) as usize;
    if n_hold >= n {
        return Err(Error::invalid(format!(
            "D_u has {n} rows; too few to hold out a validation set and still train"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, STREAM_HOLDOUT, 0));
    let train = idx.split_off(n_hold);
    Ok((train, idx))
}

/// Validation AUC of `model` on held-out rows (predicted at their logged incentive).
pub fn validate(model: &SbbmModel, holdout: &Batch) -> Result<f64> {
    let scores = model.predict_batch(holdout)?;
    let labels: Vec<u8> = holdout.y.iter().map(|&y| u8::from(y > 0.5)).collect();
    auc(&labels, &scores)
}

fn check_finite(
    loss: f64,
    finite_grads: bool,
    cycle: usize,
    step: usize,
    what: &str,
) -> Result<()> {
    if loss.is_finite() && finite_grads {
        Ok(())
    } else {
        Err(Error::Diverged {
            cycle,
            step,
            detail: format!("{what} loss {loss}, finite gradients: {finite_grads}"),
        })
    }
}

fn check_dim(samples: &[Sample], dim: usize, name: &str) -> Result<()> {
    match samples.iter().find(|s| s.user.features.len() != dim) {
        Some(s) => Err(Error::Data(format!(
            "{name}: user {} has {} features, expected {dim}",
            s.user.id,
            s.user.features.len()
        ))),
        None => Ok(()),
    }
}

/// Shared data plumbing: the `D_u` train/holdout split and the biased rows.
struct Prepared<'a> {
    du: &'a [Sample],
    db: &'a [Sample],
    du_train: Vec<usize>,
    holdout: Batch,
    norm: TreatmentNorm,
    dim: usize,
}

impl<'a> Prepared<'a> {
    fn new(
        config: &TrainConfig,
        du: &'a [Sample],
        db: &'a [Sample],
        treatments: &TreatmentList,
    ) -> Result<Self> {
        config.validate()?;
        if du.is_empty() {
            return Err(Error::invalid(
                "D_u is empty; it is needed for training and validation",
            ));
        }
        let dim = du[0].user.features.len();
        check_dim(du, dim, "D_u")?;
        check_dim(db, dim, "D_b")?;
        let norm = treatments.norm();
        let (du_train, hold) = holdout_split(du.len(), config.holdout_frac, config.seed)?;
        let holdout = Batch::gather(du, &hold, &norm);
        Ok(Self {
            du,
            db,
            du_train,
            holdout,
            norm,
            dim,
        })
    }
}

/// Early-stopping bookkeeping shared by every loop.
struct Stopper {
    best_auc: f64,
    best_cycle: usize,
    since_best: usize,
    patience: usize,
}

impl Stopper {
    fn new(patience: usize) -> Self {
        Self {
            best_auc: f64::NEG_INFINITY,
            best_cycle: 0,
            since_best: 0,
            patience,
        }
    }

    /// Returns whether this cycle improved on the best so far.
    fn observe(&mut self, cycle: usize, auc: f64) -> bool {
        if auc > self.best_auc {
            self.best_auc = auc;
            self.best_cycle = cycle;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    fn exhausted(&self) -> bool {
        self.since_best >= self.patience
    }
}

/// Step-level driver for the dual-tower schedule. [`train_pcan`] runs it to
/// completion; tests drive it one update at a time.
pub struct PcanSession<'a> {
    pub config: TrainConfig,
    pub model: PcanModel,
    data: Prepared<'a>,
    sampler_u: BatchSampler,
    sampler_b: BatchSampler,
    opt_unbiased: SbbmOptimizer,
    opt_biased: SbbmOptimizer,
    opt_disc: Optimizer,
    opt_gen: Optimizer,
    pub log: TrainLog,
    step: usize,
}

impl<'a> PcanSession<'a> {
    pub fn new(
        config: &TrainConfig,
        du: &'a [Sample],
        db: &'a [Sample],
        treatments: &TreatmentList,
    ) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::invalid("D_b is empty"));
        }
        let data = Prepared::new(config, du, db, treatments)?;
        let mut rng = stream_rng(config.seed, STREAM_INIT, 0);
        let arch = config.arch(data.dim);
        let model = PcanModel::new(&arch, Monotone::Softplus, &config.disc_hidden, &mut rng)?;
        let sampler_u = BatchSampler::new(
            data.du_train.clone(),
            config.batch_size,
            stream_rng(config.seed, STREAM_SAMPLER_U, 0),
        )?;
        let sampler_b = BatchSampler::new(
            (0..db.len()).collect(),
            config.batch_size,
            stream_rng(config.seed, STREAM_SAMPLER_B, 0),
        )?;
        Ok(Self {
            opt_unbiased: SbbmOptimizer::adam(&model.unbiased, config.lr_tower),
            opt_biased: SbbmOptimizer::adam(&model.biased, config.lr_tower),
            opt_disc: Optimizer::adam(&model.discriminator, config.lr_disc),
            opt_gen: Optimizer::adam(&model.biased.encoder, config.lr_gen),
            config: config.clone(),
            model,
            data,
            sampler_u,
            sampler_b,
            log: TrainLog::default(),
            step: 0,
        })
    }

    fn batch_u(&mut self) -> Batch {
        Batch::gather(self.data.du, self.sampler_u.next_indices(), &self.data.norm)
    }

    fn batch_b(&mut self) -> Batch {
        Batch::gather(self.data.db, self.sampler_b.next_indices(), &self.data.norm)
    }

    fn record(&mut self, cycle: usize, phase: Phase, update: Update, losses: [Option<f64>; 4]) {
        self.log.steps.push(StepRecord {
            cycle,
            step: self.step,
            phase,
            update,
            loss_b: losses[0],
            loss_u: losses[1],
            loss_disc: losses[2],
            loss_gen: losses[3],
        });
        self.step += 1;
    }

    /// One D_u batch into the UnbiasedNet loss and one D_b batch into the
    /// BiasedNet loss; both towers step.
    pub fn warmup_step(&mut self, cycle: usize) -> Result<()> {
        let (bu, bb) = (self.batch_u(), self.batch_b());
        let lu = self.model.unbiased.supervised_loss(&bu, None)?;
        let lb = self.model.biased.supervised_loss(&bb, None)?;
        check_finite(
            lu.loss,
            lu.grads.is_finite(),
            cycle,
            self.step,
            "UnbiasedNet",
        )?;
        check_finite(lb.loss, lb.grads.is_finite(), cycle, self.step, "BiasedNet")?;
        self.opt_unbiased
            .step(&mut self.model.unbiased, &lu.grads)?;
        self.opt_biased.step(&mut self.model.biased, &lb.grads)?;
        self.record(
            cycle,
            Phase::Warmup,
            Update::Supervised,
            [Some(lb.loss), Some(lu.loss), None, None],
        );
        Ok(())
    }

    pub fn disc_step(&mut self, cycle: usize) -> Result<()> {
        let (bu, bb) = (self.batch_u(), self.batch_b());
        let d = self.model.disc_loss(&bu, &bb)?;
        check_finite(
            d.total(),
            d.grads.is_finite(),
            cycle,
            self.step,
            "discriminator",
        )?;
        self.opt_disc
            .step(&mut self.model.discriminator, &d.grads)?;
        self.record(
            cycle,
            Phase::Adversarial,
            Update::Discriminator,
            [None, None, Some(d.total()), None],
        );
        Ok(())
    }

    /// Generator update of the BiasedNet encoder through the frozen discriminator.
    pub fn gen_step(&mut self, cycle: usize) -> Result<()> {
        let bb = self.batch_b();
        let g = self
            .model
            .gen_loss(&bb, self.config.generator_loss.into())?;
        check_finite(g.loss, g.encoder.is_finite(), cycle, self.step, "generator")?;
        self.opt_gen
            .step(&mut self.model.biased.encoder, &g.encoder)?;
        self.record(
            cycle,
            Phase::Adversarial,
            Update::Generator,
            [None, None, None, Some(g.loss)],
        );
        Ok(())
    }

    /// One full cycle: warm-up (unless skipped) then the adversarial phase.
    pub fn run_cycle(&mut self, cycle: usize) -> Result<()> {
        if cycle == 0 || !self.config.warmup_first_cycle_only {
            for _ in 0..self.config.n_w {
                self.warmup_step(cycle)?;
            }
        }
        for i in 0..self.config.adv_steps {
            if self.config.is_generator_step(i) {
                self.gen_step(cycle)?;
            } else {
                self.disc_step(cycle)?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<f64> {
        validate(&self.model.biased, &self.data.holdout)
    }

    fn trained(&self, model: PcanModel) -> TrainedModel {
        TrainedModel {
            method: Method::Pcan,
            model: ResponseModel::Pcan(model),
            norm: self.data.norm,
        }
    }

    pub fn run(mut self) -> Result<(TrainedModel, TrainLog)> {
        let mut stopper = Stopper::new(self.config.patience);
        let mut best = self.model.clone();
        for cycle in 0..self.config.max_cycles {
            self.run_cycle(cycle)?;
            let val = self.validate()?;
            let improved = stopper.observe(cycle, val);
            self.log.cycles.push(CycleRecord {
                cycle,
                val_auc: val,
                improved,
            });
            if improved {
                best = self.model.clone();
                if let Some(path) = &self.config.checkpoint_path {
                    self.trained(best.clone()).save(path)?;
                }
            }
            if stopper.exhausted() {
                self.log.stopped_early = true;
                break;
            }
        }
        self.log.best_cycle = stopper.best_cycle;
        self.log.best_auc = stopper.best_auc;
        Ok((self.trained(best), self.log))
    }
}

pub fn train_pcan(
    config: &TrainConfig,
    du: &[Sample],
    db: &[Sample],
    treatments: &TreatmentList,
) -> Result<(TrainedModel, TrainLog)> {
    PcanSession::new(config, du, db, treatments)?.run()
}

enum BaselineState {
    Single {
        model: SbbmModel,
        opt: SbbmOptimizer,
        weighting: Option<IpwWeighting>,
    },
    Pair {
        pair: CausePair,
        control: SbbmOptimizer,
        treatment: SbbmOptimizer,
    },
}

/// Mini-batch training for the five baselines with the same per-cycle step
/// budget and early stopping as PCAN.
pub fn train_baseline(
    method: Method,
    config: &TrainConfig,
    du: &[Sample],
    db: &[Sample],
    treatments: &TreatmentList,
) -> Result<(TrainedModel, TrainLog)> {
    if method == Method::Pcan {
        return Err(Error::invalid("pcan is not a baseline; use train_pcan"));
    }
    let data = Prepared::new(config, du, db, treatments)?;
    if method != Method::SbbmU && db.is_empty() {
        return Err(Error::invalid(format!("{method} needs a nonempty D_b")));
    }
    let mut rng = stream_rng(config.seed, STREAM_INIT, 0);
    let arch = config.arch(data.dim);

    // Pooled index space: D_u train rows first, then every D_b row.
    let pooled: Vec<&Sample> = data.du.iter().chain(db.iter()).collect();
    let offset = data.du.len();
    let all_b: Vec<usize> = (offset..offset + db.len()).collect();
    let sampler_u = || {
        BatchSampler::new(
            data.du_train.clone(),
            config.batch_size,
            stream_rng(config.seed, STREAM_SAMPLER_U, 0),
        )
    };
    let (mut sampler, mut sampler_b) = match method {
        Method::SbbmU => (sampler_u()?, None),
        Method::Cause => (
            sampler_u()?,
            Some(BatchSampler::new(
                all_b,
                config.batch_size,
                stream_rng(config.seed, STREAM_SAMPLER_B, 0),
            )?),
        ),
        _ => {
            let idx: Vec<usize> = data.du_train.iter().copied().chain(all_b).collect();
            (
                BatchSampler::new(
                    idx,
                    config.batch_size,
                    stream_rng(config.seed, STREAM_SAMPLER_U, 0),
                )?,
                None,
            )
        }
    };

    let mut state = match method {
        Method::Cause => {
            let control = SbbmModel::new(&arch, Monotone::Plain, &mut rng)?;
            let treatment = SbbmModel::new(&arch, Monotone::Plain, &mut rng)?;
            let pair = CausePair::new(control, treatment, config.cause_reg)?;
            BaselineState::Pair {
                control: SbbmOptimizer::adam(&pair.control, config.lr_tower),
                treatment: SbbmOptimizer::adam(&pair.treatment, config.lr_tower),
                pair,
            }
        }
        _ => {
            let model = SbbmModel::new(&arch, method.monotone(), &mut rng)?;
            BaselineState::Single {
                opt: SbbmOptimizer::adam(&model, config.lr_tower),
                model,
                weighting: (method == Method::Ipw).then_some(IpwWeighting {
                    clip_max: config.ipw_clip,
                }),
            }
        }
    };

    let gather = |idx: &[usize]| Batch::from_samples(idx.iter().map(|&i| pooled[i]), &data.norm);
    let mut log = TrainLog::default();
    let mut stopper = Stopper::new(config.patience);
    let mut best: Option<ResponseModel> = None;
    let mut step = 0usize;
    let wrap = |state: &BaselineState| match state {
        BaselineState::Single { model, .. } => ResponseModel::Sbbm(model.clone()),
        BaselineState::Pair { pair, .. } => ResponseModel::Cause(pair.clone()),
    };
    for cycle in 0..config.max_cycles {
        for k in 0..config.steps_per_cycle() {
            let phase = if k < config.n_w {
                Phase::Warmup
            } else {
                Phase::Adversarial
            };
            let (loss_b, loss_u) = match &mut state {
                BaselineState::Single {
                    model,
                    opt,
                    weighting,
                } => {
                    let batch = gather(sampler.next_indices());
                    let l = model.supervised_loss(&batch, weighting.as_ref())?;
                    check_finite(l.loss, l.grads.is_finite(), cycle, step, method.name())?;
                    opt.step(model, &l.grads)?;
                    if method == Method::SbbmU {
                        (None, Some(l.loss))
                    } else {
                        (Some(l.loss), None)
                    }
                }
                BaselineState::Pair {
                    pair,
                    control,
                    treatment,
                } => {
                    let bu = gather(sampler.next_indices());
                    let bb = gather(
                        sampler_b
                            .as_mut()
                            .expect("cause has a D_b sampler")
                            .next_indices(),
                    );
                    let l = pair.cause_loss(&bu, &bb)?;
                    let finite = l.control.is_finite() && l.treatment.is_finite();
                    check_finite(l.total(), finite, cycle, step, method.name())?;
                    control.step(&mut pair.control, &l.control)?;
                    treatment.step(&mut pair.treatment, &l.treatment)?;
                    (Some(l.ce_treatment), Some(l.ce_control))
                }
            };
            log.steps.push(StepRecord {
                cycle,
                step,
                phase,
                update: Update::Supervised,
                loss_b,
                loss_u,
                loss_disc: None,
                loss_gen: None,
            });
            step += 1;
        }
        let current = wrap(&state);
        let val = validate(current.deployable(), &data.holdout)?;
        let improved = stopper.observe(cycle, val);
        log.cycles.push(CycleRecord {
            cycle,
            val_auc: val,
            improved,
        });
        if improved {
            if let Some(path) = &config.checkpoint_path {
                TrainedModel {
                    method,
                    model: current.clone(),
                    norm: data.norm,
                }
                .save(path)?;
            }
            best = Some(current);
        }
        if stopper.exhausted() {
            log.stopped_early = true;
            break;
        }
    }
    log.best_cycle = stopper.best_cycle;
    log.best_auc = stopper.best_auc;
    let model = best.ok_or_else(|| Error::State("no training cycle completed".into()))?;
    Ok((
        TrainedModel {
            method,
            model,
            norm: data.norm,
        },
        log,
    ))
}

/// Dispatches to [`train_pcan`] or [`train_baseline`].
pub fn train(
    method: Method,
    config: &TrainConfig,
    du: &[Sample],
    db: &[Sample],
    treatments: &TreatmentList,
) -> Result<(TrainedModel, TrainLog)> {
    let out = match method {
        Method::Pcan => train_pcan(config, du, db, treatments),
        _ => train_baseline(method, config, du, db, treatments),
    };
    out.map_err(|e| e.with_method(method.name()))
}
