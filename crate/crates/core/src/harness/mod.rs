//! End-to-end commands: dataset generation, training, evaluation, budgeted
//! allocation, the method comparison and the unbiased-fraction sweep.
//!
//! Every file written here is a pure function of the config and seed.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::ExperimentConfig;

use crate::allocator::{
    allocate_dual, read_scores_csv, summary_line, write_allocation_csv, AllocationProblem,
    AllocationResult,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, spearman, EvalReport, MethodEval};
use crate::models::{Method, TrainedModel};
use crate::synth::{
    empirical_curve, fmt_float, load_samples, samples_to_csv_bytes, Campaign, Sample, UserProfile,
};
use crate::trainer::{train, TrainLog};

/// Test users get ids far above any training id.
pub const TEST_ID_OFFSET: u64 = 1 << 40;
pub const DUAL_TOL: f64 = 1e-6;
pub const DUAL_MAX_ITER: usize = 200;

const DATA_DIR: &str = "data";
const MODEL_DIR: &str = "models";
const LOG_DIR: &str = "logs";
const FILE_DU: &str = "d_u.csv";
const FILE_DB: &str = "d_b.csv";
const FILE_TEST: &str = "test.csv";
const FILE_MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub rows: usize,
    pub sha256: String,
}

/// Written next to the dataset; later commands refuse files whose hash differs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Hash of the settings that determine the data.
    pub fingerprint: String,
    pub seed: u64,
    pub n_users: usize,
    pub n_test: usize,
    pub unbiased_frac: f64,
    pub dim: usize,
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Clone, Debug)]
pub struct LoadedData {
    pub unbiased: Vec<Sample>,
    pub biased: Vec<Sample>,
    pub test: Vec<Sample>,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn data_fingerprint(cfg: &ExperimentConfig, seed: u64, frac: f64) -> String {
    let campaign = toml::to_string(&cfg.campaign).expect("campaign config serializes");
    let key = format!(
        "{campaign}\nseed={seed}\nn_users={}\nn_test={}\nfrac={}",
        cfg.n_users,
        cfg.n_test,
        fmt_float(frac)
    );
    sha256_hex(key.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(DATA_DIR)
}

pub fn model_path(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    cfg.out_dir
        .join(MODEL_DIR)
        .join(format!("{}.ckpt", method.name()))
}

/// Logged `D_u`/`D_b` and a random-policy test set, in memory.
pub fn generate_data(
    cfg: &ExperimentConfig,
    seed: u64,
    frac: f64,
) -> Result<(Campaign, Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    let campaign = Campaign::new(&cfg.campaign)?;
    let ds = campaign.gen_dataset(cfg.n_users, frac, seed)?;
    let test = campaign.gen_test(cfg.n_test, seed, TEST_ID_OFFSET)?;
    Ok((campaign, ds.unbiased, ds.biased, test))
}

/// Writes `data/{d_u,d_b,test}.csv` and the hash manifest.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let (_, du, db, test) = generate_data(cfg, cfg.seed, cfg.unbiased_frac)?;
    let dir = data_dir(cfg);
    let dim = cfg.campaign.dim;
    let mut files = BTreeMap::new();
    for (name, rows) in [(FILE_DU, &du), (FILE_DB, &db), (FILE_TEST, &test)] {
        let bytes = samples_to_csv_bytes(rows, dim)?;
        write_file(&dir.join(name), &bytes)?;
        files.insert(
            name.to_string(),
            FileEntry {
                rows: rows.len(),
                sha256: sha256_hex(&bytes),
            },
        );
    }
    let manifest = Manifest {
        fingerprint: data_fingerprint(cfg, cfg.seed, cfg.unbiased_frac),
        seed: cfg.seed,
        n_users: cfg.n_users,
        n_test: cfg.n_test,
        unbiased_frac: cfg.unbiased_frac,
        dim,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    write_file(&dir.join(FILE_MANIFEST), format!("{json}\n").as_bytes())?;
    info!(
        "generated |D_u|={} |D_b|={} |test|={} in {}",
        du.len(),
        db.len(),
        test.len(),
        dir.display()
    );
    Ok(manifest)
}

/// Loads the dataset under `dir`, checking every file against the manifest.
pub fn load_data(dir: &Path) -> Result<LoadedData> {
    let text = fs::read_to_string(dir.join(FILE_MANIFEST))
        .map_err(|e| Error::Data(format!("{}: {e}", dir.join(FILE_MANIFEST).display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
    let load = |name: &str| -> Result<Vec<Sample>> {
        let path = dir.join(name);
        let bytes = fs::read(&path)?;
        let entry = manifest
            .files
            .get(name)
            .ok_or_else(|| Error::Data(format!("manifest has no entry for {name}")))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Data(format!(
                "{} does not match its manifest hash; regenerate the dataset",
                path.display()
            )));
        }
        let rows = crate::synth::read_samples_csv(&bytes[..])?;
        if rows.len() != entry.rows {
            return Err(Error::Data(format!(
                "{name}: {} rows, manifest says {}",
                rows.len(),
                entry.rows
            )));
        }
        Ok(rows)
    };
    Ok(LoadedData {
        unbiased: load(FILE_DU)?,
        biased: load(FILE_DB)?,
        test: load(FILE_TEST)?,
        manifest,
    })
}

/// Loads the dataset if it exists and was generated from this config,
/// otherwise generates it.
pub fn ensure_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let dir = data_dir(cfg);
    if dir.join(FILE_MANIFEST).exists() {
        let data = load_data(&dir)?;
        if data.manifest.fingerprint == data_fingerprint(cfg, cfg.seed, cfg.unbiased_frac) {
            return Ok(data);
        }
        info!(
            "dataset in {} was generated from other settings; regenerating",
            dir.display()
        );
    }
    cmd_generate(cfg)?;
    load_data(&dir)
}

fn train_one(
    cfg: &ExperimentConfig,
    method: Method,
    data: &LoadedData,
) -> Result<(TrainedModel, TrainLog)> {
    let campaign = Campaign::new(&cfg.campaign)?;
    let mut tc = cfg.train_config(method, cfg.seed)?;
    let path = model_path(cfg, method);
    fs::create_dir_all(path.parent().expect("model path has a parent"))?;
    tc.checkpoint_path = Some(path.clone());
    let (model, log) = train(
        method,
        &tc,
        &data.unbiased,
        &data.biased,
        &campaign.treatments,
    )?;
    model
        .save(&path)
        .map_err(|e| e.with_method(method.name()))?;
    let log_path = cfg
        .out_dir
        .join(LOG_DIR)
        .join(format!("{}_train.csv", method.name()));
    write_file(&log_path, log.to_csv().as_bytes())?;
    info!(
        "{method}: best validation AUC {:.4} at cycle {} of {}",
        log.best_auc,
        log.best_cycle,
        log.cycles.len()
    );
    Ok((model, log))
}

/// Trains one method on the (hash-checked) dataset and writes its checkpoint
/// and training log.
pub fn cmd_train(cfg: &ExperimentConfig, method: Method) -> Result<TrainLog> {
    cfg.validate()?;
    let data = ensure_data(cfg)?;
    Ok(train_one(cfg, method, &data)?.1)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_file(&dir.join("metrics.csv"), report.metrics_csv()?.as_bytes())?;
    write_file(
        &dir.join("calibration.csv"),
        report.calibration_csv().as_bytes(),
    )?;
    write_file(&dir.join("response.csv"), report.response_csv().as_bytes())?;
    write_file(&dir.join("report.txt"), report.text_table()?.as_bytes())?;
    Ok(())
}

/// Evaluates the saved checkpoints of every configured method on the test set.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let data = load_data(&data_dir(cfg))?;
    let campaign = Campaign::new(&cfg.campaign)?;
    let evals = cfg
        .method_list()?
        .into_iter()
        .map(|m| {
            let model = TrainedModel::load(model_path(cfg, m), Some(m))
                .map_err(|e| e.with_method(m.name()))?;
            evaluate(m.name(), &model, &data.test, &campaign.treatments)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::new(&cfg.baseline, evals)?;
    write_report(&cfg.out_dir, &report)?;
    Ok(report)
}

/// Allocation of one model's scores plus, on synthetic data, the expected
/// number of payments under the true response.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationRun {
    pub method: String,
    pub result: AllocationResult,
    pub expected_payments: Option<f64>,
    pub users: usize,
}

/// Scores every (user, level) pair with `model` and allocates under `budget`.
pub fn allocate_with_model(
    model: &TrainedModel,
    campaign: &Campaign,
    users: &[UserProfile],
    budget: f64,
) -> Result<(AllocationProblem, AllocationRun)> {
    let scores = model.score_matrix(users, &campaign.treatments)?;
    let problem = AllocationProblem::new(scores, campaign.treatments.clone(), None, budget)?;
    let result = allocate_dual(&problem, DUAL_TOL, DUAL_MAX_ITER)?;
    let t = campaign.treatments.values();
    let expected = users
        .iter()
        .zip(&result.assignment)
        .map(|(u, &j)| campaign.true_mpp(u, t[j]))
        .sum::<Result<f64>>()?;
    Ok((
        problem,
        AllocationRun {
            method: model.method.name().to_string(),
            result,
            expected_payments: Some(expected),
            users: users.len(),
        },
    ))
}

pub enum AllocateInput {
    /// A checkpoint and a dataset-format users file (defaults: the
    /// experiment's model and test set).
    Model {
        checkpoint: PathBuf,
        users: Option<PathBuf>,
    },
    /// A precomputed `# treatments:` scores file; no oracle lift.
    Scores(PathBuf),
}

/// Writes `allocation/<name>.csv` and returns the run summary.
pub fn cmd_allocate(
    cfg: &ExperimentConfig,
    input: &AllocateInput,
    budget: Option<f64>,
) -> Result<AllocationRun> {
    cfg.validate()?;
    let budget = budget.unwrap_or(cfg.budget);
    let (name, ids, problem, run) = match input {
        AllocateInput::Scores(path) => {
            let file = fs::File::open(path)?;
            let (ids, problem) = read_scores_csv(std::io::BufReader::new(file), budget)?;
            let result = allocate_dual(&problem, DUAL_TOL, DUAL_MAX_ITER)?;
            let run = AllocationRun {
                method: "scores".into(),
                result,
                expected_payments: None,
                users: ids.len(),
            };
            ("scores".to_string(), ids, problem, run)
        }
        AllocateInput::Model { checkpoint, users } => {
            let model = TrainedModel::load(checkpoint, None)?;
            let campaign = Campaign::new(&cfg.campaign)?;
            let users_path = users
                .clone()
                .unwrap_or_else(|| data_dir(cfg).join(FILE_TEST));
            let users: Vec<UserProfile> = load_samples(&users_path)?
                .into_iter()
                .map(|s| s.user)
                .collect();
            let ids = users.iter().map(|u| u.id).collect();
            let (problem, run) = allocate_with_model(&model, &campaign, &users, budget)?;
            (model.method.name().to_string(), ids, problem, run)
        }
    };
    let mut buf = Vec::new();
    write_allocation_csv(&mut buf, &ids, &problem, &run.result)?;
    if let Some(e) = run.expected_payments {
        writeln!(buf, "# expected_payments={}", fmt_float(e))?;
    }
    write_file(
        &cfg.out_dir.join("allocation").join(format!("{name}.csv")),
        &buf,
    )?;
    info!("{}", summary_line(&run.result));
    Ok(run)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub logs: Vec<(Method, TrainLog)>,
    pub allocations: Vec<AllocationRun>,
    /// Per-level payment rate in `D_b` and `D_u`.
    pub empirical_biased: Vec<f64>,
    pub empirical_random: Vec<f64>,
}

impl ExperimentOutcome {
    pub fn eval(&self, method: Method) -> Option<&MethodEval> {
        self.report.get(method.name())
    }

    pub fn allocation(&self, method: Method) -> Option<&AllocationRun> {
        self.allocations.iter().find(|a| a.method == method.name())
    }
}

fn curve_means(samples: &[Sample], campaign: &Campaign) -> Result<Vec<f64>> {
    empirical_curve(samples, &campaign.treatments)
        .into_iter()
        .map(|p| {
            p.mean
                .ok_or_else(|| Error::Data(format!("no logged samples at incentive {}", p.t)))
        })
        .collect()
}

fn allocation_csv(runs: &[AllocationRun]) -> String {
    let mut s = String::from("method,lambda,total_mpp,per_capita_spend,expected_payments,users\n");
    for r in runs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            r.result.lambda.map(fmt_float).unwrap_or_default(),
            fmt_float(r.result.total_mpp),
            fmt_float(r.result.per_capita_spend),
            r.expected_payments.map(fmt_float).unwrap_or_default(),
            r.users
        );
    }
    s
}

/// Trains every configured method on the same dataset and seed, evaluates on
/// the random test set and allocates the test users under the budget.
pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = ensure_data(cfg)?;
    let campaign = Campaign::new(&cfg.campaign)?;
    let methods = cfg.method_list()?;
    let trained = methods
        .par_iter()
        .map(|&m| train_one(cfg, m, &data).map(|(model, log)| (m, model, log)))
        .collect::<Result<Vec<_>>>()?;
    let users: Vec<UserProfile> = data.test.iter().map(|s| s.user.clone()).collect();
    let mut evals = Vec::new();
    let mut allocations = Vec::new();
    let mut logs = Vec::new();
    for (m, model, log) in trained {
        evals.push(evaluate(
            m.name(),
            &model,
            &data.test,
            &campaign.treatments,
        )?);
        let (_, run) = allocate_with_model(&model, &campaign, &users, cfg.budget)
            .map_err(|e| e.with_method(m.name()))?;
        allocations.push(run);
        logs.push((m, log));
    }
    let report = EvalReport::new(&cfg.baseline, evals)?;
    write_report(&cfg.out_dir, &report)?;
    write_file(
        &cfg.out_dir.join("allocation.csv"),
        allocation_csv(&allocations).as_bytes(),
    )?;

    let empirical_biased = curve_means(&data.biased, &campaign)?;
    let empirical_random = curve_means(&data.unbiased, &campaign)?;
    let mut curves = String::from("curve,t,value\n");
    for (name, vals) in [
        ("empirical_biased", &empirical_biased),
        ("empirical_random", &empirical_random),
    ] {
        for (t, v) in campaign.treatments.values().iter().zip(vals.iter()) {
            let _ = writeln!(curves, "{name},{},{}", fmt_float(*t), fmt_float(*v));
        }
    }
    for e in &report.methods {
        for (t, v) in &e.response {
            let _ = writeln!(curves, "{},{},{}", e.method, fmt_float(*t), fmt_float(*v));
        }
    }
    write_file(&cfg.out_dir.join("bias_curves.csv"), curves.as_bytes())?;
    Ok(ExperimentOutcome {
        report,
        logs,
        allocations,
        empirical_biased,
        empirical_random,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub seed: u64,
    pub method: Method,
    pub auc: f64,
    pub pce: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTrend {
    pub method: Method,
    /// Seed-averaged AUC per fraction, in sweep order.
    pub mean_auc: Vec<f64>,
    pub spearman: f64,
    /// `max - min` of the seed-averaged AUC.
    pub auc_range: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub fractions: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub trends: Vec<SweepTrend>,
}

/// For each fraction and sweep seed: regenerate the split, retrain every
/// method, evaluate. Writes `sweep.csv` and `sweep_trend.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    if cfg.fractions.is_empty() {
        return Err(Error::Config("sweep needs at least one fraction".into()));
    }
    let methods = cfg.method_list()?;
    let mut rows = Vec::new();
    for &fraction in &cfg.fractions {
        for &seed in &cfg.sweep_seeds {
            let (campaign, du, db, test) = generate_data(cfg, seed, fraction)?;
            let evals = methods
                .par_iter()
                .map(|&m| {
                    let tc = cfg.train_config(m, seed)?;
                    let (model, _) = train(m, &tc, &du, &db, &campaign.treatments)?;
                    let e = evaluate(m.name(), &model, &test, &campaign.treatments)?;
                    Ok(SweepRow {
                        fraction,
                        seed,
                        method: m,
                        auc: e.auc,
                        pce: e.pce,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            info!("sweep fraction {fraction} seed {seed} done");
            rows.extend(evals);
        }
    }
    let trends: Vec<SweepTrend> = methods
        .iter()
        .map(|&m| {
            let mean_auc: Vec<f64> = cfg
                .fractions
                .iter()
                .map(|&f| {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.method == m && r.fraction == f)
                        .map(|r| r.auc)
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect();
            let hi = mean_auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = mean_auc.iter().copied().fold(f64::INFINITY, f64::min);
            SweepTrend {
                method: m,
                spearman: spearman(&cfg.fractions, &mean_auc),
                auc_range: hi - lo,
                mean_auc,
            }
        })
        .collect();

    let mut csv = String::from("fraction,seed,method,auc,pce\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_float(r.fraction),
            r.seed,
            r.method,
            fmt_float(r.auc),
            fmt_float(r.pce)
        );
    }
    write_file(&cfg.out_dir.join("sweep.csv"), csv.as_bytes())?;
    let mut trend = String::from("method,spearman_fraction_auc,auc_range");
    for f in &cfg.fractions {
        let _ = write!(trend, ",mean_auc_{}", fmt_float(*f));
    }
    trend.push('\n');
    for t in &trends {
        let _ = write!(
            trend,
            "{},{},{}",
            t.method,
            fmt_float(t.spearman),
            fmt_float(t.auc_range)
        );
        for v in &t.mean_auc {
            let _ = write!(trend, ",{}", fmt_float(*v));
        }
        trend.push('\n');
    }
    write_file(&cfg.out_dir.join("sweep_trend.csv"), trend.as_bytes())?;
    Ok(SweepOutcome {
        fractions: cfg.fractions.clone(),
        rows,
        trends,
    })
}
