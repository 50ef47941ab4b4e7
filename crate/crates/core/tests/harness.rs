use std::fs;
use std::path::Path;

use pcan::allocator::{write_scores_csv, AllocationProblem};
use pcan::harness::{self, AllocateInput, ExperimentConfig};
use pcan::models::Method;
use pcan::synth::{Campaign, CampaignConfig, TreatmentList};
use pcan::trainer::TrainConfig;
use pcan::Error;

fn small(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        n_users: 3000,
        n_test: 500,
        unbiased_frac: 0.1,
        out_dir: dir.to_path_buf(),
        methods: vec!["sbbm_u".into(), "pcan".into()],
        fractions: vec![0.05, 0.2],
        sweep_seeds: vec![1],
        train: TrainConfig {
            max_cycles: 2,
            hidden: vec![8],
            latent: 4,
            disc_hidden: vec![4],
            batch_size: 64,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = harness::cmd_generate(&small(a.path())).unwrap();
    let mb = harness::cmd_generate(&small(b.path())).unwrap();
    assert_eq!(ma, mb);
    for f in ["d_u.csv", "d_b.csv", "test.csv", "manifest.json"] {
        let pa = a.path().join("data").join(f);
        assert_eq!(
            fs::read(&pa).unwrap(),
            fs::read(b.path().join("data").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(ma.files["d_u.csv"].rows, 300);
    assert_eq!(ma.files["d_b.csv"].rows, 2700);
    assert_eq!(ma.files["test.csv"].rows, 500);
}

#[test]
fn default_split_sizes() {
    let c = Campaign::new(&CampaignConfig::default()).unwrap();
    let ds = c.gen_dataset(100_000, 0.05, 1).unwrap();
    assert_eq!((ds.unbiased.len(), ds.biased.len()), (5000, 95_000));
}

#[test]
fn tampered_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    harness::cmd_generate(&cfg).unwrap();
    let path = dir.path().join("data/d_b.csv");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = if bytes[last] == b'0' { b'1' } else { b'0' };
    fs::write(&path, bytes).unwrap();
    assert!(matches!(
        harness::load_data(&dir.path().join("data")),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        harness::cmd_train(&cfg, Method::SbbmU),
        Err(Error::Data(_))
    ));
}

#[test]
fn train_then_evaluate_then_allocate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    harness::cmd_generate(&cfg).unwrap();
    for m in cfg.method_list().unwrap() {
        let log = harness::cmd_train(&cfg, m).unwrap();
        assert!((0.0..=1.0).contains(&log.best_auc));
        assert!(dir.path().join(format!("logs/{m}_train.csv")).exists());
    }
    let report = harness::cmd_evaluate(&cfg).unwrap();
    assert_eq!(report.methods.len(), 2);
    for f in [
        "metrics.csv",
        "calibration.csv",
        "response.csv",
        "report.txt",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let input = AllocateInput::Model {
        checkpoint: harness::model_path(&cfg, Method::Pcan),
        users: None,
    };
    let run = harness::cmd_allocate(&cfg, &input, Some(2.0)).unwrap();
    assert!(run.result.per_capita_spend <= 2.0 + 1e-9);
    assert_eq!(run.users, 500);
    let text = fs::read_to_string(dir.path().join("allocation/pcan.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 501);
    assert!(text.contains("# expected_payments="));
}

#[test]
fn baseline_alone_has_zero_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        methods: vec!["sbbm_u".into()],
        ..small(dir.path())
    };
    let out = harness::cmd_experiment(&cfg).unwrap();
    let imp = out.report.improvements().unwrap();
    assert_eq!(imp.len(), 1);
    assert_eq!((imp[0].auc, imp[0].pce), (0.0, 0.0));
    assert!(dir.path().join("bias_curves.csv").exists());
    assert!(dir.path().join("allocation.csv").exists());
}

#[test]
fn sweep_covers_every_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = harness::cmd_sweep(&cfg).unwrap();
    // fractions x seeds x methods
    assert_eq!(out.rows.len(), 4);
    assert_eq!(out.trends.len(), 2);
    assert!(out
        .trends
        .iter()
        .all(|t| t.mean_auc.len() == 2 && t.auc_range >= 0.0));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(dir.path().join("sweep_trend.csv").exists());
}

fn scores_file(dir: &Path) -> std::path::PathBuf {
    let tl = TreatmentList::new(vec![1.0, 2.0, 3.0]).unwrap();
    let scores = vec![0.1, 0.5, 0.6, 0.2, 0.3, 0.9, 0.4, 0.4, 0.4];
    let p = AllocationProblem::new(scores, tl, None, 2.0).unwrap();
    let path = dir.join("scores.csv");
    let mut f = fs::File::create(&path).unwrap();
    write_scores_csv(&mut f, &[7, 8, 9], &p).unwrap();
    path
}

#[test]
fn allocate_from_scores_at_budget_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let input = AllocateInput::Scores(scores_file(dir.path()));
    let low = harness::cmd_allocate(&cfg, &input, Some(1.0)).unwrap();
    assert_eq!(low.result.assignment, vec![0, 0, 0]);
    let high = harness::cmd_allocate(&cfg, &input, Some(3.0)).unwrap();
    // unconstrained argmax, ties to the cheapest level
    assert_eq!(high.result.assignment, vec![2, 2, 0]);
    assert!(matches!(
        harness::cmd_allocate(&cfg, &input, Some(0.5)),
        Err(Error::Infeasible(_))
    ));
}
