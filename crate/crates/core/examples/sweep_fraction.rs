//! AUC as the share of randomly logged users grows, on a reduced setup.

use pcan::harness::{cmd_sweep, ExperimentConfig};

fn main() -> pcan::Result<()> {
    let cfg = ExperimentConfig {
        n_users: 20_000,
        n_test: 4_000,
        methods: vec!["sbbm_u".into(), "sbbm_b".into(), "pcan".into()],
        fractions: vec![0.02, 0.05, 0.1, 0.2],
        sweep_seeds: vec![1],
        out_dir: std::env::temp_dir().join("pcan-sweep-fraction"),
        ..ExperimentConfig::default()
    };
    let out = cmd_sweep(&cfg)?;
    println!("fractions {:?}", out.fractions);
    for t in &out.trends {
        let aucs: Vec<String> = t.mean_auc.iter().map(|a| format!("{a:.4}")).collect();
        println!(
            "{:<14} {}  spearman {:+.2}",
            t.method.name(),
            aucs.join(" "),
            t.spearman
        );
    }
    Ok(())
}
