//! Trains every method on one dataset and prints the evaluation table.

use pcan::harness::{cmd_experiment, ExperimentConfig};

fn main() -> pcan::Result<()> {
    let dir = std::env::temp_dir().join("pcan-compare-methods");
    let cfg = ExperimentConfig {
        n_users: 30_000,
        n_test: 5_000,
        out_dir: dir.clone(),
        ..ExperimentConfig::default()
    };
    let out = cmd_experiment(&cfg)?;
    print!("{}", out.report.text_table()?);
    println!("outputs in {}", dir.display());
    Ok(())
}
