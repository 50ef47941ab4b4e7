//! Trains the adversarial model on a small campaign and prints the cycle log.

use pcan::synth::{Campaign, CampaignConfig};
use pcan::trainer::{train_pcan, TrainConfig};

fn main() -> pcan::Result<()> {
    let campaign = Campaign::new(&CampaignConfig::default())?;
    let ds = campaign.gen_dataset(20_000, 0.1, 1)?;
    let cfg = TrainConfig {
        max_cycles: 15,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, log) = train_pcan(&cfg, &ds.unbiased, &ds.biased, &campaign.treatments)?;
    for c in &log.cycles {
        println!(
            "cycle {:>3}  val AUC {:.4}{}",
            c.cycle,
            c.val_auc,
            if c.improved { "  *" } else { "" }
        );
    }
    println!("best cycle {} (AUC {:.4})", log.best_cycle, log.best_auc);
    let x = &ds.unbiased[0].user.features;
    for &t in campaign.treatments.values() {
        println!("f(x0, {t:.0}) = {:.4}", model.predict_raw(x, t)?);
    }
    Ok(())
}
