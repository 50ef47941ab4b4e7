//! The confounded payment curve in biased logs next to the randomized one and
//! the population response of a plain and a monotone model.

use pcan::metrics::response_curve;
use pcan::models::Method;
use pcan::synth::{Campaign, CampaignConfig};
use pcan::trainer::{train, TrainConfig};

fn main() -> pcan::Result<()> {
    let campaign = Campaign::new(&CampaignConfig::default())?;
    let ds = campaign.gen_dataset(30_000, 0.05, 1)?;
    let users: Vec<_> = ds.unbiased.iter().map(|s| s.user.clone()).collect();
    let cfg = TrainConfig {
        max_cycles: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    let random = pcan::synth::empirical_curve(&ds.unbiased, &campaign.treatments);
    let biased = pcan::synth::empirical_curve(&ds.biased, &campaign.treatments);
    let truth = response_curve(&campaign.oracle, &users, &campaign.treatments)?;
    println!("{:>4} {:>9} {:>9} {:>9}", "t", "random", "biased", "true");
    for ((r, b), (t, f)) in random.iter().zip(&biased).zip(&truth) {
        println!(
            "{t:>4.1} {:>9.4} {:>9.4} {f:>9.4}",
            r.mean.unwrap_or(f64::NAN),
            b.mean.unwrap_or(f64::NAN)
        );
    }
    for m in [Method::SbbmB, Method::SbbmSoftplus] {
        let (model, _) = train(m, &cfg, &ds.unbiased, &ds.biased, &campaign.treatments)?;
        let curve = response_curve(&model, &users, &campaign.treatments)?;
        let vals: Vec<String> = curve.iter().map(|(_, v)| format!("{v:.4}")).collect();
        println!("{:<14} {}", m.name(), vals.join(" "));
    }
    Ok(())
}
