//! Generates a small campaign and prints how the two logging policies differ.

use pcan::synth::{empirical_curve, Campaign, CampaignConfig};

fn main() -> pcan::Result<()> {
    let campaign = Campaign::new(&CampaignConfig::default())?;
    let ds = campaign.gen_dataset(20_000, 0.05, 1)?;
    println!("|D_u| = {}, |D_b| = {}", ds.unbiased.len(), ds.biased.len());
    println!("{:>6} {:>10} {:>10}", "t", "random", "biased");
    let random = empirical_curve(&ds.unbiased, &campaign.treatments);
    let biased = empirical_curve(&ds.biased, &campaign.treatments);
    for (r, b) in random.iter().zip(&biased) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:>6.2} {:>10} {:>10}", r.t, fmt(r.mean), fmt(b.mean));
    }
    Ok(())
}
