//! Compares analytic gradients of the supervised loss with central differences.

use pcan::models::{Batch, Monotone, SbbmArch, SbbmModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pcan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut arch = SbbmArch::new(4);
    arch.hidden = vec![6];
    arch.latent = 3;
    let mut model = SbbmModel::new(&arch, Monotone::Softplus, &mut rng)?;
    for i in 0..model.encoder.param_count() {
        model.encoder.set_param(i, rng.random_range(-0.8..0.8));
    }
    let n = 8;
    let batch = Batch {
        features: (0..n * 4).map(|_| rng.random_range(-2.0..2.0)).collect(),
        dim: 4,
        t: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        y: (0..n).map(|i| f64::from(i as u8 % 2)).collect(),
        propensity: None,
    };
    let grads = model.supervised_loss(&batch, None)?.grads;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..model.encoder.param_count() {
        let orig = model.encoder.param(i);
        model.encoder.set_param(i, orig + h);
        let up = model.supervised_loss(&batch, None)?.loss;
        model.encoder.set_param(i, orig - h);
        let down = model.supervised_loss(&batch, None)?.loss;
        model.encoder.set_param(i, orig);
        let fd = (up - down) / (2.0 * h);
        let a = grads.encoder.get(i);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    println!("encoder parameters: {}", model.encoder.param_count());
    println!("worst relative error: {worst:.2e}");
    Ok(())
}
