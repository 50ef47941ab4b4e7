use pcan::diffcore::Activation;
use pcan::models::{Method, Monotone, ResponseModel, SbbmArch, SbbmModel, TrainedModel};
use pcan::synth::{Campaign, CampaignConfig, TreatmentList};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(seed: u64, monotone: Monotone) -> SbbmModel {
    let arch = SbbmArch {
        input: 3,
        hidden: vec![8, 8],
        latent: 4,
        activation: Activation::Relu,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SbbmModel::new(&arch, monotone, &mut rng).unwrap();
    // a strongly negative slope head, which the softplus form must still bend upward
    let n = m.head_g.param_count();
    m.head_g.set_param(n - 1, -4.0);
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softplus_response_is_nondecreasing(
        seed in 0u64..1000,
        x in prop::collection::vec(-3.0f64..3.0, 3),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let m = model(seed, Monotone::Softplus);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.predict(&x, lo).unwrap() <= m.predict(&x, hi).unwrap());
    }

    #[test]
    fn logging_propensities_are_floored_distributions(
        x in prop::collection::vec(-4.0f64..4.0, 8),
        id in 0u64..1_000_000,
    ) {
        let c = Campaign::new(&CampaignConfig::default()).unwrap();
        let user = pcan::synth::UserProfile { id, activity: c.engagement.activity(&x), features: x };
        for policy in [&c.uniform, &c.biased] {
            let p = policy.propensities(&user);
            prop_assert_eq!(p.len(), c.treatments.len());
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= policy.floor() - 1e-15 && v <= 1.0));
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..200) {
        let tl = TreatmentList::new(vec![1.0, 2.5, 4.0]).unwrap();
        let tm = TrainedModel {
            method: Method::SbbmSoftplus,
            model: ResponseModel::Sbbm(model(seed, Monotone::Softplus)),
            norm: tl.norm(),
        };
        let ck = tm.to_checkpoint();
        let back = TrainedModel::from_checkpoint(&ck, Some(Method::SbbmSoftplus)).unwrap();
        prop_assert_eq!(back.to_checkpoint().to_bytes(), ck.to_bytes());
        prop_assert_eq!(back.predict_raw(&[0.1, 0.2, 0.3], 2.5).unwrap(), tm.predict_raw(&[0.1, 0.2, 0.3], 2.5).unwrap());
    }
}

#[test]
fn plain_slope_can_decrease() {
    let m = model(3, Monotone::Plain);
    let x = [0.5, -0.5, 1.0];
    assert!(m.predict(&x, 1.0).unwrap() < m.predict(&x, 0.0).unwrap());
}
