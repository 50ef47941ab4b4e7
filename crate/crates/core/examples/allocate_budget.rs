//! Dual allocation on random scores, checked against exhaustive search.

use pcan::allocator::{allocate_bruteforce, allocate_dual, summary_line, AllocationProblem};
use pcan::synth::TreatmentList;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pcan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let treatments = TreatmentList::linear(5, 1.0, 5.0)?;
    let users = 8;
    // increasing in t per user, as a monotone model would score
    let mut scores = Vec::new();
    for _ in 0..users {
        let base: f64 = rng.random_range(0.05..0.4);
        let lift: f64 = rng.random_range(0.0..0.12);
        scores.extend((0..5).map(|j| (base + lift * j as f64).min(1.0)));
    }
    for budget in [1.0, 2.0, 3.0, 4.5] {
        let p = AllocationProblem::new(scores.clone(), treatments.clone(), None, budget)?;
        let dual = allocate_dual(&p, 1e-9, 200)?;
        let exact = allocate_bruteforce(&p)?;
        println!("B={budget}: {}", summary_line(&dual));
        println!(
            "      assignment {:?}, exhaustive optimum {:.4}",
            dual.assignment, exact.total_mpp
        );
    }
    Ok(())
}
