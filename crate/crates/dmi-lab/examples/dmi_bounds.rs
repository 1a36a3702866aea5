//! Randomized check of the decomposed-MI bound: for any joint and any
//! candidate subset with both regions non-degenerate,
//! `-λ·log|S| ≤ I_D ≤ log|S|`.
//!
//! Run with: `cargo run --release --example dmi_bounds`

use dmi_lab::dmi::{bound_check, dmi, ClassSubset, DmiConfig};
use dmi_lab::prob::JointDistribution;
use dmi_lab::rng::Rng;
use dmi_lab::tensor::Tensor;

fn random_joint(rng: &mut Rng, k: usize, sparsity: f64) -> JointDistribution {
    loop {
        let mut t = Tensor::from_fn(k, k, |_, _| {
            if rng.uniform() < sparsity {
                0.0
            } else {
                rng.uniform()
            }
        });
        let total: f64 = t.data().iter().sum();
        if total < 1e-6 {
            continue;
        }
        for v in t.data_mut() {
            *v /= total;
        }
        return JointDistribution::new(t).expect("normalized joint");
    }
}

fn main() {
    let mut rng = Rng::new(2024);
    let trials_per_lambda = 25_000;

    for lambda in [0.1, 0.5, 1.0, 2.0] {
        let cfg = DmiConfig::with_lambda(lambda).expect("valid lambda");
        let mut violations = 0usize;
        let mut tightest = f64::INFINITY;
        let mut checked = 0usize;

        while checked < trials_per_lambda {
            let k = 5 + rng.below(60);
            let sparsity = 0.5 * rng.uniform();
            let joint = random_joint(&mut rng, k, sparsity);
            let size = 2 + rng.below(k - 3);
            let subset = ClassSubset::new(k, rng.subset(k, size)).expect("subset");
            if subset.complement_size() < 2 {
                continue;
            }
            checked += 1;
            let b = dmi(&joint, &subset, &cfg).expect("dmi");
            let check = bound_check(&b, &cfg);
            if !check.pass {
                violations += 1;
            }
            tightest = tightest.min(check.margin);
        }

        println!(
            "lambda {lambda:>3}: {checked} random (joint, subset) pairs, \
             {violations} violations, smallest margin to a bound {tightest:.3e}"
        );
    }

    // the bound is attained: a diagonal block joint sits exactly on it
    let mut t = Tensor::zeros(vec![4, 4]);
    t.set(0, 0, 0.5);
    t.set(1, 1, 0.5);
    let joint = JointDistribution::new(t).expect("joint");
    let subset = ClassSubset::new(4, [0, 1]).expect("subset");
    let cfg = DmiConfig::with_lambda(1.0).expect("lambda");
    let b = dmi(&joint, &subset, &cfg).expect("dmi");
    println!(
        "diagonal joint on S = {{0,1}}: value {:.6} vs upper bound log 2 = {:.6}",
        b.value,
        2.0_f64.ln()
    );
}
