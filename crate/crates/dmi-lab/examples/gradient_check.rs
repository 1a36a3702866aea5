//! Finite-difference validation of every training loss: builds each loss on
//! random mini-batches and compares analytic gradients against central
//! differences.
//!
//! Run with: `cargo run --release --example gradient_check`

use std::collections::BTreeMap;

use dmi_lab::adapt::{
    build_mda_loss, build_tca_loss, mda_gating, tca_subsets, AdaptConfig, Objective,
};
use dmi_lab::exp::canonical_adapt;
use dmi_lab::models::{forward_classifier, ClassifierConfig, ClassifierParams};
use dmi_lab::prob::ProbMatrix;
use dmi_lab::rng::Rng;
use dmi_lab::tensor::{grad_check, Graph, Tensor};

fn random_probs(rng: &mut Rng, n: usize, k: usize) -> ProbMatrix {
    let logits = Tensor::from_fn(n, k, |_, _| rng.normal());
    let mut g = Graph::new();
    let l = g.constant(logits);
    let s = g.softmax(l).expect("softmax");
    ProbMatrix::new(g.value(s).clone()).expect("prob matrix")
}

fn check_stage(name: &str, rng: &mut Rng, cfg: &AdaptConfig, tca: bool) -> f64 {
    let (n, k, d) = (8, 6, 5);
    let model_cfg = ClassifierConfig {
        input_dim: d,
        hidden_dim: 5,
        bottleneck_dim: 4,
        classes: k,
    };
    let trained = ClassifierParams::init(model_cfg, rng);
    let batch = Tensor::from_fn(n, d, |_, _| rng.normal());
    let other = random_probs(rng, n, k);
    let third = random_probs(rng, n, k);

    let mut params = BTreeMap::new();
    for (name, t) in trained.named("m") {
        params.insert(name, t.clone());
    }

    let cfg = *cfg;
    let err = grad_check(
        move |g, ids| {
            let nodes = ClassifierParams::nodes_from_ids("m", ids);
            let b = g.constant(batch.clone());
            let pred = forward_classifier(g, &nodes, b)?;
            let pm = ProbMatrix::new(g.value(pred).clone())?;
            let on = g.constant(other.as_tensor().clone());
            let tn = g.constant(third.as_tensor().clone());
            let loss = if tca {
                let subsets = tca_subsets(&third, &pm, &other, cfg.objective)?;
                build_tca_loss(g, tn, pred, on, &subsets, &cfg)?.total
            } else {
                let gating = mda_gating(&other, &third, cfg.objective)?;
                build_mda_loss(g, pred, &other, &third, &gating, &cfg)?.total
            };
            Ok(loss.expect("non-degenerate loss"))
        },
        &params,
        1e-5,
    )
    .expect("grad check");
    println!("  {name:<24} max relative error {err:.3e}");
    err
}

fn main() {
    let mut rng = Rng::new(7);
    let mut cfg = canonical_adapt(7);

    println!("gradient checks against central finite differences (eps = 1e-5):");
    let mut worst = 0.0_f64;
    for objective in [Objective::Dmi, Objective::Mi, Objective::Kl] {
        cfg.objective = objective;
        println!("objective {}:", objective.name());
        worst = worst.max(check_stage("teacher-stage loss", &mut rng, &cfg, true));
        worst = worst.max(check_stage("distillation loss", &mut rng, &cfg, false));
    }
    println!("worst case: {worst:.3e} (threshold 1e-4)");
    assert!(worst < 1e-4);
}
