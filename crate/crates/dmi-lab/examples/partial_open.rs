//! Partial-set and open-set label-space protocols: the target domain misses
//! some source classes, or contains unknown extra classes that are tallied
//! separately during evaluation.
//!
//! Run with: `cargo run --release --example partial_open`

use dmi_lab::adapt::{adapt, build_teachers, burn_in_proxy, evaluate, pretrain_source};
use dmi_lab::exp::{canonical_adapt, canonical_scenario};
use dmi_lab::synthdata::{generate, Setting};

fn main() {
    let seed = 103;
    for setting in [
        Setting::Closed,
        Setting::Partial { target_classes: 8 },
        Setting::Open { extra_classes: 6 },
    ] {
        let mut scenario = canonical_scenario(seed);
        scenario.setting = setting;
        let cfg = canonical_adapt(seed);

        let bundle = generate(&scenario).expect("generate");
        let k = bundle.config.classes;
        let source = pretrain_source(&bundle, &cfg).expect("pretrain");
        let baseline = evaluate(&source, &bundle.target, k).expect("eval");
        let (prototype, caption) = build_teachers(&bundle, &cfg).expect("teachers");
        let proxy = burn_in_proxy(&bundle, &caption, &source, &cfg).expect("burn-in");
        let (target, report) = adapt(&bundle, &source, proxy, prototype, &cfg).expect("adapt");
        let after = evaluate(&target, &bundle.target, k).expect("eval");

        println!(
            "{:<8} shared-class accuracy {:.4} -> {:.4} ({} target samples, {} unknown)",
            setting.name(),
            baseline.accuracy,
            report.final_accuracy,
            bundle.target.len(),
            after.unknown_count,
        );
    }
}
