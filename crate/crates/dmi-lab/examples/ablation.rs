//! Cumulative loss-component ablation: information maximization alone, plus
//! agreement supervision, plus mutual consistency, plus conditional
//! decorrelation.
//!
//! Run with: `cargo run --release --example ablation`

use dmi_lab::exp::{runner, suite_ablation, summary};

fn main() {
    let mut spec = suite_ablation();
    spec.seeds.truncate(2);

    let out = std::env::temp_dir().join("dmi-lab-example-ablation");
    let _ = std::fs::remove_dir_all(&out);
    runner::run(&spec, &out, 1).expect("run suite");
    let table = summary::emit_summary(&out).expect("summary");

    let baseline = table
        .mean("sim", "source_model_target_accuracy")
        .expect("baseline row");
    println!("source model on target (no adaptation): {baseline:.4}\n");
    for label in ["sim", "sim+ags", "sim+ags+mc", "sim+ags+mc+cd"] {
        let row = table.get(label, "final_target_accuracy").expect("row");
        println!(
            "  {label:<16} accuracy {:.4} ± {:.4}  ({:+.1} points over source)",
            row.mean,
            row.std,
            100.0 * (row.mean - baseline)
        );
    }
}
