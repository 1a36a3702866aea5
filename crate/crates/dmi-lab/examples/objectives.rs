//! Information-objective comparison: KL alignment vs plain mutual
//! information vs decomposed mutual information, same scenario and seeds.
//!
//! Run with: `cargo run --release --example objectives`

use dmi_lab::exp::{runner, suite_objectives, summary};

fn main() {
    let mut spec = suite_objectives();
    spec.seeds.truncate(2);

    let out = std::env::temp_dir().join("dmi-lab-example-objectives");
    let _ = std::fs::remove_dir_all(&out);
    runner::run(&spec, &out, 1).expect("run suite");
    let table = summary::emit_summary(&out).expect("summary");

    println!("final target accuracy by objective:\n");
    for label in ["kl", "mi", "dmi"] {
        let row = table.get(label, "final_target_accuracy").expect("row");
        println!("  {label:<4} {:.4} ± {:.4}", row.mean, row.std);
    }
}
