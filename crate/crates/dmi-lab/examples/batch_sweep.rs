//! Reduced batch-size robustness sweep: plain MI vs decomposed MI across
//! mini-batch sizes, two seeds (the full five-seed suite runs via
//! `dmi-lab suite batch`).
//!
//! Run with: `cargo run --release --example batch_sweep`

use dmi_lab::exp::{runner, suite_batch_sensitivity, summary};

fn main() {
    let mut spec = suite_batch_sensitivity();
    spec.seeds.truncate(2);

    let out = std::env::temp_dir().join("dmi-lab-example-batch");
    let _ = std::fs::remove_dir_all(&out);
    let outcomes = runner::run(&spec, &out, 1).expect("run suite");
    assert!(outcomes.iter().all(|o| o.ok), "runs failed: {outcomes:?}");

    let table = summary::emit_summary(&out).expect("summary");
    println!(
        "final target accuracy, mean over {} seeds:\n",
        spec.seeds.len()
    );
    println!("{:>6}  {:>8}  {:>8}", "batch", "mi", "dmi");
    for b in [8, 16, 32, 64] {
        let mi = table
            .mean(&format!("mi_batch{b}"), "final_target_accuracy")
            .expect("mi row");
        let dmi = table
            .mean(&format!("dmi_batch{b}"), "final_target_accuracy")
            .expect("dmi row");
        println!("{b:>6}  {mi:>8.4}  {dmi:>8.4}");
    }

    let drop = |obj: &str| {
        table
            .mean(&format!("{obj}_batch64"), "final_target_accuracy")
            .unwrap()
            - table
                .mean(&format!("{obj}_batch8"), "final_target_accuracy")
                .unwrap()
    };
    println!(
        "\naccuracy drop from batch 64 to batch 8: mi {:+.4}, dmi {:+.4}",
        drop("mi"),
        drop("dmi")
    );
    println!("metrics and summary written under {}", out.display());
}
