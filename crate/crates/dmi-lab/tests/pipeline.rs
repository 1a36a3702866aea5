//! Integration tests for the experiment runner, the file surfaces and the
//! command-line interface.

use std::process::Command;

use dmi_lab::adapt::Objective;
use dmi_lab::exp::{config::parse_spec, runner, suite_objectives, summary, SweepAxis};
use dmi_lab::synthdata::{generate, load_bundle, save_bundle, Setting};

fn tiny_spec() -> dmi_lab::exp::ExperimentSpec {
    let mut spec = suite_objectives();
    spec.scenario.classes = 6;
    spec.scenario.samples_per_class = 6;
    spec.adapt.epochs = 3;
    spec.adapt.pretrain_epochs = 4;
    spec.adapt.burn_in_epochs = 2;
    spec.seeds = vec![11];
    spec.sweep = SweepAxis::Objective(vec![Objective::Dmi]);
    spec
}

#[test]
fn runner_writes_metrics_manifest_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let outcomes = runner::run(&spec, tmp.path(), 1).unwrap();
    assert_eq!(outcomes.len(), 1);
    assert!(outcomes[0].ok);

    let metrics = runner::metrics_path(tmp.path(), "dmi_seed11");
    let rows = runner::read_metrics(&metrics).unwrap();
    assert!(rows
        .iter()
        .any(|r| r.metric == "source_model_target_accuracy"));
    assert!(rows.iter().any(|r| r.metric == "final_target_accuracy"));
    let epochs: Vec<usize> = rows
        .iter()
        .filter(|r| r.metric == "target_accuracy")
        .map(|r| r.epoch)
        .collect();
    assert_eq!(epochs, vec![1, 2, 3]);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["runs"][0]["run_id"], "dmi_seed11");
    assert_eq!(manifest["metrics_header"], runner::METRICS_HEADER);
    assert!(manifest["spec"]["scenario"]["classes"].as_u64() == Some(6));

    let table = summary::emit_summary(tmp.path()).unwrap();
    assert!(tmp.path().join("summary.csv").is_file());
    assert!(tmp.path().join("summary.json").is_file());
    let final_row = table.get("dmi", "final_target_accuracy").unwrap();
    let last = rows
        .iter()
        .rfind(|r| r.metric == "final_target_accuracy")
        .unwrap();
    assert_eq!(final_row.mean, last.value);
}

#[test]
fn failed_runs_are_recorded_and_do_not_poison_others() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    // batch size zero is rejected per run; the other value still completes
    spec.sweep = SweepAxis::BatchSize(vec![0, 16]);
    let outcomes = runner::run(&spec, tmp.path(), 1).unwrap();
    assert_eq!(outcomes.len(), 2);
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.ok).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].error.as_deref().unwrap().contains("batch size"));
    let ok: Vec<_> = outcomes.iter().filter(|o| o.ok).collect();
    assert_eq!(ok.len(), 1);
    assert!(runner::metrics_path(tmp.path(), &ok[0].run_id).is_file());

    // aggregation still works over the surviving run
    let table = summary::emit_summary(tmp.path()).unwrap();
    assert!(table.get("batch16", "final_target_accuracy").is_some());
}

#[test]
fn worker_pool_width_does_not_change_outputs() {
    let mut spec = tiny_spec();
    spec.seeds = vec![11, 12, 13];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    runner::run(&spec, a.path(), 1).unwrap();
    runner::run(&spec, b.path(), 3).unwrap();
    for plan in runner::enumerate_runs(&spec) {
        let ba = std::fs::read(runner::metrics_path(a.path(), &plan.run_id)).unwrap();
        let bb = std::fs::read(runner::metrics_path(b.path(), &plan.run_id)).unwrap();
        assert_eq!(ba, bb);
    }
}

#[test]
fn golden_metrics_schema_fixture() {
    // schema lock: a tiny fixed run must keep producing exactly these
    // columns and per-epoch metric names
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    runner::run(&spec, tmp.path(), 1).unwrap();
    let rows = runner::read_metrics(&runner::metrics_path(tmp.path(), "dmi_seed11")).unwrap();

    let mut epoch1: Vec<&str> = rows
        .iter()
        .filter(|r| r.epoch == 1)
        .map(|r| r.metric.as_str())
        .collect();
    epoch1.sort_unstable();
    assert_eq!(
        epoch1,
        vec![
            "agreement_rate",
            "loss_ags",
            "loss_cd",
            "loss_mc",
            "loss_mda",
            "loss_sim",
            "loss_tca",
            "mean_subset_size",
            "prototype_teacher_accuracy",
            "proxy_accuracy",
            "skipped_steps",
            "target_accuracy",
        ]
    );
    let mut epoch0: Vec<&str> = rows
        .iter()
        .filter(|r| r.epoch == 0)
        .map(|r| r.metric.as_str())
        .collect();
    epoch0.sort_unstable();
    let mut want = runner::BASELINE_METRICS.to_vec();
    want.sort_unstable();
    assert_eq!(epoch0, want);
}

#[test]
fn settings_axis_runs_all_three_protocols() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    spec.sweep = SweepAxis::Setting(vec![
        Setting::Closed,
        Setting::Partial { target_classes: 3 },
        Setting::Open { extra_classes: 2 },
    ]);
    let outcomes = runner::run(&spec, tmp.path(), 1).unwrap();
    assert!(outcomes.iter().all(|o| o.ok), "outcomes: {outcomes:?}");
    let table = summary::emit_summary(tmp.path()).unwrap();
    for label in ["closed", "partial3", "open2"] {
        let acc = table
            .mean(label, "final_target_accuracy")
            .unwrap_or_else(|| panic!("missing summary row for {label}"));
        assert!((0.0..=1.0).contains(&acc));
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmi-lab"))
}

#[test]
fn cli_pipeline_generate_pretrain_burnin_adapt_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg_path = dir.join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "[scenario]\nclasses = 6\nsamples_per_class = 6\n\n[adapt]\nepochs = 3\npretrain_epochs = 4\nburn_in_epochs = 2\n",
    )
    .unwrap();

    let run = |args: &[&str]| {
        let out = cli().args(args).output().expect("spawn dmi-lab");
        assert!(
            out.status.success(),
            "command {args:?} failed:\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).to_string()
    };

    let cfg = cfg_path.to_str().unwrap();
    let bundle = dir.join("bundle.bin");
    let source = dir.join("source.ckpt");
    let proxy = dir.join("proxy.ckpt");
    let adapted = dir.join("adapted");

    run(&[
        "generate",
        "--config",
        cfg,
        "--out",
        bundle.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(bundle.is_file());
    let loaded = load_bundle(&bundle).unwrap();
    assert_eq!(loaded.config.classes, 6);
    assert_eq!(loaded.config.seed, 7);

    run(&[
        "pretrain",
        "--config",
        cfg,
        "--bundle",
        bundle.to_str().unwrap(),
        "--out",
        source.to_str().unwrap(),
    ]);
    run(&[
        "burnin",
        "--config",
        cfg,
        "--bundle",
        bundle.to_str().unwrap(),
        "--source",
        source.to_str().unwrap(),
        "--out",
        proxy.to_str().unwrap(),
    ]);
    let out = run(&[
        "adapt",
        "--config",
        cfg,
        "--bundle",
        bundle.to_str().unwrap(),
        "--source",
        source.to_str().unwrap(),
        "--proxy",
        proxy.to_str().unwrap(),
        "--out",
        adapted.to_str().unwrap(),
        "--objective",
        "dmi",
    ]);
    assert!(out.contains("final target accuracy"));
    assert!(adapted.join("target.ckpt").is_file());
    assert!(adapted.join("report.json").is_file());

    // suite + summarize on a minimal footprint
    let suite_dir = dir.join("suite");
    run(&[
        "suite",
        "objectives",
        "--config",
        cfg,
        "--out",
        suite_dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(suite_dir.join("manifest.json").is_file());
    run(&["summarize", "--out", suite_dir.to_str().unwrap()]);
    assert!(suite_dir.join("summary.csv").is_file());
}

#[test]
fn cli_generate_setting_override_is_respected() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("partial.bin");
    let cfg_path = tmp.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "[scenario]\nclasses = 8\nsamples_per_class = 4\n",
    )
    .unwrap();
    let out = cli()
        .args([
            "generate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            bundle.to_str().unwrap(),
            "--setting",
            "partial:3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let loaded = load_bundle(&bundle).unwrap();
    let mut classes: Vec<usize> = loaded.target.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    assert_eq!(classes.len(), 3);
}

#[test]
fn cli_rejects_invalid_spec_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.cfg");
    std::fs::write(&cfg_path, "[scenario]\nclasses = banana\n").unwrap();
    let out = cli()
        .args([
            "generate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            tmp.path().join("x.bin").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn bundle_files_interoperate_with_library_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = parse_spec("[scenario]\nclasses = 5\nsamples_per_class = 4\n").unwrap();
    let bundle = generate(&spec.scenario).unwrap();
    let path = tmp.path().join("b.bin");
    save_bundle(&bundle, &path).unwrap();
    assert_eq!(load_bundle(&path).unwrap(), bundle);
}
