//! Executes experiment specs: one full pipeline per (sweep value, seed),
//! each writing its own metrics file, plus a manifest echoing everything
//! needed to reproduce the output bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::adapt::{
    adapt_with, build_teachers, burn_in_proxy, evaluate, pretrain_source, teacher_accuracy,
    AdaptConfig, EpochRecord,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::synthdata::{generate, ScenarioConfig};

use super::ExperimentSpec;

/// Column header every metrics file starts with.
pub const METRICS_HEADER: &str = "run_id,seed,sweep,epoch,metric,value";

/// Metric names emitted once before the first epoch.
pub const BASELINE_METRICS: [&str; 5] = [
    "source_domain_accuracy",
    "source_model_target_accuracy",
    "caption_pseudo_label_accuracy",
    "prototype_teacher_accuracy_initial",
    "proxy_accuracy_post_burn_in",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub sweep: String,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunPlan {
    pub run_id: String,
    pub sweep_label: String,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub adapt: AdaptConfig,
}

/// Expand a spec into the concrete (sweep value × seed) grid.
pub fn enumerate_runs(spec: &ExperimentSpec) -> Vec<RunPlan> {
    let mut plans = Vec::new();
    for variant in spec.sweep.variants() {
        for &seed in &spec.seeds {
            let mut scenario = spec.scenario;
            let mut adapt = spec.adapt;
            scenario.seed = seed;
            adapt.seed = seed;
            variant.apply_to(&mut scenario, &mut adapt);
            plans.push(RunPlan {
                run_id: format!("{}_seed{}", variant.label, seed),
                sweep_label: variant.label.clone(),
                seed,
                scenario,
                adapt,
            });
        }
    }
    plans
}

struct MetricsWriter {
    out: BufWriter<File>,
    run_id: String,
    seed: u64,
    sweep: String,
}

impl MetricsWriter {
    fn create(path: &Path, run_id: &str, seed: u64, sweep: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsWriter {
            out,
            run_id: run_id.to_string(),
            seed,
            sweep: sweep.to_string(),
        })
    }

    fn row(&mut self, epoch: usize, metric: &str, value: f64) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            self.run_id, self.seed, self.sweep, epoch, metric, value
        )?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn epoch_rows(w: &mut MetricsWriter, r: &EpochRecord) -> Result<()> {
    w.row(r.epoch, "target_accuracy", r.target_accuracy)?;
    w.row(r.epoch, "proxy_accuracy", r.proxy_accuracy)?;
    w.row(
        r.epoch,
        "prototype_teacher_accuracy",
        r.prototype_teacher_accuracy,
    )?;
    w.row(r.epoch, "loss_mc", r.loss_mc)?;
    w.row(r.epoch, "loss_cd", r.loss_cd)?;
    w.row(r.epoch, "loss_tca", r.loss_tca)?;
    w.row(r.epoch, "loss_ags", r.loss_ags)?;
    w.row(r.epoch, "loss_sim", r.loss_sim)?;
    w.row(r.epoch, "loss_mda", r.loss_mda)?;
    w.row(r.epoch, "agreement_rate", r.agreement_rate)?;
    w.row(r.epoch, "mean_subset_size", r.mean_subset_size)?;
    w.row(r.epoch, "skipped_steps", r.skipped_steps as f64)?;
    // one flush per epoch: interruptions leave valid rows behind
    w.flush()
}

/// Run one plan end to end, streaming metrics to `dir/metrics.csv`.
pub fn execute_run(plan: &RunPlan, dir: &Path) -> Result<()> {
    plan.scenario.validate()?;
    plan.adapt.validate()?;
    fs::create_dir_all(dir)?;
    let mut w = MetricsWriter::create(
        &dir.join("metrics.csv"),
        &plan.run_id,
        plan.seed,
        &plan.sweep_label,
    )?;

    let bundle = generate(&plan.scenario)?;
    let cfg = &plan.adapt;
    let k = bundle.config.classes;

    let source = pretrain_source(&bundle, cfg)?;
    let (prototype, caption) = build_teachers(&bundle, cfg)?;
    let proxy = burn_in_proxy(&bundle, &caption, &source, cfg)?;

    let src_acc = evaluate(&source, &bundle.source, k)?.accuracy;
    let baseline = evaluate(&source, &bundle.target, k)?.accuracy;
    let pseudo = caption.pseudo_labels(
        &bundle.target_views_local,
        derive_seed(bundle.config.seed, "caption-labels"),
    )?;
    let pseudo_acc = pseudo
        .iter()
        .zip(&bundle.target.labels)
        .filter(|(a, b)| a == b)
        .count() as f64
        / pseudo.len().max(1) as f64;

    w.row(0, BASELINE_METRICS[0], src_acc)?;
    w.row(0, BASELINE_METRICS[1], baseline)?;
    w.row(0, BASELINE_METRICS[2], pseudo_acc)?;
    w.row(
        0,
        BASELINE_METRICS[3],
        teacher_accuracy(&prototype, &bundle)?,
    )?;
    w.row(
        0,
        BASELINE_METRICS[4],
        evaluate(&proxy, &bundle.target, k)?.accuracy,
    )?;
    w.flush()?;

    let (_, report) = adapt_with(&bundle, &source, proxy, prototype, cfg, |record| {
        epoch_rows(&mut w, record)
    })?;

    w.row(cfg.epochs, "final_target_accuracy", report.final_accuracy)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    container_version: u32,
    spec: &'a ExperimentSpec,
    workers: usize,
    metrics_header: &'static str,
    runs: Vec<RunOutcome>,
}

/// Execute every run of a spec under `out_dir` with a fixed-width worker
/// pool. Individual run failures are recorded in the manifest; the other
/// runs still complete.
pub fn run(spec: &ExperimentSpec, out_dir: &Path, workers: usize) -> Result<Vec<RunOutcome>> {
    spec.validate()?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;

    let plans = enumerate_runs(spec);
    let next = Mutex::new(0usize);
    let outcomes = Mutex::new(Vec::with_capacity(plans.len()));
    let workers = workers.max(1).min(plans.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().expect("queue lock");
                    let idx = *guard;
                    if idx >= plans.len() {
                        return;
                    }
                    *guard += 1;
                    idx
                };
                let plan = &plans[idx];
                let dir = runs_dir.join(&plan.run_id);
                let result = execute_run(plan, &dir);
                let outcome = RunOutcome {
                    run_id: plan.run_id.clone(),
                    sweep: plan.sweep_label.clone(),
                    seed: plan.seed,
                    ok: result.is_ok(),
                    error: result.err().map(|e| e.to_string()),
                };
                outcomes.lock().expect("outcome lock").push(outcome);
            });
        }
    });

    let mut outcomes = outcomes.into_inner().expect("outcome lock");
    outcomes.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        container_version: crate::io::VERSION,
        spec,
        workers,
        metrics_header: METRICS_HEADER,
        runs: outcomes.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(outcomes)
}

/// Convenience: metrics file path of one run.
pub fn metrics_path(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join("runs").join(run_id).join("metrics.csv")
}

/// A parsed metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub sweep: String,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Parse one metrics file, validating the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        Some(h) => {
            return Err(Error::MixedSchema(vec![format!(
                "{}: unexpected header {h:?}",
                path.display()
            )]))
        }
        None => return Err(Error::Truncated(format!("{}: empty", path.display()))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::ConfigParse {
                line: i + 2,
                detail: format!("expected 6 fields, got {}", parts.len()),
            });
        }
        rows.push(MetricsRow {
            run_id: parts[0].to_string(),
            seed: parts[1].parse().map_err(|e| Error::ConfigParse {
                line: i + 2,
                detail: format!("bad seed: {e}"),
            })?,
            sweep: parts[2].to_string(),
            epoch: parts[3].parse().map_err(|e| Error::ConfigParse {
                line: i + 2,
                detail: format!("bad epoch: {e}"),
            })?,
            metric: parts[4].to_string(),
            value: parts[5].parse().map_err(|e| Error::ConfigParse {
                line: i + 2,
                detail: format!("bad value: {e}"),
            })?,
        });
    }
    Ok(rows)
}
