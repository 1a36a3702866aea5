//! Thin command-line front end over the library; see the crate examples for
//! programmatic use.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmi_lab::adapt::{self, Objective};
use dmi_lab::exp::{self, config::parse_spec, runner, summary};
use dmi_lab::models::ClassifierParams;
use dmi_lab::synthdata;

#[derive(Parser)]
#[command(
    name = "dmi-lab",
    version,
    about = "Decomposed-MI adaptation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario bundle file.
    Generate {
        /// Experiment config file; its [scenario] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output bundle path.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the label-space setting (closed | partial:<n> | open:<n>).
        #[arg(long)]
        setting: Option<String>,
    },
    /// Pretrain the source model on a bundle's source domain.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario bundle produced by `generate`.
        #[arg(long)]
        bundle: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Burn in the proxy model on caption-teacher pseudo-labels.
    Burnin {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: PathBuf,
        /// Source-model checkpoint from `pretrain`.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full bidirectional adaptation on a bundle.
    Adapt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        source: PathBuf,
        /// Proxy checkpoint from `burnin`.
        #[arg(long)]
        proxy: PathBuf,
        /// Output directory (adapted checkpoint, metrics, report).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Objective override: dmi | mi | kl.
        #[arg(long)]
        objective: Option<String>,
    },
    /// Run a canonical experiment suite: batch | lambda | ablation |
    /// objectives | settings.
    Suite {
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Optional config overriding the canonical scenario/adapt settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker-pool width.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Replace the canonical seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Objective override for suites without an objective axis.
        #[arg(long)]
        objective: Option<String>,
    },
    /// Aggregate run metrics under an output directory into summary files.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_spec(config: &Option<PathBuf>) -> dmi_lab::Result<exp::ExperimentSpec> {
    match config {
        Some(path) => parse_spec(&std::fs::read_to_string(path)?),
        None => parse_spec(""),
    }
}

fn run(cli: Cli) -> dmi_lab::Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            seed,
            setting,
        } => {
            let mut spec = load_spec(&config)?;
            if let Some(seed) = seed {
                spec.scenario.seed = seed;
            }
            if let Some(setting) = setting {
                spec.scenario.setting = parse_spec(&format!("[scenario]\nsetting = {setting}"))?
                    .scenario
                    .setting;
            }
            let bundle = synthdata::generate(&spec.scenario)?;
            synthdata::save_bundle(&bundle, &out)?;
            println!(
                "wrote bundle: {} source / {} target samples, K={}, setting={}",
                bundle.source.len(),
                bundle.target.len(),
                bundle.config.classes,
                bundle.config.setting.name()
            );
        }
        Command::Pretrain {
            config,
            bundle,
            out,
            seed,
        } => {
            let mut spec = load_spec(&config)?;
            if let Some(seed) = seed {
                spec.adapt.seed = seed;
            }
            let bundle = synthdata::load_bundle(&bundle)?;
            let source = adapt::pretrain_source(&bundle, &spec.adapt)?;
            let acc = adapt::evaluate(&source, &bundle.source, bundle.config.classes)?.accuracy;
            source.save(&out)?;
            println!("wrote source checkpoint, source-domain accuracy {acc:.4}");
        }
        Command::Burnin {
            config,
            bundle,
            source,
            out,
            seed,
        } => {
            let mut spec = load_spec(&config)?;
            if let Some(seed) = seed {
                spec.adapt.seed = seed;
            }
            let bundle = synthdata::load_bundle(&bundle)?;
            let source = ClassifierParams::load(&source)?;
            let (_, caption) = adapt::build_teachers(&bundle, &spec.adapt)?;
            let proxy = adapt::burn_in_proxy(&bundle, &caption, &source, &spec.adapt)?;
            let acc = adapt::evaluate(&proxy, &bundle.target, bundle.config.classes)?.accuracy;
            proxy.save(&out)?;
            println!("wrote proxy checkpoint, target accuracy {acc:.4}");
        }
        Command::Adapt {
            config,
            bundle,
            source,
            proxy,
            out,
            seed,
            objective,
        } => {
            let mut spec = load_spec(&config)?;
            if let Some(seed) = seed {
                spec.adapt.seed = seed;
            }
            if let Some(objective) = objective {
                spec.adapt.objective = Objective::parse(&objective)?;
            }
            let bundle = synthdata::load_bundle(&bundle)?;
            let source = ClassifierParams::load(&source)?;
            let proxy = ClassifierParams::load(&proxy)?;
            let (prototype, _) = adapt::build_teachers(&bundle, &spec.adapt)?;

            std::fs::create_dir_all(&out)?;
            let (target, report) = adapt::adapt(&bundle, &source, proxy, prototype, &spec.adapt)?;
            target.save(&out.join("target.ckpt"))?;
            std::fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&report).map_err(dmi_lab::Error::from)? + "\n",
            )?;
            println!(
                "adapted for {} epochs: final target accuracy {:.4} ({:.1}s)",
                report.epochs.len(),
                report.final_accuracy,
                report.wall_clock_secs
            );
        }
        Command::Suite {
            name,
            out,
            config,
            workers,
            seed,
            objective,
        } => {
            let mut spec = exp::suite_by_name(&name)?;
            if let Some(path) = &config {
                let base = parse_spec(&std::fs::read_to_string(path)?)?;
                spec.scenario = base.scenario;
                spec.adapt = base.adapt;
            }
            if let Some(seed) = seed {
                spec.seeds = vec![seed];
            }
            if let Some(objective) = objective {
                spec.adapt.objective = Objective::parse(&objective)?;
            }
            let outcomes = runner::run(&spec, &out, workers)?;
            let failed = outcomes.iter().filter(|o| !o.ok).count();
            println!(
                "suite {name}: {} runs, {} failed; metrics under {}",
                outcomes.len(),
                failed,
                out.display()
            );
            let table = summary::emit_summary(&out)?;
            for row in &table.rows {
                if row.metric == "final_target_accuracy" {
                    println!(
                        "  {:<16} accuracy {:.4} ± {:.4} (n={})",
                        row.sweep, row.mean, row.std, row.count
                    );
                }
            }
        }
        Command::Summarize { out } => {
            let table = summary::emit_summary(&out)?;
            println!(
                "wrote summary.csv / summary.json with {} aggregate rows",
                table.rows.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
