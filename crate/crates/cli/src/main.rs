//! `unlearn`: config-driven unlearning experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use unlearn_core::experiment::run::{prepare, run_experiment, run_sequential, train_original, SequentialRow};
use unlearn_core::experiment::stages::{
    attack_stage, collect_reports, evaluate_stage, gold_stage, train_stage, unlearn_stage,
};
use unlearn_core::experiment::sweep::run_sweep_to_dir;
use unlearn_core::experiment::timing::{timing_compare, write_timing_table, TimedMethod};
use unlearn_core::experiment::{emit_plots, ExperimentConfig, SweepSpec, OUTPUT_ENV};
use unlearn_core::metrics::{write_report_table, MetricsReport, REPORT_COLUMNS};

#[derive(Parser)]
#[command(name = "unlearn", version, about = "Teacher-student machine unlearning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment (or sweep) config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; runs go to `<out>/<experiment name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Train the original model.
    Train,
    /// Retrain from scratch on the retain set.
    Gold,
    /// Unlearn the trained original (and run the relabel baseline).
    Unlearn,
    /// Score the checkpoints of a run and write its report.
    Evaluate,
    /// Fit the membership attack against every checkpoint of a run.
    Attack,
    /// All of train, gold, unlearn and evaluate in one go.
    Run,
    /// Answer the config's forget request followed by its `sequential` list.
    Sequential,
    /// Run a grid sweep (the config is a sweep file).
    Sweep,
    /// Compare wall-clock times of retraining and the unlearning methods.
    Timing {
        /// Comma-separated subset of retrain, proposed, amnesiac, proposed_pt_teacher.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "retrain,proposed,amnesiac,proposed_pt_teacher"
        )]
        methods: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Collect `report.json` files into one table.
    Report {
        /// Run directories or report files; defaults to the output root.
        paths: Vec<PathBuf>,
    },
    /// Render accuracy and timing bar charts from reports.
    Plot {
        /// Run directories or report files; defaults to the output root.
        paths: Vec<PathBuf>,
    },
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let path = self.config.as_deref().context("this verb needs --config")?;
        let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        Ok(cfg)
    }

    fn sweep(&self) -> Result<SweepSpec> {
        let path = self.config.as_deref().context("sweep needs --config")?;
        let mut spec = SweepSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(seed) = self.seed {
            spec.base.master_seed = seed;
        }
        Ok(spec)
    }

    /// Where `report` and `plot` look when given no paths.
    fn root(&self) -> Result<PathBuf> {
        if self.config.is_some() {
            let cfg = self.experiment()?;
            return Ok(cfg.resolve_output(self.out.as_deref()));
        }
        Ok(self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs")))
    }
}

fn print_report(r: &MetricsReport) {
    for (name, value) in REPORT_COLUMNS.iter().zip(r.csv_row()) {
        if !value.is_empty() {
            println!("{name:<30} {value}");
        }
    }
}

fn gather(common: &Common, paths: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let roots = if paths.is_empty() {
        vec![common.root()?]
    } else {
        paths.to_vec()
    };
    let mut reports = Vec::new();
    for root in roots {
        reports.extend(collect_reports(&root)?.into_iter().map(|(_, r)| r));
    }
    if reports.is_empty() {
        bail!("no report.json found");
    }
    Ok(reports)
}

fn write_sequential(path: &Path, rows: &[SequentialRow]) -> Result<()> {
    let mut text = String::from("request,target_accuracy,retain_accuracy,test_accuracy,seconds\n");
    for r in rows {
        let targets: Vec<String> = r.target_accuracy.iter().map(|a| format!("{a:.2}")).collect();
        text += &format!(
            "{},{},{:.2},{:.2},{:.4}\n",
            r.request,
            targets.join(";"),
            r.retain_accuracy,
            r.test_accuracy,
            r.seconds
        );
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let out = c.out.as_deref();
    match cli.verb {
        Verb::Train => println!("{}", train_stage(&c.experiment()?, out)?.display()),
        Verb::Gold => println!("{}", gold_stage(&c.experiment()?, out)?.display()),
        Verb::Unlearn => println!("{}", unlearn_stage(&c.experiment()?, out)?.display()),
        Verb::Evaluate => print_report(&evaluate_stage(&c.experiment()?, out)?),
        Verb::Attack => {
            for a in attack_stage(&c.experiment()?, out)? {
                println!(
                    "{:<10} attack accuracy {:6.2}%  mia forget {:.3}  mia test {:.3}",
                    a.model, a.attack_accuracy, a.mia_forget, a.mia_test
                );
            }
        }
        Verb::Run => {
            let outcome = run_experiment(&c.experiment()?, out)?;
            print_report(&outcome.report);
            println!("{:<30} {}", "run_dir", outcome.dir.display());
        }
        Verb::Sequential => {
            let cfg = c.experiment()?;
            let dir = cfg.resolve_output(out);
            std::fs::create_dir_all(&dir)?;
            let p = prepare(&cfg)?;
            let original = train_original(&p)?;
            let rows = run_sequential(&p, &original.model)?;
            write_sequential(&dir.join("sequential.csv"), &rows)?;
            for r in &rows {
                println!(
                    "request {}: targets {:?} retain {:.2} test {:.2}",
                    r.request, r.target_accuracy, r.retain_accuracy, r.test_accuracy
                );
            }
        }
        Verb::Sweep => {
            let (rows, dir) = run_sweep_to_dir(&c.sweep()?, out)?;
            for r in &rows {
                println!(
                    "epochs {} retain {} lr {} teacher {}: zrf {:?} forget {:?} retain {:?}",
                    r.point.epochs,
                    r.point.retain_fraction,
                    r.point.learning_rate,
                    r.point.teacher,
                    r.report.zrf_unlearned,
                    r.report.acc_forget_unlearned,
                    r.report.acc_retain_unlearned
                );
            }
            println!("{}", dir.join(unlearn_core::experiment::sweep::SWEEP_CSV).display());
        }
        Verb::Timing { methods, repeats } => {
            let cfg = c.experiment()?;
            let methods = methods
                .iter()
                .map(|m| TimedMethod::parse(m))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = timing_compare(&methods, &cfg, repeats)?;
            let dir = cfg.resolve_output(out);
            std::fs::create_dir_all(&dir)?;
            write_timing_table(&dir.join("timing.csv"), &rows)?;
            for r in &rows {
                let ratio = r
                    .ratio_to_retrain
                    .map(|x| format!("{x:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!("{:<20} {:>10.4}s  ratio {ratio}", r.method.as_str(), r.seconds);
            }
        }
        Verb::Report { paths } => {
            let reports = gather(c, &paths)?;
            let target = c.root()?.join("reports.csv");
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_report_table(&target, &reports)?;
            for r in &reports {
                println!(
                    "{:<32} seed {:<4} forget {:>6} retain {:>6} zrf {:>6}",
                    r.experiment,
                    r.seed,
                    fmt(r.acc_forget_unlearned),
                    fmt(r.acc_retain_unlearned),
                    fmt(r.zrf_unlearned)
                );
            }
            println!("{}", target.display());
        }
        Verb::Plot { paths } => {
            let reports = gather(c, &paths)?;
            let dir = c.root()?.join("plots");
            let written = emit_plots(&reports, &dir)?;
            for f in written.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
