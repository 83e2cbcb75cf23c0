use std::fs;
use std::path::Path;

use unlearn_core::experiment::run::{read_records, verify_manifest, REPORT_CSV, REPORT_JSON};
use unlearn_core::experiment::stages::{evaluate_stage, gold_stage, train_stage, unlearn_stage};
use unlearn_core::experiment::{emit_plots, fixtures, run_experiment, run_sweep, ExperimentConfig, SweepSpec};
use unlearn_core::metrics::{read_report_table, MetricsReport};
use unlearn_core::Error;

const TINY: &str = r#"
name = "tiny"
master_seed = 3
architecture = "mlp3"

[dataset]
source = "synthetic"
class_count = 3
subclasses_per_class = 2
samples_per_subclass = 40
feature_dim = 6
cluster_separation = 2.0
test_samples_per_subclass = 10

[forget]
mode = "full_class"
classes = [1]

[train]
epochs = 15
batch_size = 32

[unlearn]
learning_rate = 0.001
batch_size = 8
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

fn without_timings(r: &MetricsReport) -> MetricsReport {
    MetricsReport {
        seconds_train: None,
        seconds_gold: None,
        seconds_unlearn: None,
        seconds_amnesiac: None,
        ..r.clone()
    }
}

#[test]
fn run_writes_every_artifact_and_a_manifest() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&tiny(), Some(out.path())).unwrap();
    let dir = out.path().join("tiny");
    assert_eq!(outcome.dir, dir);
    for f in [
        "config.toml",
        "original.ckpt",
        "gold.ckpt",
        "unlearned.ckpt",
        "amnesiac.ckpt",
        "records.jsonl",
        REPORT_JSON,
        REPORT_CSV,
    ] {
        assert!(dir.join(f).exists(), "{f} missing");
        assert!(
            outcome.manifest.files.iter().any(|e| e.path == f),
            "{f} not in manifest"
        );
    }
    verify_manifest(&dir).unwrap();

    let stages: Vec<String> = read_records(&dir).unwrap().into_iter().map(|r| r.stage).collect();
    assert_eq!(stages, ["train", "gold", "unlearn", "amnesiac"]);
    assert_eq!(
        MetricsReport::load_json(&dir.join(REPORT_JSON)).unwrap(),
        outcome.report
    );
    assert_eq!(
        read_report_table(&dir.join(REPORT_CSV)).unwrap(),
        vec![outcome.report.clone()]
    );
    let r = &outcome.report;
    assert!(r.acc_forget_original.unwrap() > 90.0);
    assert!(r.zrf_unlearned.is_some() && r.mia_unlearned.is_some() && r.activation_distance.is_some());
    assert!(
        r.zrf_random_reference.is_none(),
        "same-arch random teacher needs no extra reference"
    );

    fs::write(dir.join("report.json"), "{}").unwrap();
    assert!(verify_manifest(&dir).is_err());
}

#[test]
fn rerun_with_same_seed_reproduces_the_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&tiny(), Some(a.path())).unwrap().report;
    let rb = run_experiment(&tiny(), Some(b.path())).unwrap().report;
    assert_eq!(without_timings(&ra), without_timings(&rb));
}

#[test]
fn stages_compose_into_the_full_run() {
    let staged = tempfile::tempdir().unwrap();
    let whole = tempfile::tempdir().unwrap();
    let cfg = tiny();
    assert!(matches!(
        unlearn_stage(&cfg, Some(staged.path())),
        Err(Error::Argument(_))
    ));
    train_stage(&cfg, Some(staged.path())).unwrap();
    gold_stage(&cfg, Some(staged.path())).unwrap();
    unlearn_stage(&cfg, Some(staged.path())).unwrap();
    let r = evaluate_stage(&cfg, Some(staged.path())).unwrap();
    let full = run_experiment(&cfg, Some(whole.path())).unwrap().report;
    assert_eq!(without_timings(&r), without_timings(&full));
    assert!(r.seconds_unlearn.is_some());
}

#[test]
fn missing_data_fails_in_the_data_stage() {
    let mut cfg = tiny();
    cfg.dataset =
        toml::from_str("source = \"directory\"\ntrain = \"/nonexistent/train\"\ntest = \"/nonexistent/test\"").unwrap();
    let out = tempfile::tempdir().unwrap();
    match run_experiment(&cfg, Some(out.path())) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "data"),
        other => panic!("expected a data-stage error, got {other:?}"),
    }
    assert!(out.path().join("tiny/config.toml").exists());
}

#[test]
fn singleton_sweep_matches_a_plain_run() {
    let cfg = tiny();
    let spec = SweepSpec {
        base: cfg.clone(),
        grid: Default::default(),
        cap: 4,
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 1);
    let out = tempfile::tempdir().unwrap();
    let plain = run_experiment(&cfg, Some(out.path())).unwrap().report;
    assert_eq!(without_timings(&rows[0].report), without_timings(&plain));
}

#[test]
fn plots_from_a_run() {
    let out = tempfile::tempdir().unwrap();
    let r = run_experiment(&tiny(), Some(out.path())).unwrap().report;
    let plots = emit_plots(&[r], &out.path().join("plots")).unwrap();
    assert_eq!(
        plots
            .files
            .iter()
            .filter(|f| f.extension().is_some_and(|e| e == "png"))
            .count(),
        2
    );
}

fn repo_configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_config_files_match_the_fixtures() {
    for (name, cfg) in fixtures::shipped() {
        let loaded = ExperimentConfig::load(&repo_configs().join(format!("{name}.toml"))).unwrap();
        assert_eq!(loaded, cfg, "{name}");
    }
    for name in ["sweep_learning_rate", "sweep_retain_fraction"] {
        let spec = SweepSpec::load(&repo_configs().join(format!("{name}.toml"))).unwrap();
        assert_eq!(spec.points().unwrap().len(), 4);
    }
}
