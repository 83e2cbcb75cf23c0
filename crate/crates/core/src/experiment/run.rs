use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SeedPlan};
use crate::datamodel::build_unlearning_set;
use crate::datamodel::{partition, DatasetView, ForgetSpec, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::metrics::{
    activation_distance_to_gold, compile_report, js_to_gold, mia_probability, train_attack_model, write_report_table,
    zrf_value, MetricsReport,
};
use crate::models::{
    evaluate_accuracy, load_checkpoint, save_checkpoint, train_with_history, ClassifierHandle, ModelRole, Provenance,
};
use crate::teachers::{
    build_incompetent, make_competent, make_incompetent, TeacherHandle, TeacherSpec, TeacherVariant,
};
use crate::unlearn::{amnesiac_baseline, run_unlearning, sequential_unlearn, UnlearnResult};

/// Data and split shared by every stage of one experiment.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub seeds: SeedPlan,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub partition: Partition,
}

impl Prepared {
    pub fn forget_view(&self) -> DatasetView<'_> {
        DatasetView::new(&self.train, self.partition.forget_set().to_vec()).expect("partition indices are in range")
    }

    pub fn retain_view(&self) -> DatasetView<'_> {
        DatasetView::new(&self.train, self.partition.retain_set().to_vec()).expect("partition indices are in range")
    }

    pub fn test_view(&self) -> DatasetView<'_> {
        DatasetView::all(&self.test)
    }

    fn provenance(&self, role: ModelRole, config: impl Serialize) -> Provenance {
        Provenance {
            role,
            dataset_hash: self.train.fingerprint(),
            config: serde_json::to_value(config).unwrap_or_default(),
        }
    }
}

/// Loads the data and draws the forget/retain split.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let run = || -> Result<Prepared> {
        config.validate()?;
        let seeds = config.seeds();
        let (train, test) = config.dataset.load(seeds.data)?;
        if train.feature_shape() != test.feature_shape() || train.class_count() != test.class_count() {
            return Err(Error::Shape("train and test data disagree in shape or classes".into()));
        }
        let partition = partition(&train, &config.forget, seeds.partition)?;
        Ok(Prepared {
            config: config.clone(),
            seeds,
            train,
            test,
            partition,
        })
    };
    run().map_err(|e| e.in_stage("data"))
}

/// A trained model with its wall-clock and per-epoch loss.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: ClassifierHandle,
    pub seconds: f64,
    pub history: Vec<f64>,
}

pub fn train_original(p: &Prepared) -> Result<Trained> {
    let start = Instant::now();
    let (model, history) = train_with_history(
        &DatasetView::all(&p.train),
        p.config.architecture,
        &p.config.train_config(),
    )
    .map_err(|e| e.in_stage("train"))?;
    Ok(Trained {
        model,
        seconds: start.elapsed().as_secs_f64(),
        history,
    })
}

/// Retrains from scratch on the retain set.
pub fn train_gold(p: &Prepared) -> Result<Trained> {
    let start = Instant::now();
    let (model, history) = train_with_history(&p.retain_view(), p.config.architecture, &p.config.gold_config())
        .map_err(|e| e.in_stage("gold"))?;
    Ok(Trained {
        model,
        seconds: start.elapsed().as_secs_f64(),
        history,
    })
}

/// Builds the incompetent teacher of `spec`; returns it with its build time.
pub fn build_teacher(p: &Prepared, spec: &TeacherSpec) -> Result<(TeacherHandle, f64)> {
    let start = Instant::now();
    let teacher = build_incompetent(
        spec,
        p.config.architecture,
        &p.train,
        &p.partition,
        &p.config.train_config(),
    )
    .map_err(|e| e.in_stage("teacher"))?;
    Ok((teacher, start.elapsed().as_secs_f64()))
}

/// Teacher-student unlearning of `original` with the configured teacher.
/// The returned wall-clock includes building the teacher.
pub fn unlearn_original(p: &Prepared, original: &ClassifierHandle) -> Result<(UnlearnResult, TeacherHandle)> {
    let (teacher, build_seconds) = build_teacher(p, &p.config.teacher_spec())?;
    let cfg = p.config.unlearn_config();
    let run = || -> Result<UnlearnResult> {
        let uset = build_unlearning_set(&p.partition, &p.train, cfg.retain_fraction, cfg.retain_sample_seed())?;
        let competent = make_competent(original);
        run_unlearning(original, &competent, &teacher, &uset, &p.train, &cfg)
    };
    let mut result = run().map_err(|e| e.in_stage("unlearn"))?;
    result.wall_clock_seconds += build_seconds;
    Ok((result, teacher))
}

pub fn amnesiac(p: &Prepared, original: &ClassifierHandle) -> Result<UnlearnResult> {
    amnesiac_baseline(original, &p.partition, &p.train, &p.config.unlearn_config()).map_err(|e| e.in_stage("amnesiac"))
}

/// Models to evaluate; any of them may be missing.
#[derive(Clone, Copy, Default)]
pub struct ModelSet<'a> {
    pub original: Option<&'a ClassifierHandle>,
    pub gold: Option<&'a ClassifierHandle>,
    pub unlearned: Option<&'a ClassifierHandle>,
    pub amnesiac: Option<&'a ClassifierHandle>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train: Option<f64>,
    pub gold: Option<f64>,
    pub unlearn: Option<f64>,
    pub amnesiac: Option<f64>,
}

fn forget_mode(spec: &ForgetSpec) -> &'static str {
    match spec {
        ForgetSpec::FullClass { .. } => "full_class",
        ForgetSpec::SubclassWithinSuperclass { .. } => "subclass_within_superclass",
        ForgetSpec::RandomSubset { .. } => "random_subset",
    }
}

/// Fills a [`MetricsReport`] for whichever models are present.
pub fn evaluate(
    p: &Prepared,
    models: ModelSet<'_>,
    teacher: &TeacherHandle,
    timings: Timings,
) -> Result<MetricsReport> {
    let run = || -> Result<MetricsReport> {
        let fv = p.forget_view();
        let rv = p.retain_view();
        let tv = p.test_view();
        let toggles = &p.config.metrics;
        let acc = |m: Option<&ClassifierHandle>, v: &DatasetView<'_>| m.map(|m| evaluate_accuracy(m, v)).transpose();
        let zrf = |m: Option<&ClassifierHandle>| m.map(|m| zrf_value(m, teacher, &fv)).transpose();
        let mia = |m: Option<&ClassifierHandle>| -> Result<Option<f64>> {
            match m {
                Some(m) if toggles.mia => {
                    let attack = train_attack_model(m, &rv, &tv, p.seeds.attack)?;
                    Ok(Some(mia_probability(&attack, m, &fv)?))
                }
                _ => Ok(None),
            }
        };
        let versus_gold = |m: Option<&ClassifierHandle>| -> Result<(Option<f64>, Option<f64>)> {
            match (m, models.gold) {
                (Some(m), Some(g)) => Ok((
                    Some(activation_distance_to_gold(m, g, &fv)?),
                    Some(js_to_gold(m, g, &fv)?),
                )),
                _ => Ok((None, None)),
            }
        };
        let proxy_model = models.unlearned.or(models.gold).or(models.original);
        let zrf_test_proxy = proxy_model.map(|m| zrf_value(m, teacher, &tv)).transpose()?;
        let zrf_random_reference = match (models.unlearned, teacher.tag()) {
            (Some(m), crate::teachers::TeacherTag::Incompetent(v))
                if toggles.random_reference && v != TeacherVariant::RandomInitSameArch =>
            {
                let reference = make_incompetent(
                    &TeacherSpec::random_init(crate::seeds::derive_seed(p.seeds.teacher, "reference")),
                    p.config.architecture,
                    p.train.feature_shape(),
                    p.train.class_count(),
                )?;
                Some(zrf_value(m, &reference, &fv)?)
            }
            _ => None,
        };
        let (ad_u, js_u) = versus_gold(models.unlearned)?;
        let (ad_a, js_a) = versus_gold(models.amnesiac)?;
        let raw = MetricsReport {
            experiment: p.config.name.clone(),
            seed: p.config.master_seed,
            forget_mode: forget_mode(&p.config.forget).into(),
            teacher: p.config.teacher.variant.as_str().into(),
            n_forget: fv.len(),
            n_retain: rv.len(),
            acc_forget_original: acc(models.original, &fv)?,
            acc_retain_original: acc(models.original, &rv)?,
            acc_forget_gold: acc(models.gold, &fv)?,
            acc_retain_gold: acc(models.gold, &rv)?,
            acc_forget_unlearned: acc(models.unlearned, &fv)?,
            acc_retain_unlearned: acc(models.unlearned, &rv)?,
            acc_forget_amnesiac: acc(models.amnesiac, &fv)?,
            acc_retain_amnesiac: acc(models.amnesiac, &rv)?,
            acc_test_unlearned: acc(models.unlearned, &tv)?,
            zrf_original: zrf(models.original)?,
            zrf_gold: zrf(models.gold)?,
            zrf_unlearned: zrf(models.unlearned)?,
            zrf_test_proxy,
            zrf_random_reference,
            mia_original: mia(models.original)?,
            mia_gold: mia(models.gold)?,
            mia_unlearned: mia(models.unlearned)?,
            mia_amnesiac: mia(models.amnesiac)?,
            activation_distance: ad_u,
            activation_distance_amnesiac: ad_a,
            js_to_gold: js_u,
            js_to_gold_amnesiac: js_a,
            seconds_train: timings.train,
            seconds_gold: timings.gold,
            seconds_unlearn: timings.unlearn,
            seconds_amnesiac: timings.amnesiac,
        };
        compile_report(raw)
    };
    run().map_err(|e| e.in_stage("metrics"))
}

/// Every model of a full in-memory run.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub prepared: Prepared,
    pub original: Trained,
    pub gold: Option<Trained>,
    pub teacher: TeacherHandle,
    pub unlearned: UnlearnResult,
    pub amnesiac: Option<UnlearnResult>,
    pub report: MetricsReport,
}

/// Train, retrain gold, unlearn, baseline, evaluate; nothing is written.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineRun> {
    let prepared = prepare(config)?;
    let original = train_original(&prepared)?;
    let gold = if config.metrics.gold {
        Some(train_gold(&prepared)?)
    } else {
        None
    };
    let (unlearned, teacher) = unlearn_original(&prepared, &original.model)?;
    let amnesiac = if config.metrics.amnesiac {
        Some(amnesiac(&prepared, &original.model)?)
    } else {
        None
    };
    let models = ModelSet {
        original: Some(&original.model),
        gold: gold.as_ref().map(|g| &g.model),
        unlearned: Some(&unlearned.student),
        amnesiac: amnesiac.as_ref().map(|a| &a.student),
    };
    let timings = Timings {
        train: Some(original.seconds),
        gold: gold.as_ref().map(|g| g.seconds),
        unlearn: Some(unlearned.wall_clock_seconds),
        amnesiac: amnesiac.as_ref().map(|a| a.wall_clock_seconds),
    };
    let report = evaluate(&prepared, models, &teacher, timings)?;
    Ok(PipelineRun {
        prepared,
        original,
        gold,
        teacher,
        unlearned,
        amnesiac,
        report,
    })
}

/// One line of `records.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    pub seconds: f64,
    /// Per-epoch loss for training stages, per-step loss for unlearning.
    pub losses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default)]
    pub detail: serde_json::Value,
}

pub fn append_record(dir: &Path, record: &RunRecord) -> Result<()> {
    let path = dir.join(RECORDS_FILE);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(record)?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let path = dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File name of the checkpoint for a role.
pub fn checkpoint_name(role: ModelRole) -> &'static str {
    match role {
        ModelRole::Original => "original.ckpt",
        ModelRole::Gold => "gold.ckpt",
        ModelRole::Unlearned => "unlearned.ckpt",
        ModelRole::Baseline => "amnesiac.ckpt",
        ModelRole::Teacher => "teacher.ckpt",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Every artifact of a run directory with its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub master_seed: u64,
    pub files: Vec<ManifestEntry>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under `dir` and writes `manifest.json`.
pub fn write_manifest(dir: &Path, experiment: &str, master_seed: u64) -> Result<RunManifest> {
    let mut paths = Vec::new();
    collect_files(dir, &mut paths)?;
    paths.sort();
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        files.push(ManifestEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = RunManifest {
        experiment: experiment.to_string(),
        master_seed,
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Checks every manifest entry against the file on disk.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
    for entry in &manifest.files {
        let file = dir.join(&entry.path);
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(Error::Format(format!(
                "{} does not match its manifest hash",
                entry.path
            )));
        }
    }
    Ok(manifest)
}

/// A finished run on disk.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub(crate) fn save_model(
    p: &Prepared,
    dir: &Path,
    model: &ClassifierHandle,
    role: ModelRole,
    cfg: impl Serialize,
) -> Result<String> {
    let name = checkpoint_name(role);
    save_checkpoint(model, &p.provenance(role, cfg), &dir.join(name)).map_err(|e| e.in_stage("write"))?;
    Ok(name.to_string())
}

/// Loads a checkpoint written by an earlier verb, if present.
pub fn load_role(dir: &Path, role: ModelRole) -> Result<Option<ClassifierHandle>> {
    let path = dir.join(checkpoint_name(role));
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(load_checkpoint(&path)?.model))
}

pub fn create_run_dir(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = config.resolve_output(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config.to_toml()?).map_err(|e| Error::io(&cfg, e))?;
    Ok(dir)
}

pub(crate) fn record_trained(dir: &Path, stage: &str, t: &Trained, checkpoint: String) -> Result<()> {
    append_record(
        dir,
        &RunRecord {
            stage: stage.into(),
            seconds: t.seconds,
            losses: t.history.clone(),
            checkpoint: Some(checkpoint),
            detail: serde_json::json!({ "fingerprint": t.model.fingerprint() }),
        },
    )
}

pub(crate) fn record_unlearned(dir: &Path, stage: &str, r: &UnlearnResult, checkpoint: String) -> Result<()> {
    append_record(
        dir,
        &RunRecord {
            stage: stage.into(),
            seconds: r.wall_clock_seconds,
            losses: r.loss_trace.clone(),
            checkpoint: Some(checkpoint),
            detail: serde_json::json!({
                "method": r.method,
                "config": r.config,
                "epoch_losses": r.epoch_losses,
                "teachers": r.teachers.map(|(a, b)| [a.to_string(), b.to_string()]),
            }),
        },
    )
}

/// Writes report JSON and its one-row CSV table.
pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    report.save_json(&dir.join(REPORT_JSON))?;
    write_report_table(&dir.join(REPORT_CSV), std::slice::from_ref(report))
}

/// Full run with every artifact written under the run directory: config,
/// checkpoints, `records.jsonl`, `report.json`, `report.csv` and a
/// `manifest.json` hashing all of them. Artifacts of completed stages stay
/// on disk when a later stage fails.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    let dir = create_run_dir(config, out)?;
    let _ = fs::remove_file(dir.join(RECORDS_FILE));
    let p = prepare(config)?;

    let original = train_original(&p)?;
    let name = save_model(&p, &dir, &original.model, ModelRole::Original, p.config.train_config())?;
    record_trained(&dir, "train", &original, name)?;

    let gold = if config.metrics.gold {
        let g = train_gold(&p)?;
        let name = save_model(&p, &dir, &g.model, ModelRole::Gold, p.config.gold_config())?;
        record_trained(&dir, "gold", &g, name)?;
        Some(g)
    } else {
        None
    };

    let (unlearned, teacher) = unlearn_original(&p, &original.model)?;
    let name = save_model(&p, &dir, &unlearned.student, ModelRole::Unlearned, &unlearned.config)?;
    record_unlearned(&dir, "unlearn", &unlearned, name)?;

    let baseline = if config.metrics.amnesiac {
        let a = amnesiac(&p, &original.model)?;
        let name = save_model(&p, &dir, &a.student, ModelRole::Baseline, &a.config)?;
        record_unlearned(&dir, "amnesiac", &a, name)?;
        Some(a)
    } else {
        None
    };

    let models = ModelSet {
        original: Some(&original.model),
        gold: gold.as_ref().map(|g| &g.model),
        unlearned: Some(&unlearned.student),
        amnesiac: baseline.as_ref().map(|a| &a.student),
    };
    let timings = Timings {
        train: Some(original.seconds),
        gold: gold.as_ref().map(|g| g.seconds),
        unlearn: Some(unlearned.wall_clock_seconds),
        amnesiac: baseline.as_ref().map(|a| a.wall_clock_seconds),
    };
    let report = evaluate(&p, models, &teacher, timings)?;
    write_report(&dir, &report).map_err(|e| e.in_stage("write"))?;
    let manifest = write_manifest(&dir, &config.name, config.master_seed).map_err(|e| e.in_stage("write"))?;
    log::info!("{}: report written to {}", config.name, dir.display());
    Ok(ExperimentOutcome { report, dir, manifest })
}

/// One answered request of a sequential run, scored on its own targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialRow {
    pub request: usize,
    /// Accuracy on the samples first forgotten by each request so far.
    pub target_accuracy: Vec<f64>,
    pub retain_accuracy: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

/// Answers `forget` followed by every `sequential` request, each with a
/// fresh incompetent teacher, and scores every intermediate student.
pub fn run_sequential(p: &Prepared, original: &ClassifierHandle) -> Result<Vec<SequentialRow>> {
    let run = || -> Result<Vec<SequentialRow>> {
        let mut specs = vec![p.config.forget.clone()];
        specs.extend(p.config.sequential.iter().cloned());
        let base_spec = p.config.teacher_spec();
        let steps = sequential_unlearn(
            original,
            &specs,
            &p.train,
            |k, part| {
                let spec = TeacherSpec {
                    seed: crate::seeds::mix(base_spec.seed, k as u64),
                    ..base_spec.clone()
                };
                build_incompetent(&spec, p.config.architecture, &p.train, part, &p.config.train_config())
            },
            &p.config.unlearn_config(),
        )?;
        let mut rows = Vec::with_capacity(steps.len());
        for (k, step) in steps.iter().enumerate() {
            let student = &step.result.student;
            let target_accuracy = steps[..=k]
                .iter()
                .map(|s| evaluate_accuracy(student, &DatasetView::new(&p.train, s.newly_forgotten.clone())?))
                .collect::<Result<Vec<_>>>()?;
            let retain = DatasetView::new(&p.train, step.partition.retain_set().to_vec())?;
            rows.push(SequentialRow {
                request: k,
                target_accuracy,
                retain_accuracy: evaluate_accuracy(student, &retain)?,
                test_accuracy: evaluate_accuracy(student, &p.test_view())?,
                seconds: step.result.wall_clock_seconds,
            });
        }
        Ok(rows)
    };
    run().map_err(|e| e.in_stage("sequential"))
}
