//! Resumable stages behind the CLI verbs. Each stage reads what earlier
//! stages left in the run directory and appends its own record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{
    amnesiac, build_teacher, checkpoint_name, create_run_dir, evaluate, load_role, prepare, read_records,
    record_trained, record_unlearned, save_model, train_gold, train_original, unlearn_original, write_manifest,
    write_report, ModelSet, Timings, RECORDS_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{train_attack_model, MetricsReport};
use crate::models::{ClassifierHandle, ModelRole};

pub const ATTACK_JSON: &str = "attack.json";

fn require(dir: &Path, role: ModelRole, verb: &str) -> Result<ClassifierHandle> {
    load_role(dir, role)?.ok_or_else(|| {
        Error::Argument(format!(
            "{} not found in {}; run `{verb}` first",
            checkpoint_name(role),
            dir.display()
        ))
    })
}

/// Trains the original model and writes `original.ckpt`.
pub fn train_stage(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = create_run_dir(config, out)?;
    let p = prepare(config)?;
    let t = train_original(&p)?;
    let name = save_model(&p, &dir, &t.model, ModelRole::Original, config.train_config())?;
    record_trained(&dir, "train", &t, name)?;
    Ok(dir)
}

/// Retrains from scratch on the retain set and writes `gold.ckpt`.
pub fn gold_stage(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = create_run_dir(config, out)?;
    let p = prepare(config)?;
    let t = train_gold(&p)?;
    let name = save_model(&p, &dir, &t.model, ModelRole::Gold, config.gold_config())?;
    record_trained(&dir, "gold", &t, name)?;
    Ok(dir)
}

/// Unlearns `original.ckpt` (and runs the relabel baseline when enabled).
pub fn unlearn_stage(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = create_run_dir(config, out)?;
    let original = require(&dir, ModelRole::Original, "train")?;
    let p = prepare(config)?;
    let (r, _) = unlearn_original(&p, &original)?;
    let name = save_model(&p, &dir, &r.student, ModelRole::Unlearned, &r.config)?;
    record_unlearned(&dir, "unlearn", &r, name)?;
    if config.metrics.amnesiac {
        let a = amnesiac(&p, &original)?;
        let name = save_model(&p, &dir, &a.student, ModelRole::Baseline, &a.config)?;
        record_unlearned(&dir, "amnesiac", &a, name)?;
    }
    Ok(dir)
}

/// Latest recorded wall-clock of every stage.
pub fn recorded_timings(dir: &Path) -> Result<Timings> {
    let mut t = Timings::default();
    if !dir.join(RECORDS_FILE).exists() {
        return Ok(t);
    }
    for r in read_records(dir)? {
        let slot = match r.stage.as_str() {
            "train" => &mut t.train,
            "gold" => &mut t.gold,
            "unlearn" => &mut t.unlearn,
            "amnesiac" => &mut t.amnesiac,
            _ => continue,
        };
        *slot = Some(r.seconds);
    }
    Ok(t)
}

/// Scores whichever checkpoints exist and writes the report files and the
/// run manifest.
pub fn evaluate_stage(config: &ExperimentConfig, out: Option<&Path>) -> Result<MetricsReport> {
    let dir = create_run_dir(config, out)?;
    let original = load_role(&dir, ModelRole::Original)?;
    let gold = load_role(&dir, ModelRole::Gold)?;
    let unlearned = load_role(&dir, ModelRole::Unlearned)?;
    let baseline = load_role(&dir, ModelRole::Baseline)?;
    if original.is_none() && gold.is_none() {
        return Err(Error::Argument(format!(
            "no original or gold checkpoint in {}; run `train` or `gold` first",
            dir.display()
        )));
    }
    let p = prepare(config)?;
    let (teacher, _) = build_teacher(&p, &config.teacher_spec())?;
    let models = ModelSet {
        original: original.as_ref(),
        gold: gold.as_ref(),
        unlearned: unlearned.as_ref(),
        amnesiac: baseline.as_ref(),
    };
    let recorded = recorded_timings(&dir)?;
    let timings = Timings {
        train: original.as_ref().and(recorded.train),
        gold: gold.as_ref().and(recorded.gold),
        unlearn: unlearned.as_ref().and(recorded.unlearn),
        amnesiac: baseline.as_ref().and(recorded.amnesiac),
    };
    let report = evaluate(&p, models, &teacher, timings)?;
    write_report(&dir, &report)?;
    write_manifest(&dir, &config.name, config.master_seed)?;
    Ok(report)
}

/// Membership attack against one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub model: String,
    /// Balanced accuracy of the attack on retain vs test, in percent.
    pub attack_accuracy: f64,
    /// Mean membership probability on the forget set.
    pub mia_forget: f64,
    /// Mean membership probability on the test set.
    pub mia_test: f64,
}

/// Fits the attack against every checkpoint present and writes `attack.json`.
pub fn attack_stage(config: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<AttackSummary>> {
    let dir = create_run_dir(config, out)?;
    let p = prepare(config)?;
    let (fv, rv, tv) = (p.forget_view(), p.retain_view(), p.test_view());
    let mut rows = Vec::new();
    for role in [
        ModelRole::Original,
        ModelRole::Gold,
        ModelRole::Unlearned,
        ModelRole::Baseline,
    ] {
        let Some(model) = load_role(&dir, role)? else { continue };
        let run = || -> Result<AttackSummary> {
            let attack = train_attack_model(&model, &rv, &tv, p.seeds.attack)?;
            let eval_seed = crate::seeds::derive_seed(p.seeds.attack, "eval");
            Ok(AttackSummary {
                model: checkpoint_name(role).trim_end_matches(".ckpt").to_string(),
                attack_accuracy: attack.accuracy(&model, &rv, &tv, eval_seed)?,
                mia_forget: crate::metrics::mia_probability(&attack, &model, &fv)?,
                mia_test: crate::metrics::mia_probability(&attack, &model, &tv)?,
            })
        };
        rows.push(run().map_err(|e| e.in_stage("attack"))?);
    }
    if rows.is_empty() {
        return Err(Error::Argument(format!("no checkpoints in {}", dir.display())));
    }
    let path = dir.join(ATTACK_JSON);
    fs::write(&path, serde_json::to_string_pretty(&rows)?).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Every `report.json` found below `root`, sorted by path.
pub fn collect_reports(root: &Path) -> Result<Vec<(PathBuf, MetricsReport)>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.file_name().is_some_and(|n| n == super::run::REPORT_JSON) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    if root.is_file() {
        paths.push(root.to_path_buf());
    } else {
        walk(root, &mut paths)?;
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| MetricsReport::load_json(&p).map(|r| (p, r)))
        .collect()
}
