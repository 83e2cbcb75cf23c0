use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{amnesiac, prepare, train_gold, train_original, unlearn_original};
use crate::error::{Error, Result};
use crate::teachers::{TeacherSpec, TeacherVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimedMethod {
    Retrain,
    Proposed,
    Amnesiac,
    ProposedPtTeacher,
}

impl TimedMethod {
    pub const ALL: [TimedMethod; 4] = [Self::Retrain, Self::Proposed, Self::Amnesiac, Self::ProposedPtTeacher];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Retrain => "retrain",
            Self::Proposed => "proposed",
            Self::Amnesiac => "amnesiac",
            Self::ProposedPtTeacher => "proposed_pt_teacher",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown timing method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: TimedMethod,
    /// Fastest of the repeats.
    pub seconds: f64,
    /// `seconds / retrain seconds`; absent when retrain was not timed.
    pub ratio_to_retrain: Option<f64>,
}

/// Wall-clock of each method on the same data, split and original model.
///
/// Each method runs `repeats` times and keeps the minimum. Teacher
/// construction is counted in both proposed variants, so the partially
/// trained teacher's extra training shows up in its time.
pub fn timing_compare(methods: &[TimedMethod], config: &ExperimentConfig, repeats: usize) -> Result<Vec<TimingRow>> {
    if methods.is_empty() || repeats == 0 {
        return Err(Error::Argument(
            "timing needs at least one method and one repeat".into(),
        ));
    }
    let p = prepare(config)?;
    let original = train_original(&p)?.model;
    let mut pt = p.clone();
    pt.config.teacher = TeacherSpec::for_variant(TeacherVariant::PartiallyTrained, config.teacher.seed);

    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut best = f64::INFINITY;
        for _ in 0..repeats {
            let start = Instant::now();
            let seconds = match method {
                TimedMethod::Retrain => train_gold(&p)?.seconds,
                TimedMethod::Proposed => unlearn_original(&p, &original)?.0.wall_clock_seconds,
                TimedMethod::Amnesiac => amnesiac(&p, &original)?.wall_clock_seconds,
                TimedMethod::ProposedPtTeacher => unlearn_original(&pt, &original)?.0.wall_clock_seconds,
            };
            log::debug!(
                "{}: {seconds:.4}s ({:.4}s incl. overhead)",
                method.as_str(),
                start.elapsed().as_secs_f64()
            );
            best = best.min(seconds);
        }
        rows.push(TimingRow {
            method,
            seconds: best,
            ratio_to_retrain: None,
        });
    }
    if let Some(retrain) = rows
        .iter()
        .find(|r| r.method == TimedMethod::Retrain)
        .map(|r| r.seconds)
    {
        for row in &mut rows {
            row.ratio_to_retrain = Some(row.seconds / retrain);
        }
    }
    Ok(rows)
}

pub fn write_timing_table(path: &Path, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "seconds", "ratio_to_retrain"])?;
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            format!("{:.6}", r.seconds),
            r.ratio_to_retrain.map(|x| format!("{x:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_timing_table(path: &Path) -> Result<Vec<TimingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("{}: bad number `{s}`", path.display())))
        };
        let ratio = rec.get(2).unwrap_or("");
        rows.push(TimingRow {
            method: TimedMethod::parse(rec.get(0).unwrap_or(""))?,
            seconds: num(rec.get(1).unwrap_or(""))?,
            ratio_to_retrain: if ratio.is_empty() { None } else { Some(num(ratio)?) },
        });
    }
    Ok(rows)
}
