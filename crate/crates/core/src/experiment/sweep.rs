use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GridPoint, SweepSpec};
use super::run::{amnesiac, evaluate, prepare, train_gold, train_original, unlearn_original, ModelSet, Timings};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, REPORT_COLUMNS};
use crate::teachers::TeacherSpec;

/// Grid coordinate columns prepended to the report columns in `sweep.csv`.
pub const GRID_COLUMNS: [&str; 4] = [
    "grid_epochs",
    "grid_retain_fraction",
    "grid_learning_rate",
    "grid_teacher",
];

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: GridPoint,
    pub report: MetricsReport,
}

/// The base config with one grid point applied.
pub fn point_config(base: &ExperimentConfig, point: &GridPoint) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.unlearn.epochs = point.epochs;
    cfg.unlearn.retain_fraction = point.retain_fraction;
    cfg.unlearn.learning_rate = point.learning_rate;
    if cfg.teacher.variant != point.teacher {
        cfg.teacher = TeacherSpec::for_variant(point.teacher, cfg.teacher.seed);
    }
    cfg
}

/// Runs every grid point. The data, split, original and gold models only
/// depend on the base config, so they are built once and shared; the
/// points then run in parallel.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let points = spec.points()?;
    if points.is_empty() {
        return Err(Error::Spec("sweep grid is empty".into()));
    }
    let base = prepare(&spec.base)?;
    let original = train_original(&base)?;
    let gold = if spec.base.metrics.gold {
        Some(train_gold(&base)?)
    } else {
        None
    };

    points
        .par_iter()
        .map(|point| {
            let mut p = base.clone();
            p.config = point_config(&spec.base, point);
            p.config.validate()?;
            let (unlearned, teacher) = unlearn_original(&p, &original.model)?;
            let baseline = if p.config.metrics.amnesiac {
                Some(amnesiac(&p, &original.model)?)
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
            Ok(SweepRow { point: *point, report })
        })
        .collect()
}

pub fn write_sweep_table(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GRID_COLUMNS.iter().chain(REPORT_COLUMNS.iter()))?;
    for row in rows {
        let mut record = vec![
            row.point.epochs.to_string(),
            row.point.retain_fraction.to_string(),
            row.point.learning_rate.to_string(),
            row.point.teacher.as_str().to_string(),
        ];
        record.extend(row.report.csv_row());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the sweep and writes `sweep.csv` plus one report JSON per point.
pub fn run_sweep_to_dir(spec: &SweepSpec, out: Option<&Path>) -> Result<(Vec<SweepRow>, PathBuf)> {
    let dir = spec.base.resolve_output(out).join("sweep");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows = run_sweep(spec)?;
    write_sweep_table(&dir.join(SWEEP_CSV), &rows)?;
    let json = dir.join("sweep.json");
    fs::write(&json, serde_json::to_string_pretty(&rows)?).map_err(|e| Error::io(&json, e))?;
    Ok((rows, dir))
}

/// Number of strict decreases in `values`.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_count() {
        assert_eq!(inversions(&[0.1, 0.2, 0.3]), 0);
        assert_eq!(inversions(&[0.1, 0.3, 0.2, 0.4]), 1);
        assert_eq!(inversions(&[0.3, 0.3]), 0);
        assert_eq!(inversions(&[]), 0);
    }
}
