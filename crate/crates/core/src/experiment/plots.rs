use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const ACCURACY_PNG: &str = "accuracy.png";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const TIMING_PNG: &str = "timing.png";
pub const TIMING_CSV: &str = "timing_plot.csv";

const WIDTH: u32 = 640;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 24;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const PALETTE: [Rgb<u8>; 4] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
];

/// What [`emit_plots`] wrote and which plots it left out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub skipped: Vec<&'static str>,
}

/// One bar group: a label and one value per series.
#[derive(Clone, Debug, PartialEq)]
pub struct BarGroup {
    pub label: String,
    pub values: Vec<f64>,
}

fn accuracy_groups(reports: &[MetricsReport]) -> Vec<BarGroup> {
    let mut groups = Vec::new();
    for r in reports {
        let methods = [
            ("original", r.acc_forget_original, r.acc_retain_original),
            ("gold", r.acc_forget_gold, r.acc_retain_gold),
            ("unlearned", r.acc_forget_unlearned, r.acc_retain_unlearned),
            ("amnesiac", r.acc_forget_amnesiac, r.acc_retain_amnesiac),
        ];
        for (name, f, t) in methods {
            if let (Some(f), Some(t)) = (f, t) {
                groups.push(BarGroup {
                    label: format!("{}/{name}", r.experiment),
                    values: vec![f, t],
                });
            }
        }
    }
    groups
}

fn timing_groups(reports: &[MetricsReport]) -> Vec<BarGroup> {
    let mut groups = Vec::new();
    for r in reports {
        let methods = [
            ("retrain", r.seconds_gold),
            ("proposed", r.seconds_unlearn),
            ("amnesiac", r.seconds_amnesiac),
        ];
        for (name, s) in methods {
            if let Some(s) = s {
                groups.push(BarGroup {
                    label: format!("{}/{name}", r.experiment),
                    values: vec![s],
                });
            }
        }
    }
    groups
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for x in x0..x1.min(img.width()) {
        for y in y0..y1.min(img.height()) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Renders grouped bars scaled to `max` (or the largest value).
pub fn render_bars(groups: &[BarGroup], max: Option<f64>) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    let top = MARGIN;
    let bottom = HEIGHT - MARGIN;
    let plot_h = f64::from(bottom - top);
    let largest = groups.iter().flat_map(|g| g.values.iter().copied()).fold(0.0, f64::max);
    let scale = max.unwrap_or(largest).max(f64::MIN_POSITIVE);
    for k in 1..=4 {
        let y = bottom - (plot_h * f64::from(k) / 4.0) as u32;
        fill(&mut img, MARGIN, y, WIDTH - MARGIN, y + 1, GRID);
    }
    if !groups.is_empty() {
        let slot = (WIDTH - 2 * MARGIN) / groups.len() as u32;
        for (gi, g) in groups.iter().enumerate() {
            let n = g.values.len().max(1) as u32;
            let bar = (slot * 3 / 4 / n).max(1);
            let x_start = MARGIN + gi as u32 * slot + slot / 8;
            for (si, &v) in g.values.iter().enumerate() {
                let h = ((v / scale).clamp(0.0, 1.0) * plot_h) as u32;
                let x = x_start + si as u32 * bar;
                fill(&mut img, x, bottom - h, x + bar, bottom, PALETTE[si % PALETTE.len()]);
            }
        }
    }
    fill(&mut img, MARGIN, bottom, WIDTH - MARGIN, bottom + 1, AXIS);
    fill(&mut img, MARGIN, top, MARGIN + 1, bottom, AXIS);
    img
}

fn write_sidecar(path: &Path, series: &[&str], groups: &[BarGroup]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group"];
    header.extend_from_slice(series);
    w.write_record(&header)?;
    for g in groups {
        let mut rec = vec![g.label.clone()];
        rec.extend(g.values.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Vec<BarGroup>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("{}: bad number `{s}`", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(BarGroup {
            label: rec.get(0).unwrap_or("").to_string(),
            values,
        });
    }
    Ok(out)
}

/// `(image, sidecar, series, groups, axis max)`
type Chart = (
    &'static str,
    &'static str,
    &'static [&'static str],
    Vec<BarGroup>,
    Option<f64>,
);

/// Writes the accuracy and timing bar charts with CSV sidecars into `dir`.
/// A chart with no data is skipped with a logged notice.
pub fn emit_plots(reports: &[MetricsReport], dir: &Path) -> Result<PlotOutput> {
    if reports.is_empty() {
        return Err(Error::Argument("no reports to plot".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = PlotOutput::default();
    let charts: [Chart; 2] = [
        (
            ACCURACY_PNG,
            ACCURACY_CSV,
            &["forget_accuracy", "retain_accuracy"],
            accuracy_groups(reports),
            Some(100.0),
        ),
        (TIMING_PNG, TIMING_CSV, &["seconds"], timing_groups(reports), None),
    ];
    for (png, sidecar, series, groups, max) in charts {
        if groups.is_empty() {
            log::info!("skipping {png}: the reports carry no data for it");
            out.skipped.push(png);
            continue;
        }
        let png_path = dir.join(png);
        render_bars(&groups, max).save(&png_path)?;
        let csv_path = dir.join(sidecar);
        write_sidecar(&csv_path, series, &groups)?;
        out.files.push(png_path);
        out.files.push(csv_path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> MetricsReport {
        MetricsReport {
            experiment: "x".into(),
            acc_forget_original: Some(99.0),
            acc_retain_original: Some(98.0),
            acc_forget_unlearned: Some(20.0),
            acc_retain_unlearned: Some(97.0),
            zrf_unlearned: Some(0.6),
            seconds_gold: Some(2.0),
            seconds_unlearn: Some(0.1),
            ..Default::default()
        }
    }

    #[test]
    fn one_report_two_images() {
        let dir = tempfile::tempdir().unwrap();
        let out = emit_plots(&[report()], dir.path()).unwrap();
        assert!(out.skipped.is_empty());
        assert!(dir.path().join(ACCURACY_PNG).exists());
        assert!(dir.path().join(TIMING_PNG).exists());
        let acc = read_sidecar(&dir.path().join(ACCURACY_CSV)).unwrap();
        assert_eq!(acc.len(), 2);
        assert_eq!(acc[1].values, vec![20.0, 97.0]);
    }

    #[test]
    fn missing_timing_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let r = MetricsReport {
            seconds_gold: None,
            seconds_unlearn: None,
            ..report()
        };
        let out = emit_plots(&[r], dir.path()).unwrap();
        assert_eq!(out.skipped, vec![TIMING_PNG]);
        assert!(!dir.path().join(TIMING_PNG).exists());
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = accuracy_groups(&[report()]);
        assert_eq!(render_bars(&g, Some(100.0)), render_bars(&g, Some(100.0)));
    }
}
