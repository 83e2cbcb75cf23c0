//! Evaluation battery: ZRF, membership inference, gold-model distances and
//! the per-experiment report.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetView, LabeledDataset};
use crate::divergence::{self, js_bits, ProbVector};
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::seeds;
use crate::teachers::{TeacherHandle, TeacherTag};

/// Zero Retrain Forgetting score of a model against a reference teacher.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZrfScore {
    pub value: f64,
    pub n_f: usize,
    pub reference_teacher: TeacherTag,
}

/// `1 − mean JS(model(x), reference(x))` over the view. Works for any
/// reference predictor; [`zrf_score`] is the teacher-tagged form.
pub fn zrf_value(model: &dyn Predictor, reference: &dyn Predictor, view: &DatasetView<'_>) -> Result<f64> {
    if view.is_empty() {
        return Err(Error::Argument("ZRF over an empty view".into()));
    }
    Ok(1.0 - mean_js(model, reference, view)?)
}

pub fn zrf_score(model: &dyn Predictor, t_d: &TeacherHandle, forget_view: &DatasetView<'_>) -> Result<ZrfScore> {
    Ok(ZrfScore {
        value: zrf_value(model, t_d, forget_view)?,
        n_f: forget_view.len(),
        reference_teacher: t_d.tag(),
    })
}

/// ZRF over held-out data, the level a model reaches on samples it never saw.
pub fn ideal_zrf_proxy(model: &dyn Predictor, t_d: &TeacherHandle, test_set: &LabeledDataset) -> Result<ZrfScore> {
    zrf_score(model, t_d, &DatasetView::all(test_set))
}

fn paired_outputs(
    a: &dyn Predictor,
    b: &dyn Predictor,
    view: &DatasetView<'_>,
) -> Result<(Vec<ProbVector>, Vec<ProbVector>)> {
    if a.class_count() != b.class_count() {
        return Err(Error::Shape(format!(
            "{} classes vs {} classes",
            a.class_count(),
            b.class_count()
        )));
    }
    Ok((a.predict_view(view)?, b.predict_view(view)?))
}

fn mean_js(a: &dyn Predictor, b: &dyn Predictor, view: &DatasetView<'_>) -> Result<f64> {
    let (pa, pb) = paired_outputs(a, b, view)?;
    let total: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(p, q)| js_bits(p.as_slice(), q.as_slice()))
        .sum();
    Ok(total / view.len() as f64)
}

/// Mean base-2 JS divergence between two models over the view.
pub fn js_to_gold(unlearned: &dyn Predictor, gold: &dyn Predictor, forget_view: &DatasetView<'_>) -> Result<f64> {
    if forget_view.is_empty() {
        return Err(Error::Argument("JS over an empty view".into()));
    }
    mean_js(unlearned, gold, forget_view)
}

/// Mean L2 distance between the two models' probability vectors.
pub fn activation_distance_to_gold(
    unlearned: &dyn Predictor,
    gold: &dyn Predictor,
    forget_view: &DatasetView<'_>,
) -> Result<f64> {
    let (pa, pb) = paired_outputs(unlearned, gold, forget_view)?;
    divergence::activation_distance(&pa, &pb)
}

const RIDGE: f64 = 1e-3;
const NEWTON_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackProvenance {
    pub members: usize,
    pub nonmembers: usize,
    pub seed: u64,
}

/// Logistic membership classifier over confidence features.
///
/// Features per sample: probabilities sorted in descending order, max
/// confidence, entropy and true-class probability.
/// Features are standardised with the training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    class_count: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
    provenance: AttackProvenance,
}

fn attack_features(p: &ProbVector, label: usize) -> Vec<f64> {
    let mut sorted = p.as_slice().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let py = p.as_slice()[label];
    let mut f = sorted.clone();
    f.push(sorted[0]);
    f.push(p.entropy());
    f.push(py);
    f
}

fn view_features(target: &dyn Predictor, view: &DatasetView<'_>) -> Result<Vec<Vec<f64>>> {
    let probs = target.predict_view(view)?;
    Ok(probs
        .iter()
        .zip(view.labels())
        .map(|(p, y)| attack_features(p, y))
        .collect())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

impl AttackModel {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> &AttackProvenance {
        &self.provenance
    }

    fn score(&self, features: &[f64]) -> f64 {
        let z: f64 = features
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((x, m), s), w)| w * (x - m) / s)
            .sum();
        sigmoid(z + self.bias)
    }

    /// Membership probability of every sample in the view.
    pub fn membership_probabilities(&self, target: &dyn Predictor, view: &DatasetView<'_>) -> Result<Vec<f64>> {
        if target.class_count() != self.class_count {
            return Err(Error::Attack(format!(
                "attack fit on {} classes, target has {}",
                self.class_count,
                target.class_count()
            )));
        }
        Ok(view_features(target, view)?.iter().map(|f| self.score(f)).collect())
    }

    /// Percentage of correct member/nonmember calls at threshold 0.5 over a
    /// balanced draw of the two views.
    pub fn accuracy(
        &self,
        target: &dyn Predictor,
        members: &DatasetView<'_>,
        nonmembers: &DatasetView<'_>,
        seed: u64,
    ) -> Result<f64> {
        let (m, n) = balanced(members, nonmembers, seed)?;
        let hits_m = self
            .membership_probabilities(target, &m)?
            .iter()
            .filter(|&&p| p >= 0.5)
            .count();
        let hits_n = self
            .membership_probabilities(target, &n)?
            .iter()
            .filter(|&&p| p < 0.5)
            .count();
        Ok(100.0 * (hits_m + hits_n) as f64 / (m.len() + n.len()) as f64)
    }
}

/// Equal-size draws from both views; the larger one is subsampled.
fn balanced<'a>(
    members: &DatasetView<'a>,
    nonmembers: &DatasetView<'a>,
    seed: u64,
) -> Result<(DatasetView<'a>, DatasetView<'a>)> {
    let k = members.len().min(nonmembers.len());
    if k == 0 {
        return Err(Error::Attack(format!(
            "need members and nonmembers, got {} and {}",
            members.len(),
            nonmembers.len()
        )));
    }
    let draw = |v: &DatasetView<'a>, tag: &str| -> Result<DatasetView<'a>> {
        let mut idx = v.indices().to_vec();
        if idx.len() > k {
            idx.shuffle(&mut seeds::rng(seeds::derive_seed(seed, tag)));
            idx.truncate(k);
            idx.sort_unstable();
        }
        DatasetView::new(v.dataset(), idx)
    };
    Ok((draw(members, "attack/members")?, draw(nonmembers, "attack/nonmembers")?))
}

/// Fits the membership classifier on the target's outputs: members from
/// the retain-train data, nonmembers from the test data, equal counts.
#[allow(clippy::needless_range_loop)]
pub fn train_attack_model(
    target: &dyn Predictor,
    member_view: &DatasetView<'_>,
    nonmember_view: &DatasetView<'_>,
    seed: u64,
) -> Result<AttackModel> {
    if std::ptr::eq(member_view.dataset(), nonmember_view.dataset()) {
        let members: std::collections::HashSet<_> = member_view.indices().iter().collect();
        if nonmember_view.indices().iter().any(|i| members.contains(i)) {
            return Err(Error::Attack("member and nonmember views overlap".into()));
        }
    }
    let (m, n) = balanced(member_view, nonmember_view, seed)?;
    let mut rows = view_features(target, &m)?;
    let members = rows.len();
    rows.extend(view_features(target, &n)?);
    let y: Vec<f64> = (0..rows.len()).map(|i| if i < members { 1.0 } else { 0.0 }).collect();

    let d = rows[0].len();
    let count = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / count;
        }
    }
    let mut scale = vec![0.0; d];
    for r in &rows {
        for ((s, x), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (x - m) * (x - m) / count;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut z: Vec<f64> = r.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect();
            z.push(1.0);
            z
        })
        .collect();

    // ridge-penalised Newton iterations; the bias is not penalised
    let dim = d + 1;
    let mut w = vec![0.0; dim];
    for _ in 0..NEWTON_STEPS {
        let mut grad = vec![0.0; dim];
        let mut hess = vec![vec![0.0; dim]; dim];
        for (xi, &yi) in x.iter().zip(&y) {
            let p = sigmoid(xi.iter().zip(&w).map(|(a, b)| a * b).sum());
            let r = p * (1.0 - p);
            for j in 0..dim {
                grad[j] += (p - yi) * xi[j];
                for k in j..dim {
                    hess[j][k] += r * xi[j] * xi[k];
                }
            }
        }
        for j in 0..dim {
            grad[j] /= count;
            for k in j..dim {
                hess[j][k] /= count;
                hess[k][j] = hess[j][k];
            }
            if j < d {
                grad[j] += RIDGE * w[j];
                hess[j][j] += RIDGE;
            } else {
                hess[j][j] += 1e-9;
            }
        }
        let Some(step) = solve(hess, grad) else {
            return Err(Error::Attack("singular attack system".into()));
        };
        let mut largest: f64 = 0.0;
        for (wj, sj) in w.iter_mut().zip(&step) {
            *wj -= sj;
            largest = largest.max(sj.abs());
        }
        if !largest.is_finite() {
            return Err(Error::Attack("attack fit diverged".into()));
        }
        if largest < 1e-10 {
            break;
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    Ok(AttackModel {
        class_count: target.class_count(),
        mean,
        scale,
        weights: w,
        bias,
        provenance: AttackProvenance {
            members,
            nonmembers: count as usize - members,
            seed,
        },
    })
}

/// Mean membership probability over the forget view.
pub fn mia_probability(attack: &AttackModel, target: &dyn Predictor, forget_view: &DatasetView<'_>) -> Result<f64> {
    if forget_view.is_empty() {
        return Err(Error::Argument("membership probability over an empty view".into()));
    }
    let p = attack.membership_probabilities(target, forget_view)?;
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

/// Column order of the CSV table, fixed.
pub const REPORT_COLUMNS: [&str; 32] = [
    "experiment",
    "seed",
    "forget_mode",
    "teacher",
    "n_forget",
    "n_retain",
    "acc_forget_original",
    "acc_retain_original",
    "acc_forget_gold",
    "acc_retain_gold",
    "acc_forget_unlearned",
    "acc_retain_unlearned",
    "acc_forget_amnesiac",
    "acc_retain_amnesiac",
    "acc_test_unlearned",
    "zrf_original",
    "zrf_gold",
    "zrf_unlearned",
    "zrf_test_proxy",
    "zrf_random_reference",
    "mia_original",
    "mia_gold",
    "mia_unlearned",
    "mia_amnesiac",
    "activation_distance",
    "activation_distance_amnesiac",
    "js_to_gold",
    "js_to_gold_amnesiac",
    "seconds_train",
    "seconds_gold",
    "seconds_unlearn",
    "seconds_amnesiac",
];

/// One experiment's numbers. Accuracies are percentages with two decimals;
/// divergences, ZRF and attack probabilities carry three; seconds carry
/// three. Unmeasured fields are `None` and stay empty in the CSV row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub seed: u64,
    pub forget_mode: String,
    pub teacher: String,
    pub n_forget: usize,
    pub n_retain: usize,
    pub acc_forget_original: Option<f64>,
    pub acc_retain_original: Option<f64>,
    pub acc_forget_gold: Option<f64>,
    pub acc_retain_gold: Option<f64>,
    pub acc_forget_unlearned: Option<f64>,
    pub acc_retain_unlearned: Option<f64>,
    pub acc_forget_amnesiac: Option<f64>,
    pub acc_retain_amnesiac: Option<f64>,
    pub acc_test_unlearned: Option<f64>,
    pub zrf_original: Option<f64>,
    pub zrf_gold: Option<f64>,
    pub zrf_unlearned: Option<f64>,
    /// ZRF of the unlearned model (or gold, in a gold-only run) on test data.
    pub zrf_test_proxy: Option<f64>,
    /// Unlearned-model ZRF against a random-init same-arch reference, set
    /// when the run's own incompetent teacher was not of that kind.
    pub zrf_random_reference: Option<f64>,
    pub mia_original: Option<f64>,
    pub mia_gold: Option<f64>,
    pub mia_unlearned: Option<f64>,
    pub mia_amnesiac: Option<f64>,
    pub activation_distance: Option<f64>,
    pub activation_distance_amnesiac: Option<f64>,
    pub js_to_gold: Option<f64>,
    pub js_to_gold_amnesiac: Option<f64>,
    pub seconds_train: Option<f64>,
    pub seconds_gold: Option<f64>,
    pub seconds_unlearn: Option<f64>,
    pub seconds_amnesiac: Option<f64>,
}

/// Raw numbers collected by a run, before rounding and validation.
pub type ReportInputs = MetricsReport;

fn round_to(x: f64, places: i32) -> f64 {
    let k = 10f64.powi(places);
    (x * k).round() / k
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    fn accuracies_mut(&mut self) -> [&mut Option<f64>; 9] {
        [
            &mut self.acc_forget_original,
            &mut self.acc_retain_original,
            &mut self.acc_forget_gold,
            &mut self.acc_retain_gold,
            &mut self.acc_forget_unlearned,
            &mut self.acc_retain_unlearned,
            &mut self.acc_forget_amnesiac,
            &mut self.acc_retain_amnesiac,
            &mut self.acc_test_unlearned,
        ]
    }

    fn unit_interval_mut(&mut self) -> [&mut Option<f64>; 11] {
        [
            &mut self.zrf_original,
            &mut self.zrf_gold,
            &mut self.zrf_unlearned,
            &mut self.zrf_test_proxy,
            &mut self.zrf_random_reference,
            &mut self.mia_original,
            &mut self.mia_gold,
            &mut self.mia_unlearned,
            &mut self.mia_amnesiac,
            &mut self.js_to_gold,
            &mut self.js_to_gold_amnesiac,
        ]
    }

    fn nonnegative_mut(&mut self) -> [&mut Option<f64>; 6] {
        [
            &mut self.activation_distance,
            &mut self.activation_distance_amnesiac,
            &mut self.seconds_train,
            &mut self.seconds_gold,
            &mut self.seconds_unlearn,
            &mut self.seconds_amnesiac,
        ]
    }

    /// Checks ranges and the presence rules.
    pub fn validate(&self) -> Result<()> {
        let mut r = self.clone();
        let missing = |name: &str| Err(Error::Report(format!("missing mandatory metric {name}")));
        if r.experiment.is_empty() {
            return missing("experiment");
        }
        if r.acc_forget_gold.is_none() && r.acc_forget_original.is_none() {
            return missing("acc_forget_gold");
        }
        for (name, a, b) in [
            ("original accuracy pair", r.acc_forget_original, r.acc_retain_original),
            ("gold accuracy pair", r.acc_forget_gold, r.acc_retain_gold),
        ] {
            if a.is_some() != b.is_some() {
                return missing(name);
            }
        }
        let unlearned_touched = r.zrf_unlearned.is_some()
            || r.mia_unlearned.is_some()
            || r.js_to_gold.is_some()
            || r.activation_distance.is_some()
            || r.seconds_unlearn.is_some();
        if unlearned_touched || r.acc_forget_unlearned.is_some() || r.acc_retain_unlearned.is_some() {
            for (name, v) in [
                ("acc_forget_unlearned", r.acc_forget_unlearned),
                ("acc_retain_unlearned", r.acc_retain_unlearned),
                ("zrf_unlearned", r.zrf_unlearned),
            ] {
                if v.is_none() {
                    return missing(name);
                }
            }
        }
        if r.acc_forget_amnesiac.is_some() != r.acc_retain_amnesiac.is_some() {
            return missing("amnesiac accuracy pair");
        }
        for v in r.accuracies_mut().into_iter().flatten() {
            if !(0.0..=100.0).contains(v) {
                return Err(Error::Report(format!("accuracy {v} outside [0, 100]")));
            }
        }
        for v in r.unit_interval_mut().into_iter().flatten() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Report(format!("score {v} outside [0, 1]")));
            }
        }
        for v in r.nonnegative_mut().into_iter().flatten() {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::Report(format!("value {v} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// CSV fields in [`REPORT_COLUMNS`] order.
    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.experiment.clone(),
            self.seed.to_string(),
            self.forget_mode.clone(),
            self.teacher.clone(),
            self.n_forget.to_string(),
            self.n_retain.to_string(),
        ];
        let mut me = self.clone();
        row.extend(me.accuracies_mut().iter().map(|v| opt(**v)));
        row.extend(me.unit_interval_mut()[..5].iter().map(|v| opt(**v)));
        row.extend(me.unit_interval_mut()[5..9].iter().map(|v| opt(**v)));
        row.push(opt(self.activation_distance));
        row.push(opt(self.activation_distance_amnesiac));
        row.push(opt(self.js_to_gold));
        row.push(opt(self.js_to_gold_amnesiac));
        row.extend(me.nonnegative_mut()[2..].iter().map(|v| opt(**v)));
        row
    }

    /// Parses a row written by [`Self::csv_row`].
    pub fn from_csv_row(row: &[String]) -> Result<Self> {
        if row.len() != REPORT_COLUMNS.len() {
            return Err(Error::Report(format!(
                "expected {} columns, got {}",
                REPORT_COLUMNS.len(),
                row.len()
            )));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                row[i]
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Report(format!("column {} is not a number: {}", REPORT_COLUMNS[i], row[i])))
            }
        };
        let int = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|_| Error::Report(format!("column {} is not an integer: {}", REPORT_COLUMNS[i], row[i])))
        };
        Ok(Self {
            experiment: row[0].clone(),
            seed: int(1)?,
            forget_mode: row[2].clone(),
            teacher: row[3].clone(),
            n_forget: int(4)? as usize,
            n_retain: int(5)? as usize,
            acc_forget_original: num(6)?,
            acc_retain_original: num(7)?,
            acc_forget_gold: num(8)?,
            acc_retain_gold: num(9)?,
            acc_forget_unlearned: num(10)?,
            acc_retain_unlearned: num(11)?,
            acc_forget_amnesiac: num(12)?,
            acc_retain_amnesiac: num(13)?,
            acc_test_unlearned: num(14)?,
            zrf_original: num(15)?,
            zrf_gold: num(16)?,
            zrf_unlearned: num(17)?,
            zrf_test_proxy: num(18)?,
            zrf_random_reference: num(19)?,
            mia_original: num(20)?,
            mia_gold: num(21)?,
            mia_unlearned: num(22)?,
            mia_amnesiac: num(23)?,
            activation_distance: num(24)?,
            activation_distance_amnesiac: num(25)?,
            js_to_gold: num(26)?,
            js_to_gold_amnesiac: num(27)?,
            seconds_train: num(28)?,
            seconds_gold: num(29)?,
            seconds_unlearn: num(30)?,
            seconds_amnesiac: num(31)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Rounds the raw numbers and validates them.
pub fn compile_report(inputs: ReportInputs) -> Result<MetricsReport> {
    let mut r = inputs;
    for v in r.accuracies_mut().into_iter().flatten() {
        *v = round_to(*v, 2);
    }
    for v in r.unit_interval_mut().into_iter().flatten() {
        *v = round_to(*v, 3);
    }
    for v in r.nonnegative_mut().into_iter().flatten() {
        *v = round_to(*v, 3);
    }
    r.validate()?;
    Ok(r)
}

/// Writes reports as a CSV table with a header row.
pub fn write_report_table(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_report_row(path: &Path, report: &MetricsReport) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(REPORT_COLUMNS)?;
    }
    w.write_record(report.csv_row())?;
    let mut file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_table(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Report(format!("unexpected header in {}", path.display())));
    }
    r.records()
        .map(|rec| {
            let row: Vec<String> = rec?.iter().map(str::to_string).collect();
            MetricsReport::from_csv_row(&row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::make_synthetic_dataset;
    use crate::models::ArchitectureId;
    use crate::teachers::{make_incompetent, TeacherSpec, TeacherVariant};

    struct Fixed(Vec<ProbVector>);

    impl Predictor for Fixed {
        fn class_count(&self) -> usize {
            self.0[0].len()
        }
        fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
            Ok(view
                .indices()
                .iter()
                .map(|&i| self.0[i % self.0.len()].clone())
                .collect())
        }
    }

    #[test]
    fn zrf_fixed_points() {
        let ds = make_synthetic_dataset(3, 1, 10, 2, 1.0, 1).unwrap();
        let view = DatasetView::all(&ds);
        let gen = make_incompetent(&TeacherSpec::generator(0.05, 4), ArchitectureId::Mlp3, &[2], 3).unwrap();
        let self_score = zrf_score(&gen, &gen, &view).unwrap();
        assert!((self_score.value - 1.0).abs() < 1e-12);
        assert_eq!(self_score.n_f, 30);
        assert_eq!(
            self_score.reference_teacher,
            TeacherTag::Incompetent(TeacherVariant::RandomGenerator)
        );

        let a = Fixed(vec![ProbVector::one_hot(3, 0)]);
        let b = Fixed(vec![ProbVector::one_hot(3, 1)]);
        assert!(zrf_value(&a, &b, &view).unwrap().abs() < 1e-12);
        let empty = DatasetView::new(&ds, vec![]).unwrap();
        assert!(matches!(zrf_value(&a, &b, &empty), Err(Error::Argument(_))));
        assert_eq!(js_to_gold(&a, &a, &view).unwrap(), 0.0);
        assert!((activation_distance_to_gold(&a, &b, &view).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_target_gives_coin_flip_attack() {
        let ds = make_synthetic_dataset(4, 1, 50, 3, 2.0, 2).unwrap();
        let members = DatasetView::new(&ds, (0..100).collect()).unwrap();
        let nonmembers = DatasetView::new(&ds, (100..200).collect()).unwrap();
        let constant = Fixed(vec![ProbVector::uniform(4)]);
        let attack = train_attack_model(&constant, &members, &nonmembers, 3).unwrap();
        let p = mia_probability(&attack, &constant, &members).unwrap();
        assert!((p - 0.5).abs() < 1e-6, "{p}");
    }

    #[test]
    fn attack_errors() {
        let ds = make_synthetic_dataset(2, 1, 10, 2, 2.0, 2).unwrap();
        let c = Fixed(vec![ProbVector::uniform(2)]);
        let all = DatasetView::all(&ds);
        let none = DatasetView::new(&ds, vec![]).unwrap();
        assert!(matches!(train_attack_model(&c, &all, &none, 0), Err(Error::Attack(_))));
        assert!(matches!(train_attack_model(&c, &all, &all, 0), Err(Error::Attack(_))));
    }

    #[test]
    fn separable_features_are_learned() {
        let ds = make_synthetic_dataset(2, 1, 40, 2, 2.0, 5).unwrap();
        // member half confident on the true class, nonmember half flat
        struct Split<'a>(&'a LabeledDataset);
        impl Predictor for Split<'_> {
            fn class_count(&self) -> usize {
                2
            }
            fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
                Ok(view
                    .indices()
                    .iter()
                    .map(|&i| {
                        let y = self.0.label(i);
                        let q = if i % 2 == 0 { 0.99 } else { 0.6 };
                        let mut v = vec![1.0 - q; 2];
                        v[y] = q;
                        ProbVector::new(v).unwrap()
                    })
                    .collect())
            }
        }
        let t = Split(&ds);
        let even = DatasetView::new(&ds, (0..80).step_by(2).collect()).unwrap();
        let odd = DatasetView::new(&ds, (1..80).step_by(2).collect()).unwrap();
        let attack = train_attack_model(&t, &even, &odd, 9).unwrap();
        assert!(attack.accuracy(&t, &even, &odd, 1).unwrap() > 99.0);
        assert!(mia_probability(&attack, &t, &even).unwrap() > 0.9);
        assert!(mia_probability(&attack, &t, &odd).unwrap() < 0.1);
    }

    fn sample_report() -> MetricsReport {
        MetricsReport {
            experiment: "demo".into(),
            seed: 7,
            forget_mode: "full_class".into(),
            teacher: "random_init_same_arch".into(),
            n_forget: 10,
            n_retain: 90,
            acc_forget_original: Some(99.123),
            acc_retain_original: Some(98.0),
            acc_forget_gold: Some(0.0),
            acc_retain_gold: Some(97.5),
            acc_forget_unlearned: Some(3.3333),
            acc_retain_unlearned: Some(96.6666),
            zrf_unlearned: Some(0.87654),
            js_to_gold: Some(0.04),
            seconds_unlearn: Some(0.01234),
            ..Default::default()
        }
    }

    #[test]
    fn report_rounding_and_round_trips() {
        let r = compile_report(sample_report()).unwrap();
        assert_eq!(r.acc_forget_original, Some(99.12));
        assert_eq!(r.acc_retain_unlearned, Some(96.67));
        assert_eq!(r.zrf_unlearned, Some(0.877));
        assert_eq!(r.seconds_unlearn, Some(0.012));
        assert_eq!(MetricsReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let row = r.csv_row();
        assert_eq!(row.len(), REPORT_COLUMNS.len());
        assert_eq!(MetricsReport::from_csv_row(&row).unwrap(), r);
    }

    #[test]
    fn report_presence_rules() {
        let mut gold_only = sample_report();
        gold_only.acc_forget_unlearned = None;
        gold_only.acc_retain_unlearned = None;
        gold_only.zrf_unlearned = None;
        gold_only.js_to_gold = None;
        gold_only.seconds_unlearn = None;
        assert!(compile_report(gold_only).is_ok());

        let mut partial = sample_report();
        partial.zrf_unlearned = None;
        assert!(matches!(compile_report(partial), Err(Error::Report(_))));
        let mut no_gold = sample_report();
        no_gold.acc_retain_gold = None;
        assert!(matches!(compile_report(no_gold), Err(Error::Report(_))));
        let mut bad = sample_report();
        bad.zrf_unlearned = Some(1.5);
        assert!(matches!(compile_report(bad), Err(Error::Report(_))));
    }

    #[test]
    fn table_append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.csv");
        let r = compile_report(sample_report()).unwrap();
        append_report_row(&path, &r).unwrap();
        append_report_row(&path, &r).unwrap();
        let back = read_report_table(&path).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
    }
}
