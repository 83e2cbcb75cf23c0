//! Student unlearning with a competent and an incompetent teacher.
//!
//! The student starts as a copy of the trained model and minimises, per
//! sample,
//!
//! ```text
//! L(x, l_u) = (1 − l_u)·KL(T_s(x) ‖ S(x)) + l_u·KL(T_d(x) ‖ S(x))
//! ```
//!
//! over all forget samples (`l_u = 1`) and a sampled fraction of the retain
//! set (`l_u = 0`). The batch loss is the mean over the mini-batch.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    build_unlearning_set, partition, DatasetView, ForgetSpec, LabeledDataset, Partition, UnlearningSet,
};
use crate::divergence::{kl_nats, softmax_into, ProbVector, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::models::{ClassifierHandle, EpochRunner, Objective, Predictor};
use crate::seeds;
use crate::teachers::{make_competent, TeacherHandle, TeacherTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub retain_fraction: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Draw a new retain sample at the start of every epoch.
    pub resample_retain_per_epoch: bool,
    /// Epoch budget of the random-relabel baseline; `None` uses `epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amnesiac_epochs: Option<usize>,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self::sample_unlearning()
    }
}

impl UnlearnConfig {
    /// Sample / subclass forgetting: 30% retain, one epoch, lr 1e-4.
    pub fn sample_unlearning() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 1,
            retain_fraction: 0.3,
            batch_size: 256,
            temperature: 1.0,
            seed: 0,
            resample_retain_per_epoch: false,
            amnesiac_epochs: None,
        }
    }

    /// Full-class forgetting: as above with lr 1e-3.
    pub fn class_unlearning() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::sample_unlearning()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Spec(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.retain_fraction) {
            return Err(Error::Spec(format!(
                "retain_fraction {} outside [0, 1]",
                self.retain_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Spec(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Seed of the retain sample shared by the method and the baseline.
    pub fn retain_sample_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, "unlearn/retain-sample")
    }

    pub fn amnesiac_epoch_budget(&self) -> usize {
        self.amnesiac_epochs.unwrap_or(self.epochs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TeacherStudent,
    Amnesiac,
}

#[derive(Clone, Debug)]
pub struct UnlearnResult {
    /// The unlearned model.
    pub student: ClassifierHandle,
    pub method: Method,
    pub wall_clock_seconds: f64,
    /// Mean batch loss of every optimiser step.
    pub loss_trace: Vec<f64>,
    /// Sample-weighted mean loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub config: UnlearnConfig,
    /// Competent and incompetent teacher tags (`None` for the baseline).
    pub teachers: Option<(TeacherTag, TeacherTag)>,
}

/// Per-sample objective on probability vectors, in nats.
pub fn unlearn_loss(t_s: &ProbVector, t_d: &ProbVector, s: &ProbVector, l_u: u8) -> Result<f64> {
    if t_s.len() != s.len() || t_d.len() != s.len() {
        return Err(Error::Shape(format!(
            "teacher/student lengths {}, {}, {}",
            t_s.len(),
            t_d.len(),
            s.len()
        )));
    }
    match l_u {
        0 => Ok(kl_nats(t_s.as_slice(), s.as_slice(), DEFAULT_EPSILON)),
        1 => Ok(kl_nats(t_d.as_slice(), s.as_slice(), DEFAULT_EPSILON)),
        other => Err(Error::Argument(format!("unlearning label must be 0 or 1, got {other}"))),
    }
}

/// Arithmetic mean of [`unlearn_loss`] over a batch of `(t_s, t_d, s, l_u)`.
pub fn unlearn_batch_loss(batch: &[(ProbVector, ProbVector, ProbVector, u8)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut total = 0.0;
    for (t_s, t_d, s, l_u) in batch {
        total += unlearn_loss(t_s, t_d, s, *l_u)?;
    }
    Ok(total / batch.len() as f64)
}

/// `KL(target ‖ softmax(logits / T))` and its gradient with respect to the
/// logits, honouring the ε floor on the student side.
pub(crate) fn kl_to_logits_grad(
    target: &[f64],
    logits: &[f64],
    temperature: f64,
    probs: &mut [f64],
    dlogits: &mut [f64],
) -> f64 {
    softmax_into(logits, temperature, probs);
    let loss = kl_nats(target, probs, DEFAULT_EPSILON);
    let active_mass: f64 = target
        .iter()
        .zip(probs.iter())
        .filter(|(_, &s)| s >= DEFAULT_EPSILON)
        .map(|(t, _)| t)
        .sum();
    for ((d, &t), &s) in dlogits.iter_mut().zip(target).zip(probs.iter()) {
        let own = if s >= DEFAULT_EPSILON { t } else { 0.0 };
        *d = (s * active_mass - own) / temperature;
    }
    loss
}

/// Loss and logit gradient of one sample given raw student logits.
pub fn unlearn_loss_with_grad(
    t_s: &ProbVector,
    t_d: &ProbVector,
    student_logits: &[f64],
    l_u: u8,
    temperature: f64,
) -> Result<(f64, Vec<f64>)> {
    if t_s.len() != student_logits.len() || t_d.len() != student_logits.len() {
        return Err(Error::Shape("teacher and student widths differ".into()));
    }
    let target = match l_u {
        0 => t_s,
        1 => t_d,
        other => return Err(Error::Argument(format!("unlearning label must be 0 or 1, got {other}"))),
    };
    let mut probs = vec![0.0; student_logits.len()];
    let mut grad = vec![0.0; student_logits.len()];
    let loss = kl_to_logits_grad(target.as_slice(), student_logits, temperature, &mut probs, &mut grad);
    Ok((loss, grad))
}

struct Distill<'a> {
    dataset: &'a LabeledDataset,
    /// `(sample index, target distribution)`
    items: Vec<(usize, Vec<f64>)>,
    temperature: f64,
}

impl Objective for Distill<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample(&self, item: usize) -> &[f64] {
        self.dataset.sample(self.items[item].0)
    }

    fn loss_and_grad(&self, item: usize, logits: &[f64], dlogits: &mut [f64]) -> f64 {
        let mut probs = vec![0.0; logits.len()];
        kl_to_logits_grad(&self.items[item].1, logits, self.temperature, &mut probs, dlogits)
    }
}

/// Teacher outputs at `temperature`. Model teachers rescale their logits;
/// generator outputs are tempered as `p^(1/T)` renormalised, which is the
/// same operation applied to log-probabilities.
fn tempered_targets(teacher: &TeacherHandle, view: &DatasetView<'_>, temperature: f64) -> Result<Vec<Vec<f64>>> {
    if let (Some(model), true) = (teacher.model(), temperature != 1.0) {
        let ds = view.dataset();
        return view
            .indices()
            .iter()
            .map(|&i| {
                let z = model.logits(ds.sample(i))?;
                let mut p = vec![0.0; z.len()];
                softmax_into(&z, temperature, &mut p);
                Ok(p)
            })
            .collect();
    }
    let probs = teacher.predict_view(view)?;
    Ok(probs
        .into_iter()
        .map(|p| {
            let mut v = p.into_inner();
            if temperature != 1.0 {
                v.iter_mut().for_each(|x| *x = x.powf(1.0 / temperature));
                let sum: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= sum);
            }
            v
        })
        .collect())
}

fn distill_items(
    uset: &UnlearningSet,
    dataset: &LabeledDataset,
    t_s: &TeacherHandle,
    t_d: &TeacherHandle,
    temperature: f64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let (forget, retain): (Vec<usize>, Vec<usize>) = {
        let mut f = Vec::new();
        let mut r = Vec::new();
        for e in uset.entries() {
            if e.forget {
                f.push(e.index)
            } else {
                r.push(e.index)
            }
        }
        (f, r)
    };
    // each sample only needs the teacher its label selects
    let forget_targets = tempered_targets(t_d, &DatasetView::new(dataset, forget.clone())?, temperature)?;
    let retain_targets = tempered_targets(t_s, &DatasetView::new(dataset, retain.clone())?, temperature)?;
    Ok(forget
        .into_iter()
        .zip(forget_targets)
        .chain(retain.into_iter().zip(retain_targets))
        .collect())
}

fn check_classes(
    original: &ClassifierHandle,
    t_s: &TeacherHandle,
    t_d: &TeacherHandle,
    dataset: &LabeledDataset,
) -> Result<()> {
    let c = original.class_count();
    if t_s.class_count() != c || t_d.class_count() != c || dataset.class_count() != c {
        return Err(Error::Spec(format!(
            "class counts disagree: student {c}, competent {}, incompetent {}, dataset {}",
            t_s.class_count(),
            t_d.class_count(),
            dataset.class_count()
        )));
    }
    Ok(())
}

/// Runs teacher-student unlearning on a copy of `original`.
///
/// Teacher outputs are computed once up front (teachers are frozen and the
/// inputs are not augmented), then the student takes `epochs` shuffled
/// passes over the unlearning set with Adam. A diverging run returns an
/// error and leaves `original` untouched.
pub fn run_unlearning(
    original: &ClassifierHandle,
    t_s: &TeacherHandle,
    t_d: &TeacherHandle,
    uset: &UnlearningSet,
    dataset: &LabeledDataset,
    config: &UnlearnConfig,
) -> Result<UnlearnResult> {
    config.validate()?;
    check_classes(original, t_s, t_d, dataset)?;
    if uset.partition().total() != dataset.len() {
        return Err(Error::Argument("unlearning set does not belong to this dataset".into()));
    }
    let start = Instant::now();
    let mut student = original.clone();
    let mut objective = Distill {
        dataset,
        items: distill_items(uset, dataset, t_s, t_d, config.temperature)?,
        temperature: config.temperature,
    };
    let mut runner = EpochRunner::new(
        student.params().len(),
        config.learning_rate,
        None,
        None,
        config.batch_size,
        seeds::derive_seed(config.seed, "unlearn/shuffle"),
    );
    let mut loss_trace = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.resample_retain_per_epoch && epoch > 0 {
            let fresh = uset.resampled(dataset, seeds::mix(config.retain_sample_seed(), epoch as u64))?;
            objective.items = distill_items(&fresh, dataset, t_s, t_d, config.temperature)?;
        }
        let loss = runner.run_epoch(&mut student, &objective, epoch, &mut loss_trace)?;
        epoch_losses.push(loss);
    }
    Ok(UnlearnResult {
        student,
        method: Method::TeacherStudent,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        loss_trace,
        epoch_losses,
        config: config.clone(),
        teachers: Some((t_s.tag(), t_d.tag())),
    })
}

/// Random-relabel fine-tuning baseline.
///
/// Each forget sample gets a label drawn uniformly from the other `c − 1`
/// classes, redrawn every epoch; the retain sample (same seed as the
/// teacher-student run) keeps its true labels. Cross-entropy, Adam.
pub fn amnesiac_baseline(
    original: &ClassifierHandle,
    partition: &Partition,
    dataset: &LabeledDataset,
    config: &UnlearnConfig,
) -> Result<UnlearnResult> {
    use crate::models::train_objective::CrossEntropy;

    config.validate()?;
    let c = original.class_count();
    if dataset.class_count() != c {
        return Err(Error::Spec(format!(
            "model has {c} classes, dataset {}",
            dataset.class_count()
        )));
    }
    let start = Instant::now();
    let uset = build_unlearning_set(partition, dataset, config.retain_fraction, config.retain_sample_seed())?;
    let retain: Vec<(usize, usize)> = uset.retain_indices().map(|i| (i, dataset.label(i))).collect();
    let mut student = original.clone();
    let mut runner = EpochRunner::new(
        student.params().len(),
        config.learning_rate,
        None,
        None,
        config.batch_size,
        seeds::derive_seed(config.seed, "amnesiac/shuffle"),
    );
    let mut loss_trace = Vec::new();
    let mut epoch_losses = Vec::new();
    for epoch in 0..config.amnesiac_epoch_budget() {
        let mut rng = seeds::rng(seeds::mix(
            seeds::derive_seed(config.seed, "amnesiac/labels"),
            epoch as u64,
        ));
        let mut items: Vec<(usize, usize)> = partition
            .forget_set()
            .iter()
            .map(|&i| {
                let y = dataset.label(i);
                let r = rng.random_range(0..c - 1);
                (i, if r >= y { r + 1 } else { r })
            })
            .collect();
        items.extend_from_slice(&retain);
        let objective = CrossEntropy { dataset, items };
        let loss = runner.run_epoch(&mut student, &objective, epoch, &mut loss_trace)?;
        epoch_losses.push(loss);
    }
    Ok(UnlearnResult {
        student,
        method: Method::Amnesiac,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        loss_trace,
        epoch_losses,
        config: config.clone(),
        teachers: None,
    })
}

/// One answered request of a sequential run.
#[derive(Clone, Debug)]
pub struct SequentialStep {
    pub result: UnlearnResult,
    /// Cumulative partition after this request.
    pub partition: Partition,
    /// Samples first forgotten by this request.
    pub newly_forgotten: Vec<usize>,
}

/// Config used for request `k`: request 0 uses `config` unchanged, later
/// requests derive their seed from it.
pub fn request_config(config: &UnlearnConfig, k: usize) -> UnlearnConfig {
    let mut c = config.clone();
    if k > 0 {
        c.seed = seeds::derive_seed(config.seed, &format!("sequential/{k}"));
    }
    c
}

/// Answers forget requests one after another.
///
/// Request `k` starts from the student of request `k − 1`, which also serves
/// as its competent teacher. Its partition forgets everything forgotten so
/// far plus the new targets, so earlier forget samples stay in the forget
/// term. `incompetent(k, partition)` supplies a fresh teacher per request.
pub fn sequential_unlearn<F>(
    original: &ClassifierHandle,
    specs: &[ForgetSpec],
    dataset: &LabeledDataset,
    mut incompetent: F,
    config: &UnlearnConfig,
) -> Result<Vec<SequentialStep>>
where
    F: FnMut(usize, &Partition) -> Result<TeacherHandle>,
{
    if specs.is_empty() {
        return Err(Error::Spec("no forget requests".into()));
    }
    check_disjoint(specs, dataset)?;
    let mut steps: Vec<SequentialStep> = Vec::with_capacity(specs.len());
    let mut current = original.clone();
    for (k, spec) in specs.iter().enumerate() {
        let cfg = request_config(config, k);
        let (part, fresh) = match steps.last() {
            None => {
                let p = partition(dataset, spec, cfg.seed)?;
                let fresh = p.forget_set().to_vec();
                (p, fresh)
            }
            Some(prev) => prev.partition.extend(dataset, spec, cfg.seed)?,
        };
        let uset = build_unlearning_set(&part, dataset, cfg.retain_fraction, cfg.retain_sample_seed())?;
        let t_s = make_competent(&current);
        let t_d = incompetent(k, &part)?;
        let result = run_unlearning(&current, &t_s, &t_d, &uset, dataset, &cfg)?;
        current = result.student.clone();
        steps.push(SequentialStep {
            result,
            partition: part,
            newly_forgotten: fresh,
        });
    }
    Ok(steps)
}

fn check_disjoint(specs: &[ForgetSpec], dataset: &LabeledDataset) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for spec in specs {
        if matches!(spec, ForgetSpec::RandomSubset { .. }) {
            continue;
        }
        let p = partition(dataset, spec, 0)?;
        for &i in p.forget_set() {
            if !seen.insert(i) {
                return Err(Error::Spec(format!("forget requests overlap at sample {i}")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn selector_collapses_to_single_kl() {
        let ts = pv(&[0.7, 0.2, 0.1]);
        let td = pv(&[0.3, 0.3, 0.4]);
        let s = pv(&[0.5, 0.25, 0.25]);
        let cfg = crate::divergence::DivergenceConfig::default();
        assert_eq!(
            unlearn_loss(&ts, &td, &s, 1).unwrap(),
            crate::divergence::kl_divergence(&td, &s, &cfg).unwrap()
        );
        assert_eq!(
            unlearn_loss(&ts, &td, &s, 0).unwrap(),
            crate::divergence::kl_divergence(&ts, &s, &cfg).unwrap()
        );
        assert_eq!(unlearn_loss(&ts, &td, &td, 1).unwrap(), 0.0);
        assert!(unlearn_loss(&ts, &td, &s, 2).is_err());
        assert!(matches!(
            unlearn_loss(&ts, &td, &pv(&[0.5, 0.5]), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn batch_loss_is_mean() {
        let ts = pv(&[0.5, 0.5]);
        let td = pv(&[0.9, 0.1]);
        let s = pv(&[0.25, 0.75]);
        // independent evaluation of the two KL terms
        let a = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let b = 0.9 * (0.9f64 / 0.25).ln() + 0.1 * (0.1f64 / 0.75).ln();
        let got = unlearn_batch_loss(&[(ts.clone(), td.clone(), s.clone(), 0), (ts, td, s, 1)]).unwrap();
        assert_abs_diff_eq!(got, (a + b) / 2.0, epsilon = 1e-12);
        assert!(unlearn_batch_loss(&[]).is_err());
    }

    #[test]
    fn logit_gradient_matches_central_differences() {
        let t = pv(&[0.1, 0.6, 0.3]);
        for temperature in [1.0, 2.5] {
            let z = [0.3, -1.2, 0.8];
            let (_, g) = unlearn_loss_with_grad(&t, &t, &z, 0, temperature).unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut up = z;
                up[j] += h;
                let mut dn = z;
                dn[j] -= h;
                let f = |zz: &[f64]| unlearn_loss_with_grad(&t, &t, zz, 0, temperature).unwrap().0;
                let numeric = (f(&up) - f(&dn)) / (2.0 * h);
                assert_abs_diff_eq!(g[j], numeric, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn config_presets() {
        let s = UnlearnConfig::sample_unlearning();
        assert_eq!(
            (s.retain_fraction, s.epochs, s.temperature, s.learning_rate),
            (0.3, 1, 1.0, 1e-4)
        );
        assert_eq!(UnlearnConfig::class_unlearning().learning_rate, 1e-3);
        let mut bad = s.clone();
        bad.retain_fraction = 1.5;
        assert!(bad.validate().is_err());
        assert_eq!(request_config(&s, 0), s);
        assert_ne!(request_config(&s, 1).seed, s.seed);
    }
}
