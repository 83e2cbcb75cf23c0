//! Competent and incompetent teachers.
//!
//! The competent teacher is the frozen original model. The incompetent
//! teacher comes in four flavours: a randomly initialised copy of the
//! student's architecture, a randomly initialised reduced architecture, a
//! Gaussian-perturbed uniform predictor, and a model briefly trained on part
//! of the retain set.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{build_unlearning_set, DatasetView, LabeledDataset, Partition};
use crate::divergence::{ProbVector, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::models::{train_on_view, ArchitectureId, ClassifierHandle, Predictor, TrainConfig};
use crate::seeds;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherVariant {
    RandomInitSameArch,
    RandomInitSmaller,
    RandomGenerator,
    PartiallyTrained,
}

impl TeacherVariant {
    pub const ALL: [TeacherVariant; 4] = [
        TeacherVariant::RandomInitSameArch,
        TeacherVariant::RandomInitSmaller,
        TeacherVariant::RandomGenerator,
        TeacherVariant::PartiallyTrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TeacherVariant::RandomInitSameArch => "random_init_same_arch",
            TeacherVariant::RandomInitSmaller => "random_init_smaller",
            TeacherVariant::RandomGenerator => "random_generator",
            TeacherVariant::PartiallyTrained => "partially_trained",
        }
    }
}

impl fmt::Display for TeacherVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How to build the incompetent teacher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub variant: TeacherVariant,
    /// Base architecture; defaults to the student's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch_override: Option<ArchitectureId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pt_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pt_retain_fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl TeacherSpec {
    fn base(variant: TeacherVariant, seed: u64) -> Self {
        Self {
            variant,
            arch_override: None,
            noise_sigma: None,
            pt_epochs: None,
            pt_retain_fraction: None,
            seed,
        }
    }

    pub fn random_init(seed: u64) -> Self {
        Self::base(TeacherVariant::RandomInitSameArch, seed)
    }

    pub fn smaller(seed: u64) -> Self {
        Self::base(TeacherVariant::RandomInitSmaller, seed)
    }

    pub fn generator(noise_sigma: f64, seed: u64) -> Self {
        Self {
            noise_sigma: Some(noise_sigma),
            ..Self::base(TeacherVariant::RandomGenerator, seed)
        }
    }

    pub fn partially_trained(epochs: usize, retain_fraction: f64, seed: u64) -> Self {
        Self {
            pt_epochs: Some(epochs),
            pt_retain_fraction: Some(retain_fraction),
            ..Self::base(TeacherVariant::PartiallyTrained, seed)
        }
    }

    /// Defaults of `variant` (σ = 0.05; one epoch on half the retain set).
    pub fn for_variant(variant: TeacherVariant, seed: u64) -> Self {
        match variant {
            TeacherVariant::RandomInitSameArch => Self::random_init(seed),
            TeacherVariant::RandomInitSmaller => Self::smaller(seed),
            TeacherVariant::RandomGenerator => Self::generator(DEFAULT_NOISE_SIGMA, seed),
            TeacherVariant::PartiallyTrained => Self::partially_trained(1, 0.5, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let is_pt = self.variant == TeacherVariant::PartiallyTrained;
        let is_gen = self.variant == TeacherVariant::RandomGenerator;
        let has_pt = self.pt_epochs.is_some() || self.pt_retain_fraction.is_some();
        if is_pt != has_pt || (is_pt && (self.pt_epochs.is_none() || self.pt_retain_fraction.is_none())) {
            return Err(Error::Spec(
                "pt_epochs and pt_retain_fraction are required for, and only for, partially_trained".into(),
            ));
        }
        if is_gen != self.noise_sigma.is_some() {
            return Err(Error::Spec(
                "noise_sigma is required for, and only for, random_generator".into(),
            ));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Spec(format!("noise_sigma {s} must be ≥ 0")));
            }
        }
        if let Some(e) = self.pt_epochs {
            if e == 0 {
                return Err(Error::Spec("pt_epochs must be at least 1".into()));
            }
        }
        if let Some(f) = self.pt_retain_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Spec(format!("pt_retain_fraction {f} outside (0, 1]")));
            }
        }
        if is_gen && self.arch_override.is_some() {
            return Err(Error::Spec("random_generator has no architecture".into()));
        }
        Ok(())
    }
}

/// Uniform probabilities plus per-entry Gaussian noise, floored at ε and
/// renormalised. Sample `i` always receives the same vector for a given seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPredictionGenerator {
    class_count: usize,
    noise_sigma: f64,
    seed: u64,
}

impl RandomPredictionGenerator {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Prediction for the sample with dataset index `index`.
    pub fn query(&self, index: usize) -> ProbVector {
        let c = self.class_count;
        let base = 1.0 / c as f64;
        if self.noise_sigma == 0.0 {
            return ProbVector::uniform(c);
        }
        let mut rng = seeds::rng(seeds::mix(self.seed, index as u64));
        let mut v: Vec<f64> = (0..c)
            .map(|_| {
                let noise: f64 = rng.sample(StandardNormal);
                (base + self.noise_sigma * noise).max(DEFAULT_EPSILON)
            })
            .collect();
        let sum: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= sum);
        ProbVector::from_raw(v)
    }
}

pub fn random_prediction_generator(
    class_count: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<RandomPredictionGenerator> {
    if class_count < 2 {
        return Err(Error::Spec(format!("generator needs ≥ 2 classes, got {class_count}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Spec(format!("noise_sigma {noise_sigma} must be ≥ 0")));
    }
    Ok(RandomPredictionGenerator {
        class_count,
        noise_sigma,
        seed,
    })
}

/// Role of a teacher inside an unlearning run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherTag {
    Competent,
    Incompetent(TeacherVariant),
}

impl fmt::Display for TeacherTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TeacherTag::Competent => f.write_str("competent"),
            TeacherTag::Incompetent(v) => v.fmt(f),
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    Model(Arc<ClassifierHandle>),
    Generator(RandomPredictionGenerator),
}

/// A frozen teacher. There is no way to mutate the wrapped model.
#[derive(Clone, Debug)]
pub struct TeacherHandle {
    source: Source,
    tag: TeacherTag,
}

impl TeacherHandle {
    pub fn tag(&self) -> TeacherTag {
        self.tag
    }

    pub fn model(&self) -> Option<&ClassifierHandle> {
        match &self.source {
            Source::Model(m) => Some(m),
            Source::Generator(_) => None,
        }
    }

    /// Parameter hash (model teachers) or configuration hash (generators).
    pub fn fingerprint(&self) -> String {
        match &self.source {
            Source::Model(m) => m.fingerprint(),
            Source::Generator(g) => {
                let mut h = Sha256::new();
                h.update(serde_json::to_vec(g).expect("generator serialises"));
                hex::encode(h.finalize())
            }
        }
    }
}

impl Predictor for TeacherHandle {
    fn class_count(&self) -> usize {
        match &self.source {
            Source::Model(m) => m.class_count(),
            Source::Generator(g) => g.class_count,
        }
    }

    fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
        match &self.source {
            Source::Model(m) => m.predict_view(view),
            Source::Generator(g) => Ok(view.indices().par_iter().map(|&i| g.query(i)).collect()),
        }
    }
}

/// Wraps a trained model as the competent teacher.
pub fn make_competent(original: &ClassifierHandle) -> TeacherHandle {
    TeacherHandle {
        source: Source::Model(Arc::new(original.clone())),
        tag: TeacherTag::Competent,
    }
}

/// Builds a data-free incompetent teacher (random-init or generator).
///
/// Partially trained teachers need training data; use
/// [`make_partially_trained`] or [`build_incompetent`].
pub fn make_incompetent(
    spec: &TeacherSpec,
    student_arch: ArchitectureId,
    input_shape: &[usize],
    class_count: usize,
) -> Result<TeacherHandle> {
    spec.validate()?;
    let base = spec.arch_override.unwrap_or(student_arch);
    let tag = TeacherTag::Incompetent(spec.variant);
    let source = match spec.variant {
        TeacherVariant::RandomInitSameArch => {
            let arch = base.build(input_shape, class_count)?;
            Source::Model(Arc::new(ClassifierHandle::new(arch, spec.seed)))
        }
        TeacherVariant::RandomInitSmaller => {
            let arch = base.build(input_shape, class_count)?.smaller();
            Source::Model(Arc::new(ClassifierHandle::new(arch, spec.seed)))
        }
        TeacherVariant::RandomGenerator => Source::Generator(random_prediction_generator(
            class_count,
            spec.noise_sigma.unwrap_or(DEFAULT_NOISE_SIGMA),
            spec.seed,
        )?),
        TeacherVariant::PartiallyTrained => {
            return Err(Error::Spec(
                "partially_trained teachers need a partition; use make_partially_trained".into(),
            ))
        }
    };
    Ok(TeacherHandle { source, tag })
}

/// A fresh network trained for `pt_epochs` on a stratified `pt_retain_fraction`
/// sample of the retain set. Forget samples are never read.
pub fn make_partially_trained(
    partition: &Partition,
    dataset: &LabeledDataset,
    arch: ArchitectureId,
    pt_epochs: usize,
    pt_retain_fraction: f64,
    seed: u64,
    base_config: &TrainConfig,
) -> Result<TeacherHandle> {
    if pt_epochs == 0 {
        return Err(Error::Spec("pt_epochs must be at least 1".into()));
    }
    if !(pt_retain_fraction > 0.0 && pt_retain_fraction <= 1.0) {
        return Err(Error::Spec(format!(
            "pt_retain_fraction {pt_retain_fraction} outside (0, 1]"
        )));
    }
    let sample = build_unlearning_set(
        partition,
        dataset,
        pt_retain_fraction,
        seeds::derive_seed(seed, "teacher/pt-sample"),
    )?;
    let view = DatasetView::new(dataset, sample.retain_indices().collect())?;
    if view.is_empty() {
        return Err(Error::Spec("partially trained teacher would see no samples".into()));
    }
    let architecture = arch.build(dataset.feature_shape(), dataset.class_count())?;
    let mut model = ClassifierHandle::new(architecture, seeds::derive_seed(seed, "teacher/pt-init"));
    let config = TrainConfig {
        epochs: pt_epochs,
        seed: seeds::derive_seed(seed, "teacher/pt-train"),
        ..base_config.clone()
    };
    train_on_view(&mut model, &view, &config)?;
    Ok(TeacherHandle {
        source: Source::Model(Arc::new(model)),
        tag: TeacherTag::Incompetent(TeacherVariant::PartiallyTrained),
    })
}

/// Builds any incompetent teacher variant for a student of `student_arch`
/// trained on `dataset`.
pub fn build_incompetent(
    spec: &TeacherSpec,
    student_arch: ArchitectureId,
    dataset: &LabeledDataset,
    partition: &Partition,
    base_config: &TrainConfig,
) -> Result<TeacherHandle> {
    spec.validate()?;
    match spec.variant {
        TeacherVariant::PartiallyTrained => make_partially_trained(
            partition,
            dataset,
            spec.arch_override.unwrap_or(student_arch),
            spec.pt_epochs.unwrap_or(1),
            spec.pt_retain_fraction.unwrap_or(0.5),
            spec.seed,
            base_config,
        ),
        _ => make_incompetent(spec, student_arch, dataset.feature_shape(), dataset.class_count()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{make_synthetic_dataset, partition, ForgetSpec};

    #[test]
    fn spec_field_requirements() {
        for v in TeacherVariant::ALL {
            TeacherSpec::for_variant(v, 0).validate().unwrap();
        }
        let mut s = TeacherSpec::random_init(0);
        s.noise_sigma = Some(0.1);
        assert!(s.validate().is_err());
        let mut s = TeacherSpec::generator(0.1, 0);
        s.noise_sigma = None;
        assert!(s.validate().is_err());
        let mut s = TeacherSpec::partially_trained(1, 0.5, 0);
        s.pt_retain_fraction = None;
        assert!(s.validate().is_err());
        assert!(TeacherSpec::partially_trained(0, 0.5, 0).validate().is_err());
        assert!(TeacherSpec::partially_trained(1, 1.5, 0).validate().is_err());
        assert!(TeacherSpec::generator(-0.1, 0).validate().is_err());
    }

    #[test]
    fn generator_zero_noise_is_uniform() {
        let g = random_prediction_generator(4, 0.0, 1).unwrap();
        for i in 0..10 {
            assert_eq!(g.query(i), ProbVector::uniform(4));
        }
        assert!(random_prediction_generator(1, 0.1, 0).is_err());
        assert!(random_prediction_generator(3, -1.0, 0).is_err());
    }

    #[test]
    fn generator_is_per_index_reproducible() {
        let g = random_prediction_generator(5, 0.3, 9).unwrap();
        assert_eq!(g.query(17), g.query(17));
        assert_ne!(g.query(17), g.query(18));
        for i in 0..1000 {
            ProbVector::new(g.query(i).into_inner()).unwrap();
        }
    }

    #[test]
    fn competent_wrapper_matches_model() {
        let ds = make_synthetic_dataset(3, 1, 10, 4, 1.0, 0).unwrap();
        let arch = ArchitectureId::Mlp3.build(ds.feature_shape(), 3).unwrap();
        let m = ClassifierHandle::new(arch, 5);
        let t = make_competent(&m);
        let view = DatasetView::all(&ds);
        assert_eq!(t.predict_view(&view).unwrap(), m.predict_view(&view).unwrap());
        assert_eq!(t.fingerprint(), m.fingerprint());
        assert_eq!(t.tag(), TeacherTag::Competent);
    }

    #[test]
    fn random_teachers_are_seeded() {
        let ds = make_synthetic_dataset(3, 1, 10, 4, 1.0, 0).unwrap();
        let view = DatasetView::all(&ds);
        for spec in [
            TeacherSpec::random_init(3),
            TeacherSpec::smaller(3),
            TeacherSpec::generator(0.05, 3),
        ] {
            let a = make_incompetent(&spec, ArchitectureId::Mlp3, ds.feature_shape(), 3).unwrap();
            let b = make_incompetent(&spec, ArchitectureId::Mlp3, ds.feature_shape(), 3).unwrap();
            assert_eq!(a.predict_view(&view).unwrap(), b.predict_view(&view).unwrap());
            assert_eq!(a.tag(), TeacherTag::Incompetent(spec.variant));
        }
        let small = make_incompetent(&TeacherSpec::smaller(0), ArchitectureId::Mlp3, &[4], 3).unwrap();
        let same = make_incompetent(&TeacherSpec::random_init(0), ArchitectureId::Mlp3, &[4], 3).unwrap();
        assert!(small.model().unwrap().params().len() < same.model().unwrap().params().len());
        assert!(matches!(
            make_incompetent(
                &TeacherSpec::partially_trained(1, 0.5, 0),
                ArchitectureId::Mlp3,
                &[4],
                3
            ),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn partially_trained_never_reads_forget_samples() {
        let ds = make_synthetic_dataset(3, 1, 40, 4, 3.0, 0).unwrap();
        let p = partition(&ds, &ForgetSpec::FullClass { classes: vec![2] }, 0).unwrap();
        let mut feats = ds.features().to_vec();
        for &i in p.forget_set() {
            feats[i * 4..(i + 1) * 4].fill(f64::NAN);
        }
        let poisoned = LabeledDataset::new(feats, vec![4], ds.labels().to_vec(), 3, None, ds.split()).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        let t = make_partially_trained(&p, &poisoned, ArchitectureId::Mlp3, 2, 0.5, 1, &cfg).unwrap();
        assert_eq!(t.tag(), TeacherTag::Incompetent(TeacherVariant::PartiallyTrained));
        assert!(t.model().unwrap().params().iter().all(|v| v.is_finite()));
    }
}
