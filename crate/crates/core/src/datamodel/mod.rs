//! Labeled datasets, forget specifications and the forget/retain split.

mod io;
mod mapping;
mod synthetic;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seeds;

pub use io::{load_dataset_dir, save_dataset_binary, save_dataset_csv, BinaryManifest};
pub use mapping::SuperclassMapping;
pub use synthetic::{make_synthetic_dataset, SyntheticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// A set of labeled samples stored as one contiguous feature buffer.
///
/// Every sample has the same `feature_shape`; the flat buffer holds
/// `len() * feature_shape.iter().product()` values in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Vec<f64>,
    feature_shape: Vec<usize>,
    labels: Vec<usize>,
    class_count: usize,
    subclass_labels: Option<Vec<usize>>,
    split: SplitTag,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        feature_shape: Vec<usize>,
        labels: Vec<usize>,
        class_count: usize,
        subclass_labels: Option<Vec<usize>>,
        split: SplitTag,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Argument("dataset must contain at least one sample".into()));
        }
        if class_count == 0 {
            return Err(Error::Argument("class_count must be positive".into()));
        }
        let dim: usize = feature_shape.iter().product();
        if dim == 0 {
            return Err(Error::Shape(format!("empty feature shape {feature_shape:?}")));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of shape {feature_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Argument(format!("label {bad} outside [0, {class_count})")));
        }
        if let Some(sub) = &subclass_labels {
            if sub.len() != labels.len() {
                return Err(Error::Shape(format!(
                    "{} subclass labels for {} samples",
                    sub.len(),
                    labels.len()
                )));
            }
        }
        Ok(Self {
            features,
            feature_shape,
            labels,
            class_count,
            subclass_labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.features[index * d..(index + 1) * d]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn subclass_labels(&self) -> Option<&[usize]> {
        self.subclass_labels.as_deref()
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    /// Same samples, different per-sample shape (e.g. `[d]` to `[1, h, w]`).
    pub fn reshaped(mut self, feature_shape: Vec<usize>) -> Result<Self> {
        let dim: usize = feature_shape.iter().product();
        if dim != self.feature_dim() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {feature_shape:?}",
                self.feature_shape
            )));
        }
        self.feature_shape = feature_shape;
        Ok(self)
    }

    /// Copies the given samples into a new dataset, preserving their order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.feature_dim();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Argument(format!("index {i} out of range")));
            }
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let subclass_labels = self
            .subclass_labels
            .as_ref()
            .map(|s| indices.iter().map(|&i| s[i]).collect());
        Self::new(
            features,
            self.feature_shape.clone(),
            labels,
            self.class_count,
            subclass_labels,
            self.split,
        )
    }

    /// Content hash used in checkpoint provenance.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.feature_shape {
            h.update((*s as u64).to_le_bytes());
        }
        for v in &self.features {
            h.update(v.to_bits().to_le_bytes());
        }
        for y in &self.labels {
            h.update((*y as u64).to_le_bytes());
        }
        h.update((self.class_count as u64).to_le_bytes());
        hex::encode(&h.finalize()[..16])
    }

    /// Number of samples per class label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// A borrowed, ordered selection of samples from a dataset.
#[derive(Clone, Debug)]
pub struct DatasetView<'a> {
    dataset: &'a LabeledDataset,
    indices: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn new(dataset: &'a LabeledDataset, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::Argument(format!(
                "view index {bad} outside dataset of {} samples",
                dataset.len()
            )));
        }
        Ok(Self { dataset, indices })
    }

    pub fn all(dataset: &'a LabeledDataset) -> Self {
        Self {
            dataset,
            indices: (0..dataset.len()).collect(),
        }
    }

    pub fn dataset(&self) -> &'a LabeledDataset {
        self.dataset
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.indices.iter().map(move |&i| self.dataset.sample(i))
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(move |&i| self.dataset.label(i))
    }
}

/// What to forget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ForgetSpec {
    /// Every sample of the listed classes.
    FullClass { classes: Vec<usize> },
    /// Every sample of one fine class, leaving its superclass siblings retained.
    SubclassWithinSuperclass { superclass: usize, subclass: usize },
    /// `count` samples drawn uniformly; `seed` overrides the partition seed.
    RandomSubset {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl ForgetSpec {
    fn select(&self, dataset: &LabeledDataset, candidates: &[usize], seed: u64) -> Result<Vec<usize>> {
        match self {
            ForgetSpec::FullClass { classes } => {
                if classes.is_empty() {
                    return Err(Error::Spec("full_class needs at least one class".into()));
                }
                for &c in classes {
                    if c >= dataset.class_count() {
                        return Err(Error::Spec(format!(
                            "unknown class {c} (dataset has {})",
                            dataset.class_count()
                        )));
                    }
                }
                Ok(candidates
                    .iter()
                    .copied()
                    .filter(|&i| classes.contains(&dataset.label(i)))
                    .collect())
            }
            ForgetSpec::SubclassWithinSuperclass { superclass, subclass } => {
                let sub = dataset
                    .subclass_labels()
                    .ok_or_else(|| Error::Spec("subclass forgetting needs subclass labels".into()))?;
                let selected: Vec<usize> = candidates
                    .iter()
                    .copied()
                    .filter(|&i| dataset.label(i) == *superclass && sub[i] == *subclass)
                    .collect();
                let exists = (0..dataset.len()).any(|i| dataset.label(i) == *superclass && sub[i] == *subclass);
                if !exists {
                    return Err(Error::Spec(format!(
                        "no subclass {subclass} inside superclass {superclass}"
                    )));
                }
                Ok(selected)
            }
            ForgetSpec::RandomSubset { count, seed: own } => {
                let n = candidates.len();
                if *count == 0 || *count >= n {
                    return Err(Error::Spec(format!("random_subset count {count} must lie in [1, {n})")));
                }
                let mut rng = seeds::rng(own.unwrap_or(seed));
                let mut pool = candidates.to_vec();
                pool.shuffle(&mut rng);
                pool.truncate(*count);
                pool.sort_unstable();
                Ok(pool)
            }
        }
    }
}

/// The forget/retain split of a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    forget_set: Vec<usize>,
    retain_set: Vec<usize>,
    spec: ForgetSpec,
    /// Earlier requests whose samples are already part of `forget_set`.
    #[serde(default)]
    previous: Vec<ForgetSpec>,
}

impl Partition {
    pub fn forget_set(&self) -> &[usize] {
        &self.forget_set
    }

    pub fn retain_set(&self) -> &[usize] {
        &self.retain_set
    }

    pub fn spec(&self) -> &ForgetSpec {
        &self.spec
    }

    pub fn previous(&self) -> &[ForgetSpec] {
        &self.previous
    }

    pub fn total(&self) -> usize {
        self.forget_set.len() + self.retain_set.len()
    }

    /// Splits off the samples selected by `spec` from the current retain set.
    ///
    /// The returned partition forgets everything this one forgot plus the new
    /// targets; the newly selected indices are returned alongside. Targets
    /// that overlap the already-forgotten samples are rejected.
    pub fn extend(&self, dataset: &LabeledDataset, spec: &ForgetSpec, seed: u64) -> Result<(Partition, Vec<usize>)> {
        let forgotten: BTreeSet<usize> = self.forget_set.iter().copied().collect();
        if !matches!(spec, ForgetSpec::RandomSubset { .. }) {
            let everything: Vec<usize> = (0..dataset.len()).collect();
            let wanted = spec.select(dataset, &everything, seed)?;
            if wanted.iter().any(|i| forgotten.contains(i)) {
                return Err(Error::Spec(format!(
                    "forget request {spec:?} overlaps previously forgotten samples"
                )));
            }
        }
        let fresh = spec.select(dataset, &self.retain_set, seed)?;
        if fresh.is_empty() {
            return Err(Error::Spec(format!("forget request {spec:?} selects no samples")));
        }
        let fresh_set: BTreeSet<usize> = fresh.iter().copied().collect();
        let mut forget_set: Vec<usize> = forgotten.union(&fresh_set).copied().collect();
        forget_set.sort_unstable();
        let retain_set = self
            .retain_set
            .iter()
            .copied()
            .filter(|i| !fresh_set.contains(i))
            .collect();
        let mut previous = self.previous.clone();
        previous.push(self.spec.clone());
        Ok((
            Partition {
                forget_set,
                retain_set,
                spec: spec.clone(),
                previous,
            },
            fresh,
        ))
    }
}

/// Splits `dataset` into forget and retain index sets.
pub fn partition(dataset: &LabeledDataset, spec: &ForgetSpec, seed: u64) -> Result<Partition> {
    let everything: Vec<usize> = (0..dataset.len()).collect();
    let forget_set = spec.select(dataset, &everything, seed)?;
    let forgotten: BTreeSet<usize> = forget_set.iter().copied().collect();
    let retain_set = everything.into_iter().filter(|i| !forgotten.contains(i)).collect();
    Ok(Partition {
        forget_set,
        retain_set,
        spec: spec.clone(),
        previous: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetainSampling {
    /// Proportional allocation per class, remainder by largest fraction.
    #[default]
    Stratified,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearningEntry {
    pub index: usize,
    /// The unlearning label: true for forget samples.
    pub forget: bool,
}

impl UnlearningEntry {
    pub fn l_u(&self) -> u8 {
        self.forget as u8
    }
}

/// All forget samples plus a sampled fraction of the retain samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearningSet {
    entries: Vec<UnlearningEntry>,
    partition: Partition,
    retain_fraction: f64,
    sampling: RetainSampling,
}

impl UnlearningSet {
    pub fn entries(&self) -> &[UnlearningEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn retain_fraction(&self) -> f64 {
        self.retain_fraction
    }

    pub fn retain_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().filter(|e| !e.forget).map(|e| e.index)
    }

    /// Redraws the retain sample with a new seed, keeping every other setting.
    pub fn resampled(&self, dataset: &LabeledDataset, seed: u64) -> Result<Self> {
        build_unlearning_set_with(&self.partition, dataset, self.retain_fraction, seed, self.sampling)
    }
}

/// Builds the unlearning set with class-stratified retain sampling.
pub fn build_unlearning_set(
    partition: &Partition,
    dataset: &LabeledDataset,
    retain_fraction: f64,
    seed: u64,
) -> Result<UnlearningSet> {
    build_unlearning_set_with(partition, dataset, retain_fraction, seed, RetainSampling::Stratified)
}

pub fn build_unlearning_set_with(
    partition: &Partition,
    dataset: &LabeledDataset,
    retain_fraction: f64,
    seed: u64,
    sampling: RetainSampling,
) -> Result<UnlearningSet> {
    if !(0.0..=1.0).contains(&retain_fraction) {
        return Err(Error::Argument(format!(
            "retain_fraction {retain_fraction} outside [0, 1]"
        )));
    }
    if partition.total() != dataset.len() {
        return Err(Error::Argument(format!(
            "partition covers {} samples but dataset has {}",
            partition.total(),
            dataset.len()
        )));
    }
    let retain = partition.retain_set();
    let target = (retain_fraction * retain.len() as f64).round() as usize;
    let mut rng = seeds::rng(seed);

    let mut chosen: Vec<usize> = match sampling {
        RetainSampling::Uniform => {
            let mut pool = retain.to_vec();
            pool.shuffle(&mut rng);
            pool.truncate(target);
            pool
        }
        RetainSampling::Stratified => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
            for &i in retain {
                by_class[dataset.label(i)].push(i);
            }
            let quotas = stratified_quotas(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), target);
            let mut out = Vec::with_capacity(target);
            for (mut pool, quota) in by_class.into_iter().zip(quotas) {
                pool.shuffle(&mut rng);
                out.extend_from_slice(&pool[..quota]);
            }
            out
        }
    };
    chosen.sort_unstable();

    let entries = partition
        .forget_set()
        .iter()
        .map(|&index| UnlearningEntry { index, forget: true })
        .chain(chosen.into_iter().map(|index| UnlearningEntry { index, forget: false }))
        .collect();
    Ok(UnlearningSet {
        entries,
        partition: partition.clone(),
        retain_fraction,
        sampling,
    })
}

/// Largest-remainder proportional allocation of `total` over `sizes`.
fn stratified_quotas(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 || total == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if quotas[c] < sizes[c] {
            quotas[c] += 1;
            remaining -= 1;
        }
    }
    quotas
}

/// Relabels a fine-grained dataset with its superclasses.
///
/// The original labels are kept as `subclass_labels`.
pub fn merge_to_superclasses(dataset: &LabeledDataset, mapping: &SuperclassMapping) -> Result<LabeledDataset> {
    if dataset.class_count() != mapping.fine_count() {
        return Err(Error::Mapping(format!(
            "dataset has {} classes, mapping covers {}",
            dataset.class_count(),
            mapping.fine_count()
        )));
    }
    let labels = dataset
        .labels()
        .iter()
        .map(|&y| mapping.coarse_of(y))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(
        dataset.features().to_vec(),
        dataset.feature_shape().to_vec(),
        labels,
        mapping.coarse_count(),
        Some(dataset.labels().to_vec()),
        dataset.split(),
    )
}
