use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, SplitTag};
use crate::error::{Error, Result};
use crate::seeds;

/// Gaussian-cluster classification data: one cluster per subclass.
///
/// Class means are drawn per coordinate from `N(0, separation²)`. Each
/// subclass centre is its class mean plus `N(0, (separation·subclass_spread)²)`
/// per coordinate, and samples add unit-variance noise around their centre.
/// Subclass ids are `class * subclasses_per_class + s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub subclasses_per_class: usize,
    pub samples_per_subclass: usize,
    pub feature_dim: usize,
    pub cluster_separation: f64,
    #[serde(default = "default_spread")]
    pub subclass_spread: f64,
    /// Held-out samples per subclass drawn from the same clusters.
    #[serde(default)]
    pub test_samples_per_subclass: usize,
}

fn default_spread() -> f64 {
    0.5
}

impl SyntheticSpec {
    pub fn new(
        class_count: usize,
        subclasses_per_class: usize,
        samples_per_subclass: usize,
        feature_dim: usize,
        cluster_separation: f64,
    ) -> Self {
        Self {
            class_count,
            subclasses_per_class,
            samples_per_subclass,
            feature_dim,
            cluster_separation,
            subclass_spread: default_spread(),
            test_samples_per_subclass: 0,
        }
    }

    pub fn with_test(mut self, per_subclass: usize) -> Self {
        self.test_samples_per_subclass = per_subclass;
        self
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.subclass_spread = spread;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.class_count == 0
            || self.subclasses_per_class == 0
            || self.samples_per_subclass == 0
            || self.feature_dim == 0
        {
            return Err(Error::Argument("synthetic dataset counts must be positive".into()));
        }
        if !(self.cluster_separation >= 0.0 && self.subclass_spread >= 0.0) {
            return Err(Error::Argument("separation and spread must be non-negative".into()));
        }
        Ok(())
    }

    fn centres(&self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeds::rng(seeds::derive_seed(seed, "synthetic/centres"));
        let d = self.feature_dim;
        let sep = self.cluster_separation;
        let mut centres = Vec::with_capacity(self.class_count * self.subclasses_per_class);
        for _ in 0..self.class_count {
            let mean: Vec<f64> = (0..d).map(|_| sep * rng.sample::<f64, _>(StandardNormal)).collect();
            for _ in 0..self.subclasses_per_class {
                centres.push(
                    mean.iter()
                        .map(|m| m + sep * self.subclass_spread * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                );
            }
        }
        centres
    }

    fn draw(&self, centres: &[Vec<f64>], per_subclass: usize, seed: u64, split: SplitTag) -> Result<LabeledDataset> {
        let mut rng = seeds::rng(seed);
        let n = centres.len() * per_subclass;
        let mut features = Vec::with_capacity(n * self.feature_dim);
        let mut labels = Vec::with_capacity(n);
        let mut subclass = Vec::with_capacity(n);
        for (fine, centre) in centres.iter().enumerate() {
            for _ in 0..per_subclass {
                features.extend(centre.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)));
                labels.push(fine / self.subclasses_per_class);
                subclass.push(fine);
            }
        }
        LabeledDataset::new(
            features,
            vec![self.feature_dim],
            labels,
            self.class_count,
            Some(subclass),
            split,
        )
    }

    /// Training set only.
    pub fn generate(&self, seed: u64) -> Result<LabeledDataset> {
        self.validate()?;
        let centres = self.centres(seed);
        self.draw(
            &centres,
            self.samples_per_subclass,
            seeds::derive_seed(seed, "synthetic/train"),
            SplitTag::Train,
        )
    }

    /// Training set and a held-out test set sharing the same clusters.
    pub fn generate_split(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        self.validate()?;
        if self.test_samples_per_subclass == 0 {
            return Err(Error::Argument("test_samples_per_subclass must be positive".into()));
        }
        let centres = self.centres(seed);
        let train = self.draw(
            &centres,
            self.samples_per_subclass,
            seeds::derive_seed(seed, "synthetic/train"),
            SplitTag::Train,
        )?;
        let test = self.draw(
            &centres,
            self.test_samples_per_subclass,
            seeds::derive_seed(seed, "synthetic/test"),
            SplitTag::Test,
        )?;
        Ok((train, test))
    }
}

pub fn make_synthetic_dataset(
    class_count: usize,
    subclasses_per_class: usize,
    samples_per_subclass: usize,
    feature_dim: usize,
    cluster_separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    SyntheticSpec::new(
        class_count,
        subclasses_per_class,
        samples_per_subclass,
        feature_dim,
        cluster_separation,
    )
    .generate(seed)
}
