use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    load_dataset_dir, merge_to_superclasses, ForgetSpec, LabeledDataset, SplitTag, SuperclassMapping, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::models::{ArchitectureId, TrainConfig};
use crate::seeds::derive_seed;
use crate::teachers::{TeacherSpec, TeacherVariant};
use crate::unlearn::UnlearnConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "UNLEARN_OUT";

/// Where the train and test data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Gaussian clusters; `test_samples_per_subclass` must be positive.
    Synthetic(SyntheticSpec),
    /// Two dataset directories (see the data format notes in the README).
    Directory {
        train: PathBuf,
        test: PathBuf,
        /// Optional `fine,coarse` table, or the literal `cifar100`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        superclass_mapping: Option<String>,
    },
}

impl DatasetSource {
    /// Loads or generates `(train, test)`.
    pub fn load(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            DatasetSource::Synthetic(spec) => spec.generate_split(seed),
            DatasetSource::Directory {
                train,
                test,
                superclass_mapping,
            } => {
                let tr = load_dataset_dir(train, SplitTag::Train)?;
                let te = load_dataset_dir(test, SplitTag::Test)?;
                match superclass_mapping.as_deref() {
                    None => Ok((tr, te)),
                    Some(name) => {
                        let mapping = if name == "cifar100" {
                            SuperclassMapping::cifar100()
                        } else {
                            SuperclassMapping::load(Path::new(name))?
                        };
                        Ok((
                            merge_to_superclasses(&tr, &mapping)?,
                            merge_to_superclasses(&te, &mapping)?,
                        ))
                    }
                }
            }
        }
    }
}

/// Optional parts of the evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricToggles {
    pub gold: bool,
    pub amnesiac: bool,
    pub mia: bool,
    /// Also score ZRF against a random-init same-arch reference when the
    /// run's teacher is of another kind.
    pub random_reference: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            gold: true,
            amnesiac: true,
            mia: true,
            random_reference: true,
        }
    }
}

/// Sub-seeds derived from the master seed. Stable across runs and releases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub data: u64,
    pub partition: u64,
    pub train: u64,
    pub gold: u64,
    pub teacher: u64,
    pub unlearn: u64,
    pub attack: u64,
}

impl SeedPlan {
    pub fn from_master(master: u64) -> Self {
        Self {
            data: derive_seed(master, "data"),
            partition: derive_seed(master, "partition"),
            train: derive_seed(master, "train"),
            gold: derive_seed(master, "gold"),
            teacher: derive_seed(master, "teacher"),
            unlearn: derive_seed(master, "unlearn"),
            attack: derive_seed(master, "attack"),
        }
    }
}

fn default_teacher() -> TeacherSpec {
    TeacherSpec::random_init(0)
}

/// One experiment, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    pub architecture: ArchitectureId,
    pub dataset: DatasetSource,
    pub forget: ForgetSpec,
    #[serde(default = "default_teacher")]
    pub teacher: TeacherSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub unlearn: UnlearnConfig,
    #[serde(default)]
    pub metrics: MetricToggles,
    /// Further forget requests answered one after another after `forget`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sequential: Vec<ForgetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Spec(format!(
                "experiment name {:?} must be a plain file name",
                self.name
            )));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            if spec.test_samples_per_subclass == 0 {
                return Err(Error::Spec("synthetic data needs test_samples_per_subclass > 0".into()));
            }
        }
        self.teacher.validate()?;
        self.train.validate()?;
        self.unlearn.validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::from_master(self.master_seed)
    }

    /// Train config with its seed taken from the plan.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    pub fn gold_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().gold,
            ..self.train.clone()
        }
    }

    pub fn unlearn_config(&self) -> UnlearnConfig {
        UnlearnConfig {
            seed: self.seeds().unlearn,
            ..self.unlearn.clone()
        }
    }

    pub fn teacher_spec(&self) -> TeacherSpec {
        TeacherSpec {
            seed: self.seeds().teacher,
            ..self.teacher.clone()
        }
    }

    /// `dir`, else `output_dir`, else `$UNLEARN_OUT`, else `runs`; the
    /// experiment name is appended.
    pub fn resolve_output(&self, dir: Option<&Path>) -> PathBuf {
        let root = dir
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }
}

/// Values swept over; an empty axis keeps the base config's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub epochs: Vec<usize>,
    pub retain_fraction: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub teacher: Vec<TeacherVariant>,
}

fn default_cap() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub grid: SweepGrid,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

/// Coordinates of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub epochs: usize,
    pub retain_fraction: f64,
    pub learning_rate: f64,
    pub teacher: TeacherVariant,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.base.validate()?;
        spec.points()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Cartesian product in axis order epochs, retain_fraction,
    /// learning_rate, teacher.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let g = &self.grid;
        let axis = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let epochs = if g.epochs.is_empty() {
            vec![self.base.unlearn.epochs]
        } else {
            g.epochs.clone()
        };
        let fractions = axis(&g.retain_fraction, self.base.unlearn.retain_fraction);
        let rates = axis(&g.learning_rate, self.base.unlearn.learning_rate);
        let teachers = if g.teacher.is_empty() {
            vec![self.base.teacher.variant]
        } else {
            g.teacher.clone()
        };
        let total = epochs.len() * fractions.len() * rates.len() * teachers.len();
        if total > self.cap {
            return Err(Error::Spec(format!("sweep has {total} points, cap is {}", self.cap)));
        }
        let mut points = Vec::with_capacity(total);
        for &e in &epochs {
            for &f in &fractions {
                for &lr in &rates {
                    for &t in &teachers {
                        points.push(GridPoint {
                            epochs: e,
                            retain_fraction: f,
                            learning_rate: lr,
                            teacher: t,
                        });
                    }
                }
            }
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
architecture = "mlp3"

[dataset]
source = "synthetic"
class_count = 3
subclasses_per_class = 1
samples_per_subclass = 20
feature_dim = 4
cluster_separation = 3.0
test_samples_per_subclass = 5

[forget]
mode = "full_class"
classes = [0]
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.unlearn, UnlearnConfig::default());
        assert_eq!(c.teacher.variant, TeacherVariant::RandomInitSameArch);
        assert!(c.metrics.gold && c.metrics.amnesiac);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seed_plan_is_pure_and_distinct() {
        let a = SeedPlan::from_master(5);
        assert_eq!(a, SeedPlan::from_master(5));
        let all = [a.data, a.partition, a.train, a.gold, a.teacher, a.unlearn, a.attack];
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
        assert_ne!(a, SeedPlan::from_master(6));
    }

    #[test]
    fn rejects_bad_configs() {
        let no_test = MINIMAL.replace("test_samples_per_subclass = 5", "");
        assert!(ExperimentConfig::from_toml(&no_test).is_err());
        let bad_name = MINIMAL.replace("\"tiny\"", "\"a/b\"");
        assert!(ExperimentConfig::from_toml(&bad_name).is_err());
    }

    #[test]
    fn sweep_points_and_cap() {
        let base = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut spec = SweepSpec {
            base,
            grid: SweepGrid {
                learning_rate: vec![1e-1, 1e-2, 1e-3, 1e-4],
                retain_fraction: vec![0.1, 0.3],
                ..Default::default()
            },
            cap: 64,
        };
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0].retain_fraction, 0.1);
        assert_eq!(pts[1].learning_rate, 1e-2);
        spec.cap = 4;
        assert!(spec.points().is_err());
        spec.grid = SweepGrid::default();
        spec.cap = 1;
        assert_eq!(spec.points().unwrap().len(), 1);
    }
}
