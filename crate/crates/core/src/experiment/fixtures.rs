//! Reference experiments shipped as TOML under `configs/`.
//!
//! The synthetic fixtures are a few thousand samples, so at batch 256 one
//! unlearning epoch would be a handful of optimizer steps. Their batch size
//! is picked so one epoch takes about as many steps as the corresponding
//! CIFAR run takes at batch 256 (about 72 for CIFAR-10 class forgetting,
//! about 60 for CIFAR-20 subclass forgetting).

use super::config::{DatasetSource, ExperimentConfig, MetricToggles};
use crate::datamodel::{ForgetSpec, SyntheticSpec};
use crate::models::{ArchitectureId, TrainConfig};
use crate::teachers::TeacherSpec;
use crate::unlearn::UnlearnConfig;

fn base(name: &str, seed: u64, data: SyntheticSpec, forget: ForgetSpec, unlearn: UnlearnConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        master_seed: seed,
        architecture: ArchitectureId::Mlp3,
        dataset: DatasetSource::Synthetic(data),
        forget,
        teacher: TeacherSpec::random_init(0),
        train: TrainConfig::default(),
        unlearn,
        metrics: MetricToggles::default(),
        sequential: Vec::new(),
        output_dir: None,
    }
}

/// Ten classes with two subclasses each (a CIFAR-10 stand-in); forget
/// class 0.
pub fn synthetic_class_forget(seed: u64) -> ExperimentConfig {
    let data = SyntheticSpec::new(10, 2, 250, 20, 1.0).with_spread(0.5).with_test(50);
    let unlearn = UnlearnConfig {
        batch_size: 24,
        ..UnlearnConfig::class_unlearning()
    };
    base(
        "synthetic_class_forget",
        seed,
        data,
        ForgetSpec::FullClass { classes: vec![0] },
        unlearn,
    )
}

/// Twenty superclasses of five subclasses (a CIFAR-20 stand-in); forget
/// subclass 0 of superclass 0. The wide subclass spread makes each
/// subclass its own cluster, so the retained siblings do not vouch for the
/// forgotten one.
///
/// The sample protocol's lr of 1e-4 leaves this small MLP untouched within
/// one epoch, so the fixture runs at 1e-3.
pub fn synthetic_subclass_forget(seed: u64) -> ExperimentConfig {
    let data = SyntheticSpec::new(20, 5, 100, 20, 1.0).with_spread(4.0).with_test(50);
    let unlearn = UnlearnConfig {
        learning_rate: 1e-3,
        batch_size: 50,
        ..UnlearnConfig::sample_unlearning()
    };
    let forget = ForgetSpec::SubclassWithinSuperclass {
        superclass: 0,
        subclass: 0,
    };
    base("synthetic_subclass_forget", seed, data, forget, unlearn)
}

/// [`synthetic_subclass_forget`] followed by two more subclass requests in
/// other superclasses.
pub fn synthetic_sequential_forget(seed: u64) -> ExperimentConfig {
    let mut cfg = synthetic_subclass_forget(seed);
    cfg.name = "synthetic_sequential_forget".into();
    cfg.sequential = vec![
        ForgetSpec::SubclassWithinSuperclass {
            superclass: 7,
            subclass: 36,
        },
        ForgetSpec::SubclassWithinSuperclass {
            superclass: 13,
            subclass: 67,
        },
    ];
    cfg
}

/// Many small, poorly separated clusters: the original memorises its
/// training set and a confidence attack separates members from held-out
/// samples. Forget 50 random samples.
pub fn overfit_sample_forget(seed: u64) -> ExperimentConfig {
    let data = SyntheticSpec::new(5, 20, 18, 50, 0.15).with_spread(1.0).with_test(5);
    let unlearn = UnlearnConfig {
        learning_rate: 1e-3,
        epochs: 2,
        batch_size: 16,
        ..UnlearnConfig::sample_unlearning()
    };
    let forget = ForgetSpec::RandomSubset { count: 50, seed: None };
    base("overfit_sample_forget", seed, data, forget, unlearn)
}

/// Surrogate for the 11.5k-sample, 178-feature, 5-class epileptic seizure
/// table: 100 "recordings" per class, 18 training and 5 test chunks each.
/// Chunks of one recording share a centre, so the network fits the
/// training set almost perfectly while test accuracy stays near 70%.
pub fn seizure_surrogate_spec() -> SyntheticSpec {
    SyntheticSpec::new(5, 100, 18, 178, 0.15).with_spread(1.0).with_test(5)
}

/// Forget 50 random samples with 30% retain for 2 epochs at lr 1e-3.
pub fn seizure_sample_forget_50(seed: u64) -> ExperimentConfig {
    let unlearn = UnlearnConfig {
        learning_rate: 1e-3,
        epochs: 2,
        ..UnlearnConfig::sample_unlearning()
    };
    let forget = ForgetSpec::RandomSubset { count: 50, seed: None };
    base(
        "seizure_sample_forget_50",
        seed,
        seizure_surrogate_spec(),
        forget,
        unlearn,
    )
}

pub fn seizure_sample_forget_100(seed: u64) -> ExperimentConfig {
    let mut cfg = seizure_sample_forget_50(seed);
    cfg.name = "seizure_sample_forget_100".into();
    cfg.forget = ForgetSpec::RandomSubset { count: 100, seed: None };
    cfg
}

/// The sample-unlearning protocol as published (lr 1e-4, 1 epoch, batch 256).
pub fn sample_regime(seed: u64) -> ExperimentConfig {
    let mut cfg = synthetic_subclass_forget(seed);
    cfg.name = "sample_regime".into();
    cfg.unlearn = UnlearnConfig::sample_unlearning();
    cfg
}

/// The class-unlearning protocol as published (lr 1e-3, 1 epoch, batch 256).
pub fn class_regime(seed: u64) -> ExperimentConfig {
    let mut cfg = synthetic_class_forget(seed);
    cfg.name = "class_regime".into();
    cfg.unlearn = UnlearnConfig::class_unlearning();
    cfg
}

/// Every shipped config by file stem.
pub fn shipped() -> Vec<(&'static str, ExperimentConfig)> {
    vec![
        ("synthetic_class_forget", synthetic_class_forget(0)),
        ("synthetic_subclass_forget", synthetic_subclass_forget(0)),
        ("synthetic_sequential_forget", synthetic_sequential_forget(0)),
        ("overfit_sample_forget", overfit_sample_forget(0)),
        ("seizure_sample_forget_50", seizure_sample_forget_50(0)),
        ("seizure_sample_forget_100", seizure_sample_forget_100(0)),
        ("sample_regime", sample_regime(0)),
        ("class_regime", class_regime(0)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_validate_and_round_trip() {
        for (name, cfg) in shipped() {
            assert_eq!(cfg.name, name);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
