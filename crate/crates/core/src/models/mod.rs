//! Classifiers: architectures, training, prediction and checkpoints.

mod arch;
mod checkpoint;
mod optim;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::DatasetView;
use crate::divergence::{softmax_into, ProbVector};
use crate::error::{Error, Result};
use crate::seeds;

pub use arch::{Architecture, ArchitectureId, Cnn, Dense, Lstm, CNN_FILTERS, CNN_HIDDEN, LSTM_HIDDEN, MLP3_HIDDEN};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelRole, Provenance};
pub use optim::{Adam, Plateau};
pub use train::{retrain_gold, train_classifier, train_on_view, train_with_history, TrainConfig};
pub(crate) use train::{EpochRunner, Objective};
pub(crate) mod train_objective {
    pub(crate) use super::train::CrossEntropy;
}

/// Anything that maps samples to class probabilities.
pub trait Predictor: Sync {
    fn class_count(&self) -> usize;

    fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>>;
}

/// A trainable classifier: architecture plus its flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHandle {
    architecture: Architecture,
    params: Vec<f64>,
    rng_seed: u64,
}

impl ClassifierHandle {
    /// Freshly initialised network.
    pub fn new(architecture: Architecture, seed: u64) -> Self {
        let params = architecture.init(&mut seeds::rng(seed));
        Self {
            architecture,
            params,
            rng_seed: seed,
        }
    }

    pub fn from_parts(architecture: Architecture, params: Vec<f64>, rng_seed: u64) -> Result<Self> {
        if params.len() != architecture.param_count() {
            return Err(Error::Model(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                architecture.param_count()
            )));
        }
        Ok(Self {
            architecture,
            params,
            rng_seed,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn architecture_id(&self) -> ArchitectureId {
        self.architecture.id()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// SHA-256 over the architecture and the exact parameter bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.architecture).expect("architecture serialises"));
        for p in &self.params {
            h.update(p.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.architecture.input_dim() {
            return Err(Error::Shape(format!(
                "sample of {} values, {} expects {}",
                x.len(),
                self.architecture.id(),
                self.architecture.input_dim()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input".into()));
        }
        let z = self.architecture.logits(&self.params, x);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Ok(z)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<ProbVector> {
        let z = self.logits(x)?;
        let mut p = vec![0.0; z.len()];
        softmax_into(&z, 1.0, &mut p);
        Ok(ProbVector::from_raw(p))
    }

    /// Class probabilities for each sample, in order.
    pub fn predict_proba(&self, batch: &[&[f64]]) -> Result<Vec<ProbVector>> {
        batch.par_iter().map(|x| self.predict_one(x)).collect()
    }
}

impl Predictor for ClassifierHandle {
    fn class_count(&self) -> usize {
        self.architecture.classes()
    }

    fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
        let ds = view.dataset();
        view.indices()
            .par_iter()
            .map(|&i| self.predict_one(ds.sample(i)))
            .collect()
    }
}

/// Percentage of samples whose arg-max prediction equals the label.
pub fn evaluate_accuracy(model: &dyn Predictor, view: &DatasetView<'_>) -> Result<f64> {
    if view.is_empty() {
        return Err(Error::Argument("accuracy over an empty view".into()));
    }
    let probs = model.predict_view(view)?;
    let hits = probs
        .iter()
        .zip(view.labels())
        .filter(|(p, y)| p.argmax() == *y)
        .count();
    Ok(100.0 * hits as f64 / view.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{make_synthetic_dataset, LabeledDataset, SplitTag};

    struct Oracle<'a>(&'a LabeledDataset);

    impl Predictor for Oracle<'_> {
        fn class_count(&self) -> usize {
            self.0.class_count()
        }
        fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
            Ok(view
                .labels()
                .map(|y| ProbVector::one_hot(self.0.class_count(), y))
                .collect())
        }
    }

    struct Uniform(usize);

    impl Predictor for Uniform {
        fn class_count(&self) -> usize {
            self.0
        }
        fn predict_view(&self, view: &DatasetView<'_>) -> Result<Vec<ProbVector>> {
            Ok(vec![ProbVector::uniform(self.0); view.len()])
        }
    }

    #[test]
    fn perfect_and_uniform_accuracy() {
        let ds = make_synthetic_dataset(4, 1, 25, 3, 1.0, 0).unwrap();
        let all = DatasetView::all(&ds);
        assert_eq!(evaluate_accuracy(&Oracle(&ds), &all).unwrap(), 100.0);
        // ties resolve to class 0, which holds a quarter of balanced data
        assert_eq!(evaluate_accuracy(&Uniform(4), &all).unwrap(), 25.0);
        let empty = DatasetView::new(&ds, vec![]).unwrap();
        assert!(matches!(
            evaluate_accuracy(&Uniform(4), &empty),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn predictions_are_distributions_and_deterministic() {
        let ds = make_synthetic_dataset(3, 1, 10, 6, 1.0, 0).unwrap();
        let arch = ArchitectureId::Mlp3.build(ds.feature_shape(), 3).unwrap();
        let model = ClassifierHandle::new(arch, 11);
        let batch: Vec<&[f64]> = (0..ds.len()).map(|i| ds.sample(i)).collect();
        let a = model.predict_proba(&batch).unwrap();
        let b = model.predict_proba(&batch).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_permutation_matches_single_calls() {
        let ds = make_synthetic_dataset(3, 2, 5, 4, 2.0, 1).unwrap();
        let arch = ArchitectureId::LstmSeq.build(&[4], 3).unwrap();
        let model = ClassifierHandle::new(arch, 3);
        let order = [7usize, 2, 29, 0, 15, 3];
        let batch: Vec<&[f64]> = order.iter().map(|&i| ds.sample(i)).collect();
        let out = model.predict_proba(&batch).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(out[k], model.predict_proba(&[ds.sample(i)]).unwrap()[0]);
        }
    }

    #[test]
    fn wrong_shape_and_nan_inputs() {
        let arch = ArchitectureId::Mlp3.build(&[4], 3).unwrap();
        let model = ClassifierHandle::new(arch, 0);
        assert!(matches!(model.predict_one(&[0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            model.predict_one(&[f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
        assert!(ClassifierHandle::from_parts(model.architecture().clone(), vec![0.0], 0).is_err());
        let ds = LabeledDataset::new(vec![0.0; 4], vec![4], vec![0], 3, None, SplitTag::Test).unwrap();
        assert_eq!(model.predict_view(&DatasetView::all(&ds)).unwrap().len(), 1);
    }
}
