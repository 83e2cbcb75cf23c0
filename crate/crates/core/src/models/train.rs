//! Supervised training and the shared mini-batch loop.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, ArchitectureId, ClassifierHandle, Plateau};
use crate::datamodel::{DatasetView, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::seeds;

/// Adam training schedule with reduce-on-plateau on the epoch training loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub seed: u64,
    /// Separate rate for the output layer; `None` uses `learning_rate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_learning_rate: Option<f64>,
    /// Global L2 norm clip on the batch gradient. Off by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    /// Tabular defaults: Adam at 0.01 for 50 epochs, plateau patience 10 and
    /// factor 0.1.
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 256,
            plateau_patience: 10,
            plateau_factor: 0.1,
            seed: 0,
            head_learning_rate: None,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Spec(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be at least 1".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::Spec(format!(
                "plateau_factor {} outside (0, 1]",
                self.plateau_factor
            )));
        }
        if matches!(self.head_learning_rate, Some(lr) if lr.is_nan() || lr <= 0.0) {
            return Err(Error::Spec("head_learning_rate must be positive".into()));
        }
        if matches!(self.grad_clip, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::Spec("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// A per-sample differentiable loss over an indexed work list.
pub(crate) trait Objective: Sync {
    fn len(&self) -> usize;

    /// Features of work item `item`.
    fn sample(&self, item: usize) -> &[f64];

    /// Loss of one item; writes `∂loss/∂logits` into `dlogits`.
    fn loss_and_grad(&self, item: usize, logits: &[f64], dlogits: &mut [f64]) -> f64;
}

/// Samples per parallel gradient chunk. Chunks are reduced in order, so the
/// batch gradient does not depend on the thread count.
const CHUNK: usize = 16;

fn batch_gradient<O: Objective>(model: &ClassifierHandle, obj: &O, items: &[usize]) -> (f64, Vec<f64>) {
    let arch = model.architecture();
    let params = model.params();
    let n = params.len();
    let partials: Vec<(f64, Vec<f64>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            let mut dlogits = vec![0.0; arch.classes()];
            for &item in chunk {
                let x = obj.sample(item);
                let trace = arch.forward(params, x);
                loss += obj.loss_and_grad(item, trace.logits(), &mut dlogits);
                arch.backward(params, x, &trace, &dlogits, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut total = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    (loss, total)
}

/// Optimiser state plus the mini-batch schedule of one training run.
pub(crate) struct EpochRunner {
    adam: Adam,
    pub lr: f64,
    pub head_lr: Option<f64>,
    clip: Option<f64>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl EpochRunner {
    pub fn new(params: usize, lr: f64, head_lr: Option<f64>, clip: Option<f64>, batch_size: usize, seed: u64) -> Self {
        Self {
            adam: Adam::new(params),
            lr,
            head_lr,
            clip,
            batch_size,
            rng: seeds::rng(seed),
        }
    }

    /// One shuffled pass; pushes each step's mean loss onto `trace` and
    /// returns the sample-weighted epoch mean.
    pub fn run_epoch<O: Objective>(
        &mut self,
        model: &mut ClassifierHandle,
        obj: &O,
        epoch: usize,
        trace: &mut Vec<f64>,
    ) -> Result<f64> {
        let mut order: Vec<usize> = (0..obj.len()).collect();
        order.shuffle(&mut self.rng);
        let head = self.head_lr.map(|lr| (model.architecture().head_range(), lr));
        let mut total = 0.0;
        for (step, batch) in order.chunks(self.batch_size).enumerate() {
            let (loss_sum, mut grad) = batch_gradient(model, obj, batch);
            let scale = 1.0 / batch.len() as f64;
            let loss = loss_sum * scale;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            if let Some(max_norm) = self.clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    grad.iter_mut().for_each(|g| *g *= max_norm / norm);
                }
            }
            self.adam.step(model.params_mut(), &grad, self.lr, head.clone());
            trace.push(loss);
            total += loss_sum;
        }
        Ok(if obj.len() == 0 { 0.0 } else { total / obj.len() as f64 })
    }
}

/// Cross-entropy against integer labels.
pub(crate) struct CrossEntropy<'a> {
    pub dataset: &'a LabeledDataset,
    /// `(sample index, target label)`
    pub items: Vec<(usize, usize)>,
}

pub(crate) fn cross_entropy_grad(logits: &[f64], target: usize, dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &z) in dlogits.iter_mut().zip(logits) {
        *d = (z - max).exp();
        sum += *d;
    }
    for d in dlogits.iter_mut() {
        *d /= sum;
    }
    dlogits[target] -= 1.0;
    max + sum.ln() - logits[target]
}

impl Objective for CrossEntropy<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample(&self, item: usize) -> &[f64] {
        self.dataset.sample(self.items[item].0)
    }

    fn loss_and_grad(&self, item: usize, logits: &[f64], dlogits: &mut [f64]) -> f64 {
        cross_entropy_grad(logits, self.items[item].1, dlogits)
    }
}

/// Trains `model` in place on `view` and returns the per-epoch mean losses.
fn fit(model: &mut ClassifierHandle, view: &DatasetView<'_>, config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if view.is_empty() && config.epochs > 0 {
        return Err(Error::Argument("cannot train on an empty view".into()));
    }
    let objective = CrossEntropy {
        dataset: view.dataset(),
        items: view.indices().iter().map(|&i| (i, view.dataset().label(i))).collect(),
    };
    let mut runner = EpochRunner::new(
        model.params().len(),
        config.learning_rate,
        config.head_learning_rate,
        config.grad_clip,
        config.batch_size,
        seeds::derive_seed(config.seed, "train/shuffle"),
    );
    let mut plateau = Plateau::new(config.plateau_patience, config.plateau_factor);
    let mut steps = Vec::new();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = runner.run_epoch(model, &objective, epoch, &mut steps)?;
        runner.lr = plateau.observe(loss, runner.lr);
        // the head keeps its ratio to the body rate when the plateau cuts it
        runner.head_lr = config.head_learning_rate.map(|h| h * runner.lr / config.learning_rate);
        log::debug!("epoch {epoch}: loss {loss:.5} lr {:.2e}", runner.lr);
        history.push(loss);
    }
    Ok(history)
}

fn check_compatible(view: &DatasetView<'_>, model: &ClassifierHandle) -> Result<()> {
    let ds = view.dataset();
    if ds.feature_dim() != model.architecture().input_dim() {
        return Err(Error::Model(format!(
            "{} expects {} input values, dataset provides {}",
            model.architecture_id(),
            model.architecture().input_dim(),
            ds.feature_dim()
        )));
    }
    if ds.class_count() != model.architecture().classes() {
        return Err(Error::Model(format!(
            "model has {} outputs, dataset has {} classes",
            model.architecture().classes(),
            ds.class_count()
        )));
    }
    Ok(())
}

/// Trains a fresh network of the given architecture on `view`.
pub fn train_with_history(
    view: &DatasetView<'_>,
    arch: ArchitectureId,
    config: &TrainConfig,
) -> Result<(ClassifierHandle, Vec<f64>)> {
    let ds = view.dataset();
    let architecture = arch.build(ds.feature_shape(), ds.class_count())?;
    let mut model = ClassifierHandle::new(architecture, seeds::derive_seed(config.seed, "train/init"));
    check_compatible(view, &model)?;
    let history = fit(&mut model, view, config)?;
    Ok((model, history))
}

/// Continues training an existing network on `view`.
pub fn train_on_view(model: &mut ClassifierHandle, view: &DatasetView<'_>, config: &TrainConfig) -> Result<Vec<f64>> {
    check_compatible(view, model)?;
    fit(model, view, config)
}

/// Trains the original model on the full dataset.
pub fn train_classifier(
    dataset: &LabeledDataset,
    arch: ArchitectureId,
    config: &TrainConfig,
) -> Result<ClassifierHandle> {
    train_with_history(&DatasetView::all(dataset), arch, config).map(|(m, _)| m)
}

/// Trains from scratch on the retain set only.
///
/// The training view is built from retain indices, so forget samples are
/// never read.
pub fn retrain_gold(
    partition: &Partition,
    dataset: &LabeledDataset,
    arch: ArchitectureId,
    config: &TrainConfig,
) -> Result<ClassifierHandle> {
    if partition.total() != dataset.len() {
        return Err(Error::Argument(format!(
            "partition covers {} samples, dataset has {}",
            partition.total(),
            dataset.len()
        )));
    }
    let view = DatasetView::new(dataset, partition.retain_set().to_vec())?;
    train_with_history(&view, arch, config).map(|(m, _)| m)
}
