//! Probability-vector kernels: temperature softmax, KL, JS and activation
//! distance.
//!
//! KL (the training loss) is measured in nats. JS (the evaluation metric) is
//! measured in bits, which bounds it by 1 and keeps ZRF inside `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Default probability floor applied to the second KL argument.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// A non-negative vector summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("probability vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Numeric(format!("invalid probability entry {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Numeric(format!("probabilities sum to {sum}")));
        }
        Ok(Self(values))
    }

    /// Uniform distribution over `classes` entries.
    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    /// One-hot vector at `index`.
    pub fn one_hot(classes: usize, index: usize) -> Self {
        let mut v = vec![0.0; classes];
        v[index] = 1.0;
        Self(v)
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Natural,
    Two,
}

impl LogBase {
    fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LOG2_E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    pub epsilon: f64,
    pub kl_log_base: LogBase,
    pub js_log_base: LogBase,
    pub temperature: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            kl_log_base: LogBase::Natural,
            js_log_base: LogBase::Two,
            temperature: 1.0,
        }
    }
}

impl DivergenceConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::Argument(format!("epsilon {} outside (0, 1e-6]", self.epsilon)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Argument(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Writes `softmax(logits / temperature)` into `out`.
///
/// Callers guarantee finite logits; the max is subtracted before `exp`.
pub(crate) fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Shape("no logits".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Argument(format!("temperature {temperature} must be positive")));
    }
    if let Some(z) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {z}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(ProbVector(out))
}

/// `Σ p_i ln(p_i / max(q_i, ε))` in nats, clamped at zero. Zero `p_i` terms
/// contribute nothing.
pub(crate) fn kl_nats(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            acc += pi * (pi / qi.max(epsilon)).ln();
        }
    }
    acc.max(0.0)
}

fn same_len(p: &ProbVector, q: &ProbVector) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "probability vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Forward KL divergence `KL(p ‖ q)` with the floor applied to `q` only.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector, config: &DivergenceConfig) -> Result<f64> {
    same_len(p, q)?;
    Ok(kl_nats(&p.0, &q.0, config.epsilon) * config.kl_log_base.scale())
}

pub(crate) fn js_bits(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += 0.5 * pi * (pi / m).ln();
        }
        if qi > 0.0 {
            acc += 0.5 * qi * (qi / m).ln();
        }
    }
    (acc * std::f64::consts::LOG2_E).clamp(0.0, 1.0)
}

/// Jensen–Shannon divergence in bits: `½KL(p‖m) + ½KL(q‖m)`, `m = (p+q)/2`.
pub fn js_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    same_len(p, q)?;
    Ok(js_bits(&p.0, &q.0))
}

/// Mean Euclidean distance between aligned probability vectors.
pub fn activation_distance(unlearned: &[ProbVector], gold: &[ProbVector]) -> Result<f64> {
    if unlearned.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} unlearned outputs vs {} gold outputs",
            unlearned.len(),
            gold.len()
        )));
    }
    if unlearned.is_empty() {
        return Err(Error::Argument("activation distance over zero samples".into()));
    }
    let mut total = 0.0;
    for (a, b) in unlearned.iter().zip(gold) {
        same_len(a, b)?;
        total += a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    Ok(total / unlearned.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        for t in [0.1, 1.0, 7.5] {
            let p = softmax_with_temperature(&[3.0; 4], t).unwrap();
            for v in p.as_slice() {
                assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_two_logits() {
        // e/(1+e) evaluated independently
        let p = softmax_with_temperature(&[1.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.731_058_578_630_004_9, epsilon = 1e-5);
        assert_abs_diff_eq!(p.as_slice()[1], 0.268_941_421_369_995_1, epsilon = 1e-5);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(
            softmax_with_temperature(&[f64::INFINITY, 0.0], 1.0),
            Err(Error::Numeric(_))
        ));
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1e308, -1e308], 1.0).is_ok());
    }

    #[test]
    fn kl_known_values() {
        let cfg = DivergenceConfig::default();
        let p = pv(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &p, &cfg).unwrap(), 0.0);
        // 0.5 ln 2 + 0.5 ln(2/3)
        let kl = kl_divergence(&p, &pv(&[0.25, 0.75]), &cfg).unwrap();
        assert_abs_diff_eq!(kl, 0.143_841_036_225_890_2, epsilon = 1e-6);
    }

    #[test]
    fn kl_zero_mass_uses_floor() {
        let cfg = DivergenceConfig::default();
        let kl = kl_divergence(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0]), &cfg).unwrap();
        let expected = 0.5 * (0.5f64 / 1e-12).ln() + 0.5 * 0.5f64.ln();
        assert!(kl.is_finite());
        assert_abs_diff_eq!(kl, expected, epsilon = 1e-9);
        assert!(kl > 13.0);
        // zeros in the first argument contribute nothing
        assert_eq!(kl_divergence(&pv(&[1.0, 0.0]), &pv(&[1.0, 0.0]), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn js_extremes_and_shape_errors() {
        let p = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        let e0 = ProbVector::one_hot(2, 0);
        let e1 = ProbVector::one_hot(2, 1);
        assert_abs_diff_eq!(js_divergence(&e0, &e1).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(js_divergence(&p, &e0), Err(Error::Shape(_))));
        assert!(matches!(
            kl_divergence(&p, &e0, &DivergenceConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn activation_distance_cases() {
        let a = vec![pv(&[0.2, 0.8]), pv(&[0.6, 0.4])];
        assert_eq!(activation_distance(&a, &a).unwrap(), 0.0);
        let d = activation_distance(&[ProbVector::one_hot(2, 0)], &[ProbVector::one_hot(2, 1)]).unwrap();
        assert_abs_diff_eq!(d, 2f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(activation_distance(&a, &a[..1]), Err(Error::Shape(_))));
    }

    #[test]
    fn config_validation() {
        assert!(DivergenceConfig::default().validate().is_ok());
        let c = DivergenceConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(DivergenceConfig::with_temperature(-1.0).validate().is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(ProbVector::uniform(4).argmax(), 0);
        assert_eq!(pv(&[0.2, 0.4, 0.4]).argmax(), 1);
    }
}
