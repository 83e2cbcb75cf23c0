mod common;

use common::{js_ref, kl_ref, softmax_ref, Dd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unlearn_core::divergence::{
    activation_distance, js_divergence, kl_divergence, softmax_with_temperature, DivergenceConfig, ProbVector,
};

fn random_prob(rng: &mut ChaCha8Rng, k: usize) -> ProbVector {
    let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-6.0..6.0)).collect();
    softmax_with_temperature(&logits, 1.0).unwrap()
}

#[test]
fn double_double_is_accurate() {
    assert_eq!(Dd::ONE.exp().hi, std::f64::consts::E);
    assert!((Dd::from(2.0).ln() - Dd::LN2).to_f64().abs() < 1e-30);
    let x = Dd::from(0.1);
    let err = (x.exp().ln() - x).to_f64().abs();
    assert!(err < 1e-28, "{err:e}");
    assert!((Dd::from(-3.5).exp().hi - (-3.5f64).exp()).abs() < 1e-15);
}

#[test]
fn kernels_match_reference_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = DivergenceConfig::default();
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let p = random_prob(&mut rng, k);
        let q = random_prob(&mut rng, k);
        let kl = kl_divergence(&p, &q, &cfg).unwrap();
        assert!((kl - kl_ref(p.as_slice(), q.as_slice(), cfg.epsilon)).abs() < 1e-9);
        let js = js_divergence(&p, &q).unwrap();
        assert!((js - js_ref(p.as_slice(), q.as_slice())).abs() < 1e-9);
        let t = rng.random_range(0.5..5.0);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
        let s = softmax_with_temperature(&logits, t).unwrap();
        for (a, b) in s.as_slice().iter().zip(softmax_ref(&logits, t)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn kl_floor_applies_to_second_argument_only() {
    let cfg = DivergenceConfig::default();
    let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
    let q = ProbVector::one_hot(2, 0);
    let kl = kl_divergence(&p, &q, &cfg).unwrap();
    assert!((kl - kl_ref(p.as_slice(), q.as_slice(), 1e-12)).abs() < 1e-9);
    assert!(kl.is_finite());
    // zero mass in p contributes nothing
    assert_eq!(kl_divergence(&q, &p, &cfg).unwrap(), 2f64.ln());
}

#[test]
fn disjoint_supports_have_js_of_one_bit() {
    let p = ProbVector::one_hot(4, 0);
    let q = ProbVector::one_hot(4, 3);
    assert!((js_divergence(&p, &q).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn length_mismatch_is_a_shape_error() {
    let p = ProbVector::uniform(3);
    let q = ProbVector::uniform(4);
    assert!(kl_divergence(&p, &q, &DivergenceConfig::default()).is_err());
    assert!(js_divergence(&p, &q).is_err());
    assert!(activation_distance(&[p], &[]).is_err());
}

fn prob_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=10).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0f64..1.0, k),
            prop::collection::vec(0.0f64..1.0, k),
        )
    })
}

fn normalise(v: &[f64]) -> Option<ProbVector> {
    let s: f64 = v.iter().sum();
    if s <= 1e-9 {
        return None;
    }
    ProbVector::new(v.iter().map(|x| x / s).collect()).ok()
}

proptest! {
    #[test]
    fn js_is_symmetric_and_bounded((a, b) in prob_strategy()) {
        if let (Some(p), Some(q)) = (normalise(&a), normalise(&b)) {
            let pq = js_divergence(&p, &q).unwrap();
            let qp = js_divergence(&q, &p).unwrap();
            prop_assert!((pq - qp).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(js_divergence(&p, &p).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kl_is_non_negative((a, b) in prob_strategy()) {
        if let (Some(p), Some(q)) = (normalise(&a), normalise(&b)) {
            let cfg = DivergenceConfig::default();
            prop_assert!(kl_divergence(&p, &q, &cfg).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p, &cfg).unwrap() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 2..10), shift in -50.0f64..50.0, t in 0.1f64..10.0) {
        let a = softmax_with_temperature(&z, t).unwrap();
        let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
        let b = softmax_with_temperature(&shifted, t).unwrap();
        let total: f64 = a.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_distance_is_a_mean_of_norms((a, b) in prob_strategy()) {
        if let (Some(p), Some(q)) = (normalise(&a), normalise(&b)) {
            let d = activation_distance(&[p.clone(), p.clone()], &[q.clone(), p.clone()]).unwrap();
            let norm: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!((d - norm / 2.0).abs() < 1e-12);
            prop_assert!(d <= std::f64::consts::SQRT_2 / 2.0 + 1e-12);
        }
    }
}
