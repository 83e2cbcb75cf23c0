//! Shared helpers for the integration tests: a double-double (about 106
//! bit) reference evaluator for softmax, KL and JS, written independently
//! of the library kernels.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn mul_pow2(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// `e^x` by reduction `x = k ln2 + r`, `r / 2^10`, a Taylor series and
    /// ten squarings.
    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / Self::LN2.hi).round();
        let r = (self - Self::LN2 * Dd::from(k)).mul_pow2(-10);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=25 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.mul_pow2(k as i32)
    }

    /// Natural log by Newton steps on `exp`, seeded with the f64 log.
    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "ln of non-positive value");
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..3 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

fn sum(values: impl IntoIterator<Item = Dd>) -> Dd {
    values.into_iter().fold(Dd::ZERO, |a, b| a + b)
}

/// Reference softmax of `logits / t`.
pub fn softmax_ref(logits: &[f64], t: f64) -> Vec<f64> {
    let scaled: Vec<Dd> = logits.iter().map(|&z| Dd::from(z) / Dd::from(t)).collect();
    let max = scaled.iter().map(|d| d.hi).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<Dd> = scaled.iter().map(|&d| (d - Dd::from(max)).exp()).collect();
    let total = sum(exps.iter().copied());
    exps.iter().map(|&e| (e / total).to_f64()).collect()
}

/// Reference `KL(p ‖ q)` in nats with `q` floored at `eps`.
pub fn kl_ref(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let terms = p.iter().zip(q).filter(|(&pi, _)| pi > 0.0).map(|(&pi, &qi)| {
        let pi = Dd::from(pi);
        pi * (pi / Dd::from(qi.max(eps))).ln()
    });
    sum(terms).to_f64().max(0.0)
}

/// Reference Jensen-Shannon divergence in bits.
pub fn js_ref(p: &[f64], q: &[f64]) -> f64 {
    let half = Dd::from(0.5);
    let mut acc = Dd::ZERO;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = half * (Dd::from(pi) + Dd::from(qi));
        for x in [pi, qi] {
            if x > 0.0 {
                let x = Dd::from(x);
                acc = acc + half * x * (x / m).ln();
            }
        }
    }
    (acc / Dd::LN2).to_f64()
}
