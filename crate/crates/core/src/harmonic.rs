//! Certified floating-point bounds on harmonic numbers.
//!
//! The escalating-blocks generator needs to know, for a run of unit
//! fractions `1/a + ... + 1/b`, the first `b` at which the run reaches a
//! target. Block lengths grow exponentially, so summing term by term is
//! hopeless past a few blocks. Instead `H(n)` is evaluated from its
//! asymptotic expansion with an explicit error bound, and every comparison
//! either resolves outside the error band or falls back to exact rationals.

use num_rational::BigRational;
use num_traits::Zero;

use crate::scalar::{add_exact_in_place, Exact, Scalar};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this `n`, `H(n)` is summed directly.
const DIRECT_LIMIT: u64 = 20;

/// Spans up to this many terms may be summed exactly when a float
/// comparison is inconclusive.
const EXACT_FALLBACK_TERMS: u64 = 200_000;

/// A real number known to lie in `[value - err, value + err]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Certified {
    pub value: f64,
    pub err: f64,
}

impl Certified {
    pub fn exact(value: f64) -> Self {
        Certified { value, err: value.abs() * f64::EPSILON }
    }

    pub fn add(self, other: Certified) -> Certified {
        let value = self.value + other.value;
        Certified { value, err: self.err + other.err + 2.0 * value.abs() * f64::EPSILON }
    }

    pub fn sub(self, other: Certified) -> Certified {
        self.add(Certified { value: -other.value, err: other.err })
    }

    /// Sign of the represented number when the bound excludes zero.
    pub fn sign(self) -> Option<std::cmp::Ordering> {
        if self.value > self.err {
            Some(std::cmp::Ordering::Greater)
        } else if self.value < -self.err {
            Some(std::cmp::Ordering::Less)
        } else {
            None
        }
    }
}

/// `H(n) = 1 + 1/2 + ... + 1/n`, with `H(0) = 0`.
pub(crate) fn harmonic(n: u64) -> Certified {
    if n <= DIRECT_LIMIT {
        let value: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        return Certified { value, err: 64.0 * f64::EPSILON };
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let inv4 = inv2 * inv2;
    let value = x.ln() + EULER_GAMMA + 0.5 * inv - inv2 / 12.0 + inv4 / 120.0 - inv4 * inv2 / 252.0;
    // truncation < 1/(240 n^8); the rest covers ln() and the five roundings
    let truncation = inv4 * inv4 / 240.0;
    let rounding = 16.0 * value.abs() * f64::EPSILON + 4.0 * f64::EPSILON;
    Certified { value, err: truncation + rounding }
}

/// `1/first + ... + 1/last`.
pub(crate) fn span(first: u64, last: u64) -> Certified {
    debug_assert!(first >= 1 && first <= last);
    if last - first < 64 && first > DIRECT_LIMIT {
        let value: f64 = (first..=last).rev().map(|k| 1.0 / k as f64).sum();
        return Certified { value, err: 130.0 * value * f64::EPSILON };
    }
    harmonic(last).sub(harmonic(first - 1))
}

/// Exact value of `1/first + ... + 1/last`, only for short spans.
pub(crate) fn exact_span(first: u64, last: u64) -> Option<Exact> {
    if last - first >= EXACT_FALLBACK_TERMS {
        return None;
    }
    let mut sum = <BigRational as Zero>::zero();
    for k in first..=last {
        add_exact_in_place(&mut sum, &Exact::unit_fraction(false, k));
    }
    Some(sum)
}
