//! Scalar arithmetic for series terms and partial sums.
//!
//! Every run picks one arithmetic mode up front: exact rationals
//! ([`Exact`], arbitrary precision) or binary floats (`f64`). The rest of
//! the crate is generic over [`Scalar`] so the two modes never mix.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact arbitrary-precision rational.
pub type Exact = BigRational;

/// Default absolute/relative slack for float-mode threshold checks.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Exact,
    Float,
}

impl fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arithmetic::Exact => f.write_str("exact"),
            Arithmetic::Float => f.write_str("float"),
        }
    }
}

impl FromStr for Arithmetic {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Arithmetic::Exact),
            "float" => Ok(Arithmetic::Float),
            other => Err(ParseScalarError(format!("unknown arithmetic mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse scalar: {0}")]
pub struct ParseScalarError(pub String);

/// Classification of a term: `a_n > 0` is positive, `a_n <= 0` negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "P")]
    Positive,
    #[serde(rename = "N")]
    Negative,
}

impl Class {
    pub fn label(self) -> &'static str {
        match self {
            Class::Positive => "P",
            Class::Negative => "N",
        }
    }
}

impl Class {
    pub fn opposite(self) -> Class {
        match self {
            Class::Positive => Class::Negative,
            Class::Negative => Class::Positive,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Class {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P" | "p" => Ok(Class::Positive),
            "N" | "n" => Ok(Class::Negative),
            other => Err(ParseScalarError(format!("unknown block kind `{other}`"))),
        }
    }
}

/// Arithmetic required of a term value.
pub trait Scalar: Clone + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    const ARITHMETIC: Arithmetic;

    fn zero() -> Self;

    fn from_exact(value: &Exact) -> Self;

    /// `±1/den`.
    fn unit_fraction(negative: bool, den: u64) -> Self;

    fn is_positive(&self) -> bool;

    fn add_assign_ref(&mut self, rhs: &Self);

    fn sub_ref(&self, rhs: &Self) -> Self;

    fn abs(&self) -> Self;

    fn to_f64(&self) -> f64;

    /// Lowest-terms `p/q` for rationals, shortest round-trip decimal for floats.
    fn render(&self) -> String;

    fn parse(text: &str) -> Result<Self, ParseScalarError>;

    /// `self <= bound`, with [`FLOAT_TOLERANCE`] slack in float mode.
    fn approx_le(&self, bound: &Self) -> bool;

    /// `self == other`, exact for rationals and within 1% relative for floats.
    fn stable_eq(&self, other: &Self) -> bool;

    fn classify(&self) -> Class {
        if self.is_positive() {
            Class::Positive
        } else {
            Class::Negative
        }
    }

    fn max_ref<'a>(&'a self, other: &'a Self) -> &'a Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const ARITHMETIC: Arithmetic = Arithmetic::Float;

    fn zero() -> Self {
        0.0
    }

    fn from_exact(value: &Exact) -> Self {
        exact_to_f64(value)
    }

    fn unit_fraction(negative: bool, den: u64) -> Self {
        let v = 1.0 / den as f64;
        if negative {
            -v
        } else {
            v
        }
    }

    fn is_positive(&self) -> bool {
        *self > 0.0
    }

    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += *rhs;
    }

    fn sub_ref(&self, rhs: &Self) -> Self {
        self - rhs
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn render(&self) -> String {
        if *self == 0.0 {
            // normalise -0
            return "0".to_string();
        }
        format!("{self}")
    }

    fn parse(text: &str) -> Result<Self, ParseScalarError> {
        let text = text.trim();
        let value = if text.contains('/') {
            exact_to_f64(&parse_exact(text)?)
        } else {
            f64::from_str(text).map_err(|e| ParseScalarError(format!("`{text}`: {e}")))?
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ParseScalarError(format!("`{text}` is not finite")))
        }
    }

    fn approx_le(&self, bound: &Self) -> bool {
        *self <= *bound + FLOAT_TOLERANCE * f64::abs(*bound).max(1.0)
    }

    fn stable_eq(&self, other: &Self) -> bool {
        let scale = f64::abs(*self).max(f64::abs(*other));
        f64::abs(self - other) <= 0.01 * scale
    }
}

impl Scalar for Exact {
    const ARITHMETIC: Arithmetic = Arithmetic::Exact;

    fn zero() -> Self {
        Zero::zero()
    }

    fn from_exact(value: &Exact) -> Self {
        value.clone()
    }

    fn unit_fraction(negative: bool, den: u64) -> Self {
        let num = if negative { -BigInt::one() } else { BigInt::one() };
        BigRational::new_raw(num, BigInt::from(den))
    }

    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }

    fn add_assign_ref(&mut self, rhs: &Self) {
        add_exact_in_place(self, rhs);
    }

    fn sub_ref(&self, rhs: &Self) -> Self {
        // keep the big operand on the left so the fast path applies
        if rhs.denom().bits() <= 64 {
            let mut out = self.clone();
            add_exact_in_place(&mut out, &-rhs);
            out
        } else if self.denom().bits() <= 64 {
            let mut out = -rhs;
            add_exact_in_place(&mut out, self);
            out
        } else {
            self - rhs
        }
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn to_f64(&self) -> f64 {
        exact_to_f64(self)
    }

    fn render(&self) -> String {
        self.to_string()
    }

    fn parse(text: &str) -> Result<Self, ParseScalarError> {
        parse_exact(text)
    }

    fn approx_le(&self, bound: &Self) -> bool {
        self <= bound
    }

    fn stable_eq(&self, other: &Self) -> bool {
        self == other
    }
}

/// `sum += rhs`, keeping `sum` in lowest terms.
///
/// When `rhs` has a word-sized denominator the result is reduced in time
/// linear in the size of `sum`: any prime shared by the new numerator and
/// denominator must divide `rhs`'s denominator, so only that word-sized
/// value has to be stripped. Harmonic-type partial sums stay on this path.
pub fn add_exact_in_place(sum: &mut Exact, rhs: &Exact) {
    let q = match rhs.denom().to_u64() {
        Some(q) => q,
        None => {
            *sum += rhs;
            return;
        }
    };
    if rhs.numer().is_zero() {
        return;
    }
    let (n, d) = std::mem::replace(sum, <BigRational as Zero>::zero()).into_raw();
    let g = (d.magnitude() % q).to_u64().unwrap_or(0).gcd(&q);
    let q_over_g = BigInt::from(q / g);
    let d_over_g = if g == 1 { d.clone() } else { &d / g };
    let mut num = n * &q_over_g + rhs.numer() * d_over_g;
    let mut den = d * q_over_g;
    if num.is_zero() {
        return;
    }
    loop {
        let c = mod_small(num.magnitude(), q).gcd(&q).gcd(&mod_small(den.magnitude(), q));
        if c <= 1 {
            break;
        }
        num /= c;
        den /= c;
    }
    *sum = BigRational::new_raw(num, den);
}

fn mod_small(value: &BigUint, m: u64) -> u64 {
    (value % m).to_u64().unwrap_or(0)
}

pub fn exact_to_f64(value: &Exact) -> f64 {
    if let Some(f) = ToPrimitive::to_f64(value) {
        if f.is_finite() {
            return f;
        }
    }
    // very large numerator and denominator: scale down before converting
    let n_bits = value.numer().bits() as i64;
    let d_bits = value.denom().bits() as i64;
    let shift_n = (n_bits - 900).max(0) as u64;
    let shift_d = (d_bits - 900).max(0) as u64;
    let n = (value.numer() >> shift_n).to_f64().unwrap_or(0.0);
    let d = (value.denom() >> shift_d).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
}

/// Parses `p/q`, an integer, or a plain decimal such as `-0.125` or `3e-2`.
pub fn parse_exact(text: &str) -> Result<Exact, ParseScalarError> {
    let text = text.trim();
    let err = |why: &str| ParseScalarError(format!("`{text}`: {why}"));
    if text.is_empty() {
        return Err(err("empty"));
    }
    if let Some((p, q)) = text.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| err("bad numerator"))?;
        let q = BigInt::from_str(q.trim()).map_err(|_| err("bad denominator"))?;
        if q.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => {
            let exp = i64::from_str(&text[pos + 1..]).map_err(|_| err("bad exponent"))?;
            (&text[..pos], exp)
        }
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err("not a number"));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut num = BigInt::from_str(&all_digits).map_err(|_| err("not a number"))?;
    if negative {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i64;
    if scale.unsigned_abs() > 100_000 {
        return Err(err("exponent out of range"));
    }
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Total order helper for floats coming out of term generation (never NaN).
pub fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}
