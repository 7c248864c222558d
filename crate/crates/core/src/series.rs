//! Series as deterministic term generators.
//!
//! A [`SeriesSpec`] is a pure rule `n -> a_n`. Built-in rules cover the
//! escalating harmonic blocks series (both sign properties hold) and the
//! square-blocks series (both fail, singleton reachable set); user series
//! are either a repeating pattern of runs or an explicit finite prefix
//! padded with zeros.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::harmonic::{self, Certified};
use crate::scalar::{parse_exact, Arithmetic, Class, Exact, ParseScalarError, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("index arithmetic overflow at term {index}")]
    IndexOverflow { index: usize },
    #[error("term {index} lies beyond the certified range of the generator (limit {limit})")]
    Uncertified { index: usize, limit: u64 },
    #[error("invalid series parameters: {0}")]
    InvalidParams(String),
    #[error("series spec schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Parse(#[from] ParseScalarError),
}

/// What is known analytically about the substantial properties of a
/// built-in generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticSt {
    pub positive: bool,
    pub negative: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// Every cycle repeats the same values.
    None,
    /// Cycle `c` (0-based) scales the values by `1/(c+1)`.
    Harmonic,
}

/// One run of a custom pattern: `count` copies of `value`.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub value: Exact,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomBlocks {
    runs: Vec<Run>,
    decay: Decay,
    run_starts: Vec<u64>,
    cycle_len: u64,
}

impl CustomBlocks {
    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }
}

/// One block of the escalating series: consecutive unit fractions
/// `±1/first_den, ±1/(first_den+1), ...` starting at raw index `start`.
#[derive(Clone, Debug, PartialEq)]
struct EscalatingBlock {
    class: Class,
    start: u64,
    first_den: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EscalatingBlocks {
    seed_targets: Vec<Exact>,
    blocks: Vec<EscalatingBlock>,
    /// Raw indices at or past this are not certified.
    limit: Option<u64>,
}

impl EscalatingBlocks {
    pub fn seed_targets(&self) -> &[Exact] {
        &self.seed_targets
    }

    /// Raw (pre-leading-zero) index bounds `[start, end]` of each block
    /// whose end is known, in order.
    pub fn block_bounds(&self) -> Vec<(Class, u64, u64)> {
        self.blocks.windows(2).map(|w| (w[0].class, w[0].start, w[1].start - 1)).collect()
    }

    fn build(seed_targets: Vec<Exact>) -> Self {
        // next unused denominator in each sign pool
        let mut next_den = [1u64, 1u64];
        let mut start = 0u64;
        let mut previous: Option<(u64, u64)> = None;
        let mut blocks = Vec::new();
        let mut limit = None;

        for j in 0.. {
            let class = if j % 2 == 0 { Class::Positive } else { Class::Negative };
            let pool = j % 2;
            let first = next_den[pool];
            let requirement = match Requirement::for_block(previous, seed_targets.get(j)) {
                Some(r) => r,
                None => {
                    limit = Some(start);
                    break;
                }
            };
            blocks.push(EscalatingBlock { class, start, first_den: first });
            match requirement.minimal_end(first, u64::MAX - start) {
                Search::Found(last) => {
                    start += last - first + 1;
                    next_den[pool] = last + 1;
                    previous = Some((first, last));
                }
                Search::Open => break,
                Search::Inconclusive { certified_below } => {
                    limit = Some(start + (certified_below - first) + 1);
                    break;
                }
            }
        }
        EscalatingBlocks { seed_targets, blocks, limit }
    }

    fn eval<T: Scalar>(&self, raw: u64, index: usize) -> Result<T, SeriesError> {
        if let Some(limit) = self.limit {
            if raw >= limit {
                return Err(SeriesError::Uncertified { index, limit });
            }
        }
        let pos = self.blocks.partition_point(|b| b.start <= raw) - 1;
        let block = &self.blocks[pos];
        let den = block.first_den.checked_add(raw - block.start).ok_or(SeriesError::IndexOverflow { index })?;
        Ok(T::unit_fraction(block.class == Class::Negative, den))
    }

    fn classify(&self, raw: u64, index: usize) -> Result<Class, SeriesError> {
        if let Some(limit) = self.limit {
            if raw >= limit {
                return Err(SeriesError::Uncertified { index, limit });
            }
        }
        let pos = self.blocks.partition_point(|b| b.start <= raw) - 1;
        Ok(self.blocks[pos].class)
    }
}

/// Magnitude a block has to reach.
enum Requirement {
    Value(Exact, Certified),
    /// `1 + 1/first + ... + 1/last`
    SpanPlusOne(u64, u64, Certified),
}

enum Search {
    Found(u64),
    Open,
    Inconclusive { certified_below: u64 },
}

impl Requirement {
    fn for_block(previous: Option<(u64, u64)>, seed: Option<&Exact>) -> Option<Self> {
        let seed = seed.map(|s| Requirement::Value(s.clone(), Certified::exact(s.to_f64())));
        let minimal = match previous {
            None => Requirement::Value(BigRational::one(), Certified::exact(1.0)),
            Some((a, b)) => Requirement::SpanPlusOne(a, b, harmonic::span(a, b).add(Certified::exact(1.0))),
        };
        match seed {
            None => Some(minimal),
            Some(seed) => match seed.compare(&minimal)? {
                Ordering::Greater => Some(seed),
                _ => Some(minimal),
            },
        }
    }

    fn certified(&self) -> Certified {
        match self {
            Requirement::Value(_, c) | Requirement::SpanPlusOne(_, _, c) => *c,
        }
    }

    fn exact(&self) -> Option<Exact> {
        match self {
            Requirement::Value(v, _) => Some(v.clone()),
            Requirement::SpanPlusOne(a, b, _) => harmonic::exact_span(*a, *b).map(|s| s + BigRational::one()),
        }
    }

    fn compare(&self, other: &Requirement) -> Option<Ordering> {
        if let Some(ord) = self.certified().sub(other.certified()).sign() {
            return Some(ord);
        }
        Some(self.exact()?.cmp(&other.exact()?))
    }

    /// Compares `1/first + ... + 1/last` against the requirement.
    fn compare_span(&self, first: u64, last: u64) -> Option<Ordering> {
        if let Some(ord) = harmonic::span(first, last).sub(self.certified()).sign() {
            return Some(ord);
        }
        let exact = harmonic::exact_span(first, last)?;
        Some(exact.cmp(&self.exact()?))
    }

    /// Smallest `last >= first` whose span reaches the requirement, with
    /// `last - first` bounded by `max_extra`.
    fn minimal_end(&self, first: u64, max_extra: u64) -> Search {
        let cap = first.saturating_add(max_extra).min(u64::MAX - 1);
        // invariant: span(first, lo) < requirement (lo = first - 1 means empty)
        let mut lo = first - 1;
        let mut width = 1u64;
        let mut hi;
        loop {
            hi = first.saturating_add(width - 1).min(cap);
            match self.compare_span(first, hi) {
                Some(Ordering::Less) => {
                    lo = hi;
                    if hi == cap {
                        return Search::Open;
                    }
                    width = width.saturating_mul(2);
                }
                Some(_) => break,
                None => return Search::Inconclusive { certified_below: lo.max(first - 1) },
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            match self.compare_span(first, mid) {
                Some(Ordering::Less) => lo = mid,
                Some(_) => hi = mid,
                None => return Search::Inconclusive { certified_below: lo.max(first - 1) },
            }
        }
        Search::Found(hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeriesKind {
    EscalatingBlocks(EscalatingBlocks),
    SquareBlocks,
    CustomBlocks(CustomBlocks),
    ExplicitPrefix(Vec<Exact>),
}

/// A deterministic rule producing `a_n` for every `n >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSpec {
    kind: SeriesKind,
    leading_zero: bool,
}

/// Escalating harmonic blocks: alternating positive/negative blocks of
/// unit fractions, each block running until its magnitude reaches the
/// previous block's magnitude plus one (the first reaches 1).
///
/// `seed_targets`, when given, raise the required magnitude of the first
/// blocks; a seed below the minimal requirement is ignored.
pub fn make_escalating_blocks(seed_targets: Option<Vec<Exact>>) -> SeriesSpec {
    SeriesSpec {
        kind: SeriesKind::EscalatingBlocks(EscalatingBlocks::build(seed_targets.unwrap_or_default())),
        leading_zero: false,
    }
}

/// For `k = 1, 2, 3, ...`: `1/k, -1/k` when `k` is not a perfect square,
/// otherwise `k` copies of `1/k` followed by `k` copies of `-1/k`.
pub fn make_square_blocks() -> SeriesSpec {
    SeriesSpec { kind: SeriesKind::SquareBlocks, leading_zero: false }
}

impl SeriesSpec {
    pub fn custom_blocks(runs: Vec<Run>, decay: Decay) -> Result<Self, SeriesError> {
        if runs.is_empty() {
            return Err(SeriesError::InvalidParams("custom_blocks needs at least one run".into()));
        }
        let mut run_starts = Vec::with_capacity(runs.len());
        let mut cycle_len = 0u64;
        for run in &runs {
            if run.count == 0 {
                return Err(SeriesError::InvalidParams("run count must be positive".into()));
            }
            run_starts.push(cycle_len);
            cycle_len = cycle_len
                .checked_add(run.count)
                .ok_or_else(|| SeriesError::InvalidParams("pattern too long".into()))?;
        }
        Ok(SeriesSpec {
            kind: SeriesKind::CustomBlocks(CustomBlocks { runs, decay, run_starts, cycle_len }),
            leading_zero: false,
        })
    }

    /// Stored terms followed by zeros.
    pub fn explicit_prefix(terms: Vec<Exact>) -> Self {
        SeriesSpec { kind: SeriesKind::ExplicitPrefix(terms), leading_zero: false }
    }

    pub fn with_leading_zero(mut self, on: bool) -> Self {
        self.leading_zero = on;
        self
    }

    /// Turns the leading zero on iff the unshifted series starts positive,
    /// so that the result always starts with a negative block.
    pub fn with_default_leading_zero(self) -> Self {
        let starts_positive = self.raw_classify(0, 0).map(|c| c == Class::Positive).unwrap_or(false);
        self.with_leading_zero(starts_positive)
    }

    pub fn leading_zero(&self) -> bool {
        self.leading_zero
    }

    pub fn kind(&self) -> &SeriesKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SeriesKind::EscalatingBlocks(_) => "escalating_blocks",
            SeriesKind::SquareBlocks => "square_blocks",
            SeriesKind::CustomBlocks(_) => "custom_blocks",
            SeriesKind::ExplicitPrefix(_) => "explicit_prefix",
        }
    }

    pub fn analytic_st(&self) -> Option<AnalyticSt> {
        match self.kind {
            SeriesKind::EscalatingBlocks(_) => Some(AnalyticSt { positive: true, negative: true }),
            SeriesKind::SquareBlocks => Some(AnalyticSt { positive: false, negative: false }),
            _ => None,
        }
    }

    /// First index from which every term is zero, if the rule has one.
    pub fn zero_tail_start(&self) -> Option<usize> {
        match &self.kind {
            SeriesKind::ExplicitPrefix(terms) => {
                let last_nonzero = terms.iter().rposition(|t| !t.is_zero());
                let raw = last_nonzero.map_or(0, |p| p + 1);
                Some(raw + usize::from(self.leading_zero && raw > 0))
            }
            _ => None,
        }
    }

    fn raw_index(&self, n: usize) -> Option<u64> {
        if self.leading_zero {
            if n == 0 {
                None
            } else {
                Some(n as u64 - 1)
            }
        } else {
            Some(n as u64)
        }
    }

    /// `a_n`.
    pub fn eval_term<T: Scalar>(&self, n: usize) -> Result<T, SeriesError> {
        let Some(raw) = self.raw_index(n) else {
            return Ok(T::zero());
        };
        match &self.kind {
            SeriesKind::EscalatingBlocks(esc) => esc.eval(raw, n),
            SeriesKind::SquareBlocks => {
                let (k, negative) = square_block_position(raw);
                Ok(T::unit_fraction(negative, k))
            }
            SeriesKind::CustomBlocks(custom) => {
                let (value, cycle) = custom_position(custom, raw);
                match custom.decay {
                    Decay::None => Ok(T::from_exact(value)),
                    Decay::Harmonic => {
                        let scaled = value / BigRational::from_integer(BigInt::from(cycle) + 1);
                        Ok(T::from_exact(&scaled))
                    }
                }
            }
            SeriesKind::ExplicitPrefix(terms) => {
                Ok(usize::try_from(raw).ok().and_then(|i| terms.get(i)).map(T::from_exact).unwrap_or_else(T::zero))
            }
        }
    }

    /// Sign class of `a_n` without materialising the value.
    pub fn classify(&self, n: usize) -> Result<Class, SeriesError> {
        match self.raw_index(n) {
            None => Ok(Class::Negative),
            Some(raw) => self.raw_classify(raw, n),
        }
    }

    fn raw_classify(&self, raw: u64, n: usize) -> Result<Class, SeriesError> {
        match &self.kind {
            SeriesKind::EscalatingBlocks(esc) => esc.classify(raw, n),
            SeriesKind::SquareBlocks => {
                let (_, negative) = square_block_position(raw);
                Ok(if negative { Class::Negative } else { Class::Positive })
            }
            SeriesKind::CustomBlocks(custom) => {
                let (value, _) = custom_position(custom, raw);
                Ok(value.classify())
            }
            SeriesKind::ExplicitPrefix(terms) => {
                Ok(usize::try_from(raw).ok().and_then(|i| terms.get(i)).map_or(Class::Negative, Scalar::classify))
            }
        }
    }

    /// `(a_0, ..., a_{count-1})`.
    pub fn generate_prefix<T: Scalar>(&self, count: usize) -> Result<Vec<T>, SeriesError> {
        self.generate_range(0, count)
    }

    /// `(a_start, ..., a_{end-1})`.
    pub fn generate_range<T: Scalar>(&self, start: usize, end: usize) -> Result<Vec<T>, SeriesError> {
        (start..end).map(|n| self.eval_term(n)).collect()
    }
}

impl fmt::Display for SeriesSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        if self.leading_zero {
            write!(f, "+leading_zero")?;
        }
        Ok(())
    }
}

/// Number of terms in square-blocks groups `1..=k`.
fn square_prefix_len(k: u64) -> u128 {
    let s = k.isqrt() as u128;
    2 * k as u128 + s * (s + 1) * (2 * s + 1) / 3 - 2 * s
}

/// `(k, is_negative)` for raw index `raw` of the square-blocks series.
fn square_block_position(raw: u64) -> (u64, bool) {
    let target = raw as u128;
    // smallest k with square_prefix_len(k) > raw
    let (mut lo, mut hi) = (1u64, raw / 2 + 2);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if square_prefix_len(mid) > target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let k = lo;
    let before = square_prefix_len(k - 1);
    let offset = (target - before) as u64;
    let s = k.isqrt();
    let half = if s * s == k { k } else { 1 };
    (k, offset >= half)
}

fn custom_position(custom: &CustomBlocks, raw: u64) -> (&Exact, u64) {
    let cycle = raw / custom.cycle_len;
    let offset = raw % custom.cycle_len;
    let run = custom.run_starts.partition_point(|&s| s <= offset) - 1;
    (&custom.runs[run].value, cycle)
}

// ---------------------------------------------------------------------------
// JSON spec files

/// On-disk series spec:
///
/// ```json
/// {"kind": "explicit_prefix", "params": {"terms": ["0", "2", "-1"]},
///  "leading_zero": false, "arithmetic": "exact"}
/// ```
///
/// Kinds and their `params`:
/// - `escalating_blocks`: optional `seed_targets` (array of rationals)
/// - `square_blocks`: none
/// - `custom_blocks`: `runs` (array of `{"value": "p/q", "count": n}`) and
///   optional `decay` (`"none"` or `"harmonic"`, default `"harmonic"`)
/// - `explicit_prefix`: `terms` (array of rationals); the series continues
///   with zeros after the stored terms
///
/// `leading_zero` defaults to on when the series would otherwise start with
/// a positive term. `arithmetic` defaults to `exact`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leading_zero: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arithmetic: Option<Arithmetic>,
    /// Accepted at top level as an alternative to `params.terms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<String>>,
}

impl SeriesFile {
    pub fn from_json(text: &str) -> Result<Self, SeriesError> {
        serde_json::from_str(text).map_err(|e| SeriesError::Schema(e.to_string()))
    }

    pub fn arithmetic(&self) -> Arithmetic {
        self.arithmetic.unwrap_or(Arithmetic::Exact)
    }

    pub fn to_spec(&self) -> Result<SeriesSpec, SeriesError> {
        let params = match &self.params {
            Value::Null => serde_json::Map::new(),
            Value::Object(map) => map.clone(),
            _ => return Err(SeriesError::Schema("`params` must be an object".into())),
        };
        let allow = |keys: &[&str]| -> Result<(), SeriesError> {
            match params.keys().find(|k| !keys.contains(&k.as_str())) {
                Some(k) => Err(SeriesError::Schema(format!("unknown param `{k}` for kind `{}`", self.kind))),
                None => Ok(()),
            }
        };
        let spec = match self.kind.as_str() {
            "escalating_blocks" => {
                allow(&["seed_targets"])?;
                let seeds = match params.get("seed_targets") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(rational_array(v, "seed_targets")?),
                };
                make_escalating_blocks(seeds)
            }
            "square_blocks" => {
                allow(&[])?;
                make_square_blocks()
            }
            "custom_blocks" => {
                allow(&["runs", "decay"])?;
                let runs = params
                    .get("runs")
                    .and_then(Value::as_array)
                    .ok_or_else(|| SeriesError::Schema("custom_blocks needs a `runs` array".into()))?
                    .iter()
                    .map(parse_run)
                    .collect::<Result<Vec<_>, _>>()?;
                let decay = match params.get("decay") {
                    None => Decay::Harmonic,
                    Some(v) => {
                        serde_json::from_value(v.clone()).map_err(|e| SeriesError::Schema(format!("`decay`: {e}")))?
                    }
                };
                SeriesSpec::custom_blocks(runs, decay)?
            }
            "explicit_prefix" => {
                allow(&["terms"])?;
                let terms = match (params.get("terms"), &self.terms) {
                    (Some(v), None) => rational_array(v, "terms")?,
                    (None, Some(list)) => list.iter().map(|s| parse_exact(s)).collect::<Result<Vec<_>, _>>()?,
                    (Some(_), Some(_)) => return Err(SeriesError::Schema("`terms` given twice".into())),
                    (None, None) => return Err(SeriesError::Schema("explicit_prefix needs a `terms` array".into())),
                };
                SeriesSpec::explicit_prefix(terms)
            }
            other => return Err(SeriesError::Schema(format!(
                "unknown kind `{other}` (expected escalating_blocks, square_blocks, custom_blocks or explicit_prefix)"
            ))),
        };
        if self.terms.is_some() && self.kind != "explicit_prefix" {
            return Err(SeriesError::Schema("top-level `terms` only applies to explicit_prefix".into()));
        }
        Ok(match self.leading_zero {
            Some(on) => spec.with_leading_zero(on),
            None => spec.with_default_leading_zero(),
        })
    }

    /// Describes `spec` in file form (used to echo run configurations).
    pub fn from_spec(spec: &SeriesSpec, arithmetic: Arithmetic) -> Self {
        let render = |v: &Exact| Value::String(v.render());
        let params = match spec.kind() {
            SeriesKind::EscalatingBlocks(esc) if esc.seed_targets().is_empty() => Value::Null,
            SeriesKind::EscalatingBlocks(esc) => serde_json::json!({
                "seed_targets": esc.seed_targets().iter().map(render).collect::<Vec<_>>()
            }),
            SeriesKind::SquareBlocks => Value::Null,
            SeriesKind::CustomBlocks(c) => serde_json::json!({
                "runs": c.runs().iter().map(|r| serde_json::json!({
                    "value": r.value.render(), "count": r.count
                })).collect::<Vec<_>>(),
                "decay": c.decay(),
            }),
            SeriesKind::ExplicitPrefix(terms) => serde_json::json!({
                "terms": terms.iter().map(render).collect::<Vec<_>>()
            }),
        };
        SeriesFile {
            kind: spec.name().to_string(),
            params,
            leading_zero: Some(spec.leading_zero()),
            arithmetic: Some(arithmetic),
            terms: None,
        }
    }
}

fn rational_array(value: &Value, field: &str) -> Result<Vec<Exact>, SeriesError> {
    value
        .as_array()
        .ok_or_else(|| SeriesError::Schema(format!("`{field}` must be an array")))?
        .iter()
        .map(|v| rational_value(v, field))
        .collect()
}

fn rational_value(value: &Value, field: &str) -> Result<Exact, SeriesError> {
    match value {
        Value::String(s) => Ok(parse_exact(s)?),
        Value::Number(n) => Ok(parse_exact(&n.to_string())?),
        _ => Err(SeriesError::Schema(format!("`{field}` entries must be \"p/q\" strings or numbers"))),
    }
}

fn parse_run(value: &Value) -> Result<Run, SeriesError> {
    let obj = value.as_object().ok_or_else(|| SeriesError::Schema("each run must be an object".into()))?;
    let v = obj.get("value").ok_or_else(|| SeriesError::Schema("run missing `value`".into()))?;
    let count = obj
        .get("count")
        .and_then(Value::as_u64)
        .ok_or_else(|| SeriesError::Schema("run needs a positive integer `count`".into()))?;
    Ok(Run { value: rational_value(v, "value")?, count })
}
