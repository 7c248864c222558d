//! Greedy type-R rearrangement toward a target `r`.
//!
//! While the running sum is `<= r` take the first unused positive term,
//! otherwise the first unused non-positive term. Same-class terms are
//! therefore consumed in their original order, so the result is type R by
//! construction. Terms are generated lazily; the generated prefix doubles
//! whenever a pool runs dry, up to a cap.

use std::io::{BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::permutation::{type_r_by_class, PermutationError, PermutationPrefix, TypeRVerdict};
use crate::scalar::{Class, Scalar};
use crate::series::{SeriesError, SeriesSpec};

pub const DEFAULT_HORIZON_CAP: usize = 1 << 24;
const INITIAL_HORIZON: usize = 1 << 10;

#[derive(Debug, Error)]
pub enum RearrangeError {
    #[error("steps must be at least 1")]
    NoSteps,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error("checkpoints must be ascending and within 1..={len}: {bad}")]
    BadCheckpoint { bad: usize, len: usize },
    #[error("trace row {row}: {why}")]
    MalformedTrace { row: usize, why: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GreedyOptions {
    /// Largest generated prefix before a run is cut short.
    pub horizon_cap: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { horizon_cap: DEFAULT_HORIZON_CAP }
    }
}

/// Why a trace stopped before the requested number of steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Truncation {
    /// The series has no further terms of this class at all.
    PoolExhausted { class: Class, step: usize },
    /// No term of this class within the generation cap.
    HorizonCap { class: Class, step: usize, cap: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step<T> {
    pub index: usize,
    pub term: T,
    /// `S^σ_t`, the sum of the first `t + 1` chosen terms.
    pub partial_sum: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Frontier {
    /// No unused positive index lies below this.
    pub positive: usize,
    /// No unused non-positive index lies below this.
    pub negative: usize,
}

#[derive(Clone, Debug)]
pub struct RearrangementTrace<T> {
    target: T,
    steps: Vec<Step<T>>,
    prefix: PermutationPrefix,
    sign_switches: Vec<usize>,
    frontier: Frontier,
    generated_horizon: usize,
    truncated: Option<Truncation>,
}

/// Runs the greedy rule for up to `steps` selections.
pub fn greedy_rearrange<T: Scalar>(
    spec: &SeriesSpec,
    target: &T,
    steps: usize,
    options: GreedyOptions,
) -> Result<RearrangementTrace<T>, RearrangeError> {
    if steps == 0 {
        return Err(RearrangeError::NoSteps);
    }
    let cap = options.horizon_cap.max(1);
    let zero_tail = spec.zero_tail_start();
    let mut terms: Vec<T> = Vec::new();
    let mut classes: Vec<Class> = Vec::new();
    let mut cursor = [0usize, 0usize];
    let mut uncertified = false;

    let mut trace = RearrangementTrace {
        target: target.clone(),
        steps: Vec::with_capacity(steps),
        prefix: PermutationPrefix::new(),
        sign_switches: Vec::new(),
        frontier: Frontier { positive: 0, negative: 0 },
        generated_horizon: 0,
        truncated: None,
    };
    let mut sum = T::zero();

    'steps: for t in 0..steps {
        let want = if sum <= *target { Class::Positive } else { Class::Negative };
        let slot = usize::from(want == Class::Negative);
        loop {
            let c = &mut cursor[slot];
            while *c < classes.len() && classes[*c] != want {
                *c += 1;
            }
            if *c < classes.len() {
                break;
            }
            if want == Class::Positive && zero_tail.is_some_and(|z| *c >= z) {
                trace.truncated = Some(Truncation::PoolExhausted { class: want, step: t });
                break 'steps;
            }
            let have = terms.len();
            if have >= cap || uncertified {
                trace.truncated = Some(Truncation::HorizonCap { class: want, step: t, cap });
                break 'steps;
            }
            let grow_to = (have * 2).max(INITIAL_HORIZON).min(cap);
            for n in have..grow_to {
                match spec.eval_term::<T>(n) {
                    Ok(term) => {
                        classes.push(term.classify());
                        terms.push(term);
                    }
                    Err(SeriesError::Uncertified { .. }) => {
                        uncertified = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let idx = cursor[slot];
        cursor[slot] += 1;
        let term = terms[idx].clone();
        sum.add_assign_ref(&term);
        trace.record(idx, term, sum.clone(), want)?;
    }
    trace.frontier = Frontier { positive: cursor[0], negative: cursor[1] };
    trace.generated_horizon = terms.len();
    Ok(trace)
}

/// Greedy traces for several targets, one work item per target.
pub fn greedy_batch<T: Scalar>(
    spec: &SeriesSpec,
    targets: &[T],
    steps: usize,
    options: GreedyOptions,
    exec: Execution,
) -> Result<Vec<RearrangementTrace<T>>, RearrangeError> {
    exec.try_map(targets, |r| greedy_rearrange(spec, r, steps, options))
}

impl<T: Scalar> RearrangementTrace<T> {
    /// Rebuilds a trace from an explicit choice order, checking each term
    /// against the series. The choices need not follow the greedy rule.
    pub fn from_choices(spec: &SeriesSpec, target: T, choices: &[(usize, T)]) -> Result<Self, RearrangeError> {
        let mut trace = RearrangementTrace {
            target,
            steps: Vec::with_capacity(choices.len()),
            prefix: PermutationPrefix::new(),
            sign_switches: Vec::new(),
            frontier: Frontier { positive: 0, negative: 0 },
            generated_horizon: 0,
            truncated: None,
        };
        let mut sum = T::zero();
        let mut next_unused = [0usize, 0usize];
        for (row, (idx, term)) in choices.iter().enumerate() {
            let expected = spec.eval_term::<T>(*idx)?;
            if expected != *term {
                return Err(RearrangeError::MalformedTrace {
                    row,
                    why: format!("term {} does not match a_{idx} = {}", term.render(), expected.render()),
                });
            }
            let class = term.classify();
            let slot = usize::from(class == Class::Negative);
            next_unused[slot] = next_unused[slot].max(idx + 1);
            sum.add_assign_ref(term);
            trace.record(*idx, term.clone(), sum.clone(), class)?;
            trace.generated_horizon = trace.generated_horizon.max(idx + 1);
        }
        trace.frontier = Frontier { positive: next_unused[0], negative: next_unused[1] };
        Ok(trace)
    }

    fn record(&mut self, index: usize, term: T, partial_sum: T, class: Class) -> Result<(), PermutationError> {
        self.prefix.push_index(index)?;
        if let Some(prev) = self.steps.last() {
            if prev.term.classify() != class {
                self.sign_switches.push(self.steps.len());
            }
        }
        self.steps.push(Step { index, term, partial_sum });
        Ok(())
    }

    pub fn target(&self) -> &T {
        &self.target
    }

    pub fn steps(&self) -> &[Step<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn prefix(&self) -> &PermutationPrefix {
        &self.prefix
    }

    pub fn block_number_sequence(&self) -> &[usize] {
        self.prefix.block_number_sequence()
    }

    pub fn max_block_number(&self) -> usize {
        self.prefix.max_block_number()
    }

    /// Positions `t >= 1` whose chosen class differs from that at `t - 1`.
    pub fn sign_switches(&self) -> &[usize] {
        &self.sign_switches
    }

    pub fn frontier(&self) -> Frontier {
        self.frontier
    }

    pub fn generated_horizon(&self) -> usize {
        self.generated_horizon
    }

    pub fn truncated(&self) -> Option<&Truncation> {
        self.truncated.as_ref()
    }

    /// `S^σ_{t-1}`, zero before the first step.
    pub fn sum_before(&self, t: usize) -> T {
        t.checked_sub(1).map_or_else(T::zero, |p| self.steps[p].partial_sum.clone())
    }

    /// Smallest number of steps after which the block number exceeds `bound`.
    pub fn first_step_exceeding(&self, bound: usize) -> Option<usize> {
        self.block_number_sequence().iter().position(|&c| c > bound).map(|p| p + 1)
    }

    /// Type-R check using the classes of the recorded terms.
    pub fn type_r(&self) -> TypeRVerdict {
        let classes: Vec<Class> = self.steps.iter().map(|s| s.term.classify()).collect();
        type_r_by_class(self.prefix.images(), &classes)
    }

    /// Checks the greedy rule and the running sums at every step; returns
    /// the first offending position.
    pub fn check_rule_conformance(&self) -> Result<(), usize> {
        let mut sum = T::zero();
        for (t, step) in self.steps.iter().enumerate() {
            let want = if sum <= self.target { Class::Positive } else { Class::Negative };
            if step.term.classify() != want {
                return Err(t);
            }
            sum.add_assign_ref(&step.term);
            if sum != step.partial_sum {
                return Err(t);
            }
        }
        Ok(())
    }

    /// At each switch the sum just before it sits within one consumed term
    /// of the target: `|S^σ_{t-1} - r| <= |a_{σ(t-1)}|`. Returns the first
    /// switch position where that fails.
    pub fn check_switch_overshoot(&self) -> Result<(), usize> {
        for &t in &self.sign_switches {
            let err = self.sum_before(t).sub_ref(&self.target).abs();
            if !err.approx_le(&self.steps[t - 1].term.abs()) {
                return Err(t);
            }
        }
        Ok(())
    }

    /// `step,chosen_index,term,partial_sum,block_count`, one row per step
    /// (0-based positions).
    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&str>) -> Result<(), RearrangeError> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "chosen_index", "term", "partial_sum", "block_count"])?;
        for (t, (step, count)) in self.steps.iter().zip(self.block_number_sequence()).enumerate() {
            w.write_record([
                t.to_string(),
                step.index.to_string(),
                step.term.render(),
                step.partial_sum.render(),
                count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self, checkpoints: &[usize]) -> Result<TraceSummary, RearrangeError> {
        let report = convergence_report(self);
        Ok(TraceSummary {
            target: self.target.render(),
            steps: self.len(),
            generated_horizon: self.generated_horizon,
            max_block_number: self.max_block_number(),
            truncated: self.truncated.is_some(),
            truncation: self.truncated.clone(),
            frontier: self.frontier,
            sign_switches: self.sign_switches.len(),
            switch_error_tail: TailSummary {
                switches: report.switch_errors.len() - report.tail_start,
                max_error: report.tail_max_error.as_ref().map(Scalar::render),
                max_term: report.tail_max_term.as_ref().map(Scalar::render),
                bounded_by_term: report.tail_bounded,
                last_error: report.switch_errors.last().map(|(_, e)| e.render()),
            },
            converging_evidence: report.converging_evidence,
            growth_profile: block_growth_profile(self, checkpoints)?,
        })
    }
}

/// `(chosen_index, term)` rows and the comment lines of a trace CSV.
pub type TraceRows<T> = (Vec<(usize, T)>, Vec<String>);

/// Trace CSV rows as `(chosen_index, term)` in file order, plus any
/// leading `#` comment lines. Other columns are recomputed on import.
pub fn read_trace_csv<T: Scalar, R: BufRead>(mut reader: R) -> Result<TraceRows<T>, RearrangeError> {
    let mut comments = Vec::new();
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        match line.strip_prefix('#') {
            Some(c) if body.is_empty() => comments.push(c.trim().to_string()),
            _ => body.push_str(&line),
        }
        line.clear();
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RearrangeError::MalformedTrace { row: 0, why: format!("missing column `{name}`") })
    };
    let (idx_col, term_col) = (col("chosen_index")?, col("term")?);
    let mut rows = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let bad = |why: String| RearrangeError::MalformedTrace { row: row + 1, why };
        let idx = record
            .get(idx_col)
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| bad("chosen_index is not a non-negative integer".into()))?;
        let term = T::parse(record.get(term_col).unwrap_or("")).map_err(|e| bad(e.to_string()))?;
        rows.push((idx, term));
    }
    Ok((rows, comments))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSummary {
    pub switches: usize,
    pub max_error: Option<String>,
    pub max_term: Option<String>,
    pub bounded_by_term: bool,
    pub last_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    pub target: String,
    pub steps: usize,
    pub generated_horizon: usize,
    pub max_block_number: usize,
    pub truncated: bool,
    pub truncation: Option<Truncation>,
    pub frontier: Frontier,
    pub sign_switches: usize,
    pub switch_error_tail: TailSummary,
    pub converging_evidence: bool,
    pub growth_profile: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport<T> {
    /// `(t, |S^σ_{t-1} - r|)` for every switch position `t`.
    pub switch_errors: Vec<(usize, T)>,
    /// First entry of `switch_errors` in the final quarter.
    pub tail_start: usize,
    pub tail_max_error: Option<T>,
    /// Largest `|term|` consumed from the step before the first tail
    /// switch to the end of the trace.
    pub tail_max_term: Option<T>,
    /// Every tail switch error is at most `tail_max_term`.
    pub tail_bounded: bool,
    /// False when the trace never switches sign or the tail bound fails.
    pub converging_evidence: bool,
}

pub fn convergence_report<T: Scalar>(trace: &RearrangementTrace<T>) -> ConvergenceReport<T> {
    let switch_errors: Vec<(usize, T)> =
        trace.sign_switches().iter().map(|&t| (t, trace.sum_before(t).sub_ref(trace.target()).abs())).collect();
    let tail_start = switch_errors.len() - switch_errors.len().div_ceil(4);
    let tail = &switch_errors[tail_start..];
    let tail_max_error =
        tail.iter().map(|(_, e)| e).fold(None, |acc: Option<&T>, e| Some(acc.map_or(e, |a| a.max_ref(e))));
    let tail_max_term = tail.first().map(|&(t, _)| {
        trace.steps()[t - 1..].iter().map(|s| s.term.abs()).fold(T::zero(), |acc, x| if x > acc { x } else { acc })
    });
    let tail_bounded = match &tail_max_term {
        Some(m) => tail.iter().all(|(_, e)| e.approx_le(m)),
        None => false,
    };
    ConvergenceReport {
        tail_max_error: tail_max_error.cloned(),
        tail_max_term,
        tail_bounded,
        converging_evidence: !switch_errors.is_empty() && tail_bounded,
        switch_errors,
        tail_start,
    }
}

/// Running maximum of the block number after each checkpoint's step count.
pub fn block_growth_profile<T: Scalar>(
    trace: &RearrangementTrace<T>,
    checkpoints: &[usize],
) -> Result<Vec<(usize, usize)>, RearrangeError> {
    let seq = trace.block_number_sequence();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut running = 0;
    let mut consumed = 0;
    for &c in checkpoints {
        if c == 0 || c > seq.len() || c < consumed {
            return Err(RearrangeError::BadCheckpoint { bad: c, len: seq.len() });
        }
        running = seq[consumed..c].iter().copied().fold(running, usize::max);
        consumed = c;
        out.push((c, running));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use crate::series::{make_escalating_blocks, make_square_blocks};
    use num_rational::BigRational;

    fn q(p: i64, d: i64) -> Exact {
        BigRational::new(p.into(), d.into())
    }

    /// Step-by-step simulation over an explicit term list with a used-set.
    fn simulate(terms: &[Exact], r: &Exact, steps: usize) -> Vec<(usize, Exact)> {
        let mut used = vec![false; terms.len()];
        let mut sum = Exact::zero();
        let mut out = Vec::new();
        for _ in 0..steps {
            let positive = sum <= *r;
            let pick = (0..terms.len()).find(|&i| !used[i] && (terms[i] > Exact::zero()) == positive);
            let Some(i) = pick else { break };
            used[i] = true;
            sum += &terms[i];
            out.push((i, sum.clone()));
        }
        out
    }

    #[test]
    fn explicit_prefix_hand_simulation() {
        let terms = vec![q(0, 1), q(2, 1), q(-1, 1), q(1, 1), q(-3, 1)];
        let spec = SeriesSpec::explicit_prefix(terms.clone());
        let trace = greedy_rearrange(&spec, &Exact::zero(), 5, GreedyOptions::default()).unwrap();
        let got: Vec<(usize, Exact)> = trace.steps().iter().map(|s| (s.index, s.partial_sum.clone())).collect();
        assert_eq!(got, simulate(&terms, &Exact::zero(), 5));
        // the zero term is the first unused non-positive index
        let indices: Vec<usize> = trace.steps().iter().map(|s| s.index).collect();
        assert_eq!(indices, vec![1, 0, 2, 4, 3]);
        let sums: Vec<Exact> = trace.steps().iter().map(|s| s.partial_sum.clone()).collect();
        assert_eq!(sums, vec![q(2, 1), q(2, 1), q(1, 1), q(-2, 1), q(-1, 1)]);
        assert!(trace.truncated().is_none());
    }

    #[test]
    fn unreachable_target_exhausts_positive_pool() {
        let spec = SeriesSpec::explicit_prefix(vec![q(1, 1), q(-1, 1), q(1, 2)]);
        let trace = greedy_rearrange(&spec, &q(100, 1), 10, GreedyOptions::default()).unwrap();
        assert_eq!(trace.len(), 2);
        assert!(trace.steps().iter().all(|s| s.term > Exact::zero()));
        assert!(matches!(trace.truncated(), Some(Truncation::PoolExhausted { class: Class::Positive, step: 2 })));
        let report = convergence_report(&trace);
        assert!(report.switch_errors.is_empty());
        assert!(!report.converging_evidence);
    }

    #[test]
    fn horizon_cap_truncates() {
        // r far above anything reachable in 64 terms
        let opts = GreedyOptions { horizon_cap: 64 };
        let trace = greedy_rearrange(&make_square_blocks(), &q(1000, 1), 10_000, opts).unwrap();
        assert!(matches!(trace.truncated(), Some(Truncation::HorizonCap { class: Class::Positive, cap: 64, .. })));
        assert!(trace.generated_horizon() <= 64);
    }

    #[test]
    fn matches_simulation_on_builtins() {
        for spec in [make_square_blocks(), make_escalating_blocks(None).with_leading_zero(true)] {
            let terms = spec.generate_prefix::<Exact>(400).unwrap();
            for r in [q(0, 1), q(1, 1), q(-3, 2), q(7, 3)] {
                let expect = simulate(&terms, &r, 120);
                let trace = greedy_rearrange(&spec, &r, 120, GreedyOptions::default()).unwrap();
                let got: Vec<(usize, Exact)> = trace.steps().iter().map(|s| (s.index, s.partial_sum.clone())).collect();
                assert_eq!(got, expect, "{spec} r={r}");
                assert_eq!(trace.check_rule_conformance(), Ok(()));
                assert!(trace.type_r().is_type_r());
                assert_eq!(trace.check_switch_overshoot(), Ok(()));
            }
        }
    }

    #[test]
    fn square_blocks_at_zero_keep_two_blocks() {
        let trace = greedy_rearrange(&make_square_blocks(), &Exact::zero(), 10_000, GreedyOptions::default()).unwrap();
        assert_eq!(trace.max_block_number(), 2);
        let profile = block_growth_profile(&trace, &[10, 100, 1000, 10_000]).unwrap();
        assert_eq!(profile, vec![(10, 2), (100, 2), (1000, 2), (10_000, 2)]);
        let report = convergence_report(&trace);
        assert!(report.tail_bounded);
    }

    #[test]
    fn identity_like_trace_profile() {
        // all-positive prefix chosen in order never splits
        let spec = SeriesSpec::explicit_prefix((1..=50).map(|k| q(1, k)).collect());
        let trace = greedy_rearrange(&spec, &q(100, 1), 50, GreedyOptions::default()).unwrap();
        assert_eq!(block_growth_profile(&trace, &[1, 25, 50]).unwrap(), vec![(1, 1), (25, 1), (50, 1)]);
        assert!(block_growth_profile(&trace, &[5, 3]).is_err());
        assert!(block_growth_profile(&trace, &[51]).is_err());
        assert!(block_growth_profile(&trace, &[0]).is_err());
    }

    #[test]
    fn float_and_exact_agree_on_early_choices() {
        let spec = make_escalating_blocks(None);
        let exact = greedy_rearrange(&spec, &q(3, 1), 2000, GreedyOptions::default()).unwrap();
        let float = greedy_rearrange(&spec, &3.0f64, 2000, GreedyOptions::default()).unwrap();
        let a: Vec<usize> = exact.steps().iter().map(|s| s.index).collect();
        let b: Vec<usize> = float.steps().iter().map(|s| s.index).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_rebuilds_trace() {
        let spec = make_square_blocks();
        let trace = greedy_rearrange(&spec, &q(1, 3), 300, GreedyOptions::default()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, Some("{\"x\":1}")).unwrap();
        let (rows, comments) = read_trace_csv::<Exact, _>(buf.as_slice()).unwrap();
        assert_eq!(comments, vec!["{\"x\":1}".to_string()]);
        let rebuilt = RearrangementTrace::from_choices(&spec, q(1, 3), &rows).unwrap();
        assert_eq!(rebuilt.steps(), trace.steps());
        assert_eq!(rebuilt.block_number_sequence(), trace.block_number_sequence());
        assert_eq!(rebuilt.sign_switches(), trace.sign_switches());
    }

    #[test]
    fn import_rejects_mismatched_terms() {
        let spec = make_square_blocks();
        let err = RearrangementTrace::from_choices(&spec, Exact::zero(), &[(0, q(1, 2))]).unwrap_err();
        assert!(matches!(err, RearrangeError::MalformedTrace { row: 0, .. }));
        let err = RearrangementTrace::from_choices(&spec, Exact::zero(), &[(0, q(1, 1)), (0, q(1, 1))]).unwrap_err();
        assert!(matches!(err, RearrangeError::Permutation(PermutationError::Duplicate { .. })));
        assert!(read_trace_csv::<Exact, _>("step,term\n0,1\n".as_bytes()).is_err());
        assert!(read_trace_csv::<Exact, _>("chosen_index,term\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_steps_is_an_error() {
        assert!(matches!(
            greedy_rearrange(&make_square_blocks(), &Exact::zero(), 0, GreedyOptions::default()),
            Err(RearrangeError::NoSteps)
        ));
    }
}
