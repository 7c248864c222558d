//! Checks the two-sided bound relating a type-R rearrangement with block
//! number `C` to the original series at the end of each negative block:
//!
//! `S_[N_1,N_i] + S_[P_1,P_{i-C}] <= S^σ_{m_i} <= S_[N_1,N_i] + S_[P_1,P_{i+C-1}]`
//!
//! where `S^σ_{m_i}` is the rearranged partial sum at the step that consumes
//! `m_i`, the last index of `N_i`. Positive ranges with upper label `<= 0`
//! are empty and contribute zero.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::blocks::{decompose_blocks, BlockDecomposition, BlockError};
use crate::permutation::TypeRVerdict;
use crate::rearrange::RearrangementTrace;
use crate::scalar::{Class, Scalar};
use crate::series::{SeriesError, SeriesSpec};

#[derive(Debug, Error)]
pub enum SandwichError {
    #[error("block bound C must be at least 1")]
    ZeroBound,
    #[error("trace is not type R: positions {first} and {second} take same-class indices out of order")]
    NotTypeR { first: usize, second: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SandwichStatus {
    Pass,
    Fail,
    /// A positive range in the bound runs past the decomposed horizon.
    Unverifiable,
}

impl SandwichStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SandwichStatus::Pass => "pass",
            SandwichStatus::Fail => "fail",
            SandwichStatus::Unverifiable => "unverifiable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SandwichRow<T> {
    /// Label of the negative block.
    pub i: usize,
    /// 0-based trace position that consumed `m_i`.
    pub step: usize,
    pub lower: Option<T>,
    pub value: T,
    pub upper: Option<T>,
    pub status: SandwichStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SandwichReport<T> {
    pub bound: usize,
    /// The bound is proved for series whose first block is negative; for
    /// other series the check is still evaluated literally.
    pub starts_negative: bool,
    pub rows: Vec<SandwichRow<T>>,
}

impl<T: Scalar> SandwichReport<T> {
    pub fn count(&self, status: SandwichStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SandwichRow<T>> + '_ {
        self.rows.iter().filter(|r| r.status == SandwichStatus::Fail)
    }

    pub fn all_verifiable_pass(&self) -> bool {
        self.count(SandwichStatus::Fail) == 0
    }

    /// `i,step,lower,value,upper,status`; missing bounds are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&str>) -> Result<(), SandwichError> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "step", "lower", "value", "upper", "status"])?;
        for row in &self.rows {
            w.write_record([
                row.i.to_string(),
                row.step.to_string(),
                row.lower.as_ref().map(Scalar::render).unwrap_or_default(),
                row.value.render(),
                row.upper.as_ref().map(Scalar::render).unwrap_or_default(),
                row.status.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decomposition covering twice the largest index a trace consumed, so
/// upper ranges past the trace's frontier can still be checked. Falls back
/// to exactly the consumed range where terms further out are unavailable.
pub fn decomposition_for_trace<T: Scalar>(
    spec: &SeriesSpec,
    trace: &RearrangementTrace<T>,
) -> Result<BlockDecomposition<T>, BlockError> {
    let consumed = trace.steps().iter().map(|s| s.index + 1).max().unwrap_or(1);
    match decompose_blocks(spec, consumed.saturating_mul(2)) {
        Err(BlockError::Series(SeriesError::Uncertified { .. })) => decompose_blocks(spec, consumed),
        other => other,
    }
}

/// Checks every complete negative block whose last index the trace consumed.
pub fn verify_sandwich<T: Scalar>(
    trace: &RearrangementTrace<T>,
    decomp: &BlockDecomposition<T>,
    bound: usize,
) -> Result<SandwichReport<T>, SandwichError> {
    if bound == 0 {
        return Err(SandwichError::ZeroBound);
    }
    if let TypeRVerdict::Violation { first, second } = trace.type_r() {
        return Err(SandwichError::NotTypeR { first, second });
    }
    let ends: Vec<usize> = decomp.complete_blocks(Class::Negative).map(|b| b.end).collect();
    let positives = decomp.complete_count(Class::Positive);
    let mut rows = Vec::new();
    let mut next = 0;
    for (step, s) in trace.steps().iter().enumerate() {
        if next == ends.len() {
            break;
        }
        // negatives are consumed in index order, so ends are hit in order
        if s.index != ends[next] {
            continue;
        }
        next += 1;
        let i = next;
        let base = decomp.leading_sum(Class::Negative, i).expect("label within complete negative blocks");
        let with_positives = |j: usize| {
            (j <= positives).then(|| {
                let mut b = base.clone();
                b.add_assign_ref(&decomp.leading_sum(Class::Positive, j).expect("checked"));
                b
            })
        };
        let lower = with_positives(i.saturating_sub(bound));
        let upper = with_positives(i + bound - 1);
        let value = s.partial_sum.clone();
        let status = match (&lower, &upper) {
            (Some(lo), Some(hi)) => {
                if lo.approx_le(&value) && value.approx_le(hi) {
                    SandwichStatus::Pass
                } else {
                    SandwichStatus::Fail
                }
            }
            // a lower bound that already fails is a failure regardless
            (Some(lo), None) if !lo.approx_le(&value) => SandwichStatus::Fail,
            _ => SandwichStatus::Unverifiable,
        };
        rows.push(SandwichRow { i, step, lower, value, upper, status });
    }
    Ok(SandwichReport { bound, starts_negative: decomp.starts_with() == Some(Class::Negative), rows })
}
