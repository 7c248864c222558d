//! Finite-horizon evidence for the substantial properties.
//!
//! `ST_P` asks for `k`, `ε > 0` and `i0` with `S_[P_i, P_{i+k}] >= ε` for all
//! `i > i0` (symmetrically `<= -ε` for negative blocks). From a finite
//! decomposition we can only report the minimum window magnitude over
//! `[i0, B-k]` and whether it holds steady across growing sub-horizons.

use std::fmt;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::blocks::{BlockDecomposition, BlockError};
use crate::exec::Execution;
use crate::rearrange::RearrangementTrace;
use crate::scalar::{Class, Scalar};

/// Minimum of `|S_[i, i+k]|` over `i` in `[i0, horizon - k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubHorizonMin<T> {
    pub horizon: usize,
    /// `None` when the window range is empty at this horizon.
    pub min: Option<(T, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanCell<T> {
    pub k: usize,
    pub i0: usize,
    /// Sub-horizons `B/4`, `B/2`, `B`, in that order.
    pub horizons: Vec<SubHorizonMin<T>>,
    pub stable: bool,
}

impl<T: Scalar> ScanCell<T> {
    /// Minimum and argmin at the full horizon.
    pub fn full(&self) -> Option<&(T, usize)> {
        self.horizons.last().and_then(|h| h.min.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScanVerdict<T> {
    WitnessFound { k: usize, epsilon: T, i0: usize },
    NoWitnessAtHorizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubstantialReport<T> {
    pub kind: Class,
    pub horizon_blocks: usize,
    pub k_max: usize,
    pub i0_grid: Vec<usize>,
    /// Ordered by `k`, then by position in `i0_grid`.
    pub cells: Vec<ScanCell<T>>,
    pub verdict: ScanVerdict<T>,
    pub analytic_override: Option<bool>,
}

/// `{1, B/10, B/4}` without duplicates, each at least 1.
pub fn default_i0_grid(blocks: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [1, blocks / 10, blocks / 4].into_iter().map(|i| i.max(1)).collect();
    grid.dedup();
    grid
}

/// `S_[kind_i, kind_{i+k}]` for each `i` in `first..=last`, summing the
/// cached block sums directly.
pub fn window_sums<T: Scalar>(
    decomp: &BlockDecomposition<T>,
    kind: Class,
    k: usize,
    first: usize,
    last: usize,
) -> Result<Vec<T>, BlockError> {
    if first == 0 || first > last {
        return Err(BlockError::InvalidRange { kind, first, last });
    }
    let sums = block_sums(decomp, kind, last + k)?;
    Ok((first..=last).map(|i| window(&sums, i, k)).collect())
}

fn block_sums<T: Scalar>(decomp: &BlockDecomposition<T>, kind: Class, upto: usize) -> Result<Vec<T>, BlockError> {
    let available = decomp.complete_count(kind);
    if upto > available {
        return Err(BlockError::OutOfRange { kind, index: upto, available });
    }
    Ok(decomp.complete_blocks(kind).take(upto).map(|b| b.sum.clone()).collect())
}

/// Window starting at 1-based label `i` over `sums` (0-based storage).
fn window<T: Scalar>(sums: &[T], i: usize, k: usize) -> T {
    let mut acc = T::zero();
    for s in &sums[i - 1..i + k] {
        acc.add_assign_ref(s);
    }
    acc
}

fn scan_cell<T: Scalar>(sums: &[T], k: usize, i0: usize, blocks: usize) -> ScanCell<T> {
    let subs = [blocks / 4, blocks / 2, blocks];
    let mut horizons: Vec<SubHorizonMin<T>> = Vec::with_capacity(3);
    // running minimum, extended from one sub-horizon to the next
    let mut best: Option<(T, usize)> = None;
    let mut next_i = i0;
    for &h in &subs {
        while next_i + k <= h {
            let m = window(sums, next_i, k).abs();
            if best.as_ref().is_none_or(|(b, _)| m < *b) {
                best = Some((m, next_i));
            }
            next_i += 1;
        }
        horizons.push(SubHorizonMin { horizon: h, min: best.clone() });
    }
    let stable = match (&horizons[0].min, &horizons[1].min, &horizons[2].min) {
        (Some((a, _)), Some((b, _)), Some((c, _))) => {
            c.is_positive() && a.stable_eq(b) && b.stable_eq(c) && a.stable_eq(c)
        }
        _ => false,
    };
    ScanCell { k, i0, horizons, stable }
}

/// Scans every `(k, i0)` cell with `k <= k_max` over the complete blocks of
/// one kind. Cells are independent and run under `exec`.
pub fn scan_substantial<T: Scalar>(
    decomp: &BlockDecomposition<T>,
    kind: Class,
    k_max: usize,
    i0_grid: &[usize],
    exec: Execution,
) -> Result<SubstantialReport<T>, BlockError> {
    let blocks = decomp.complete_count(kind);
    let mut grid: Vec<usize> = i0_grid.iter().map(|&i| i.max(1)).collect();
    grid.dedup();
    if grid.is_empty() {
        grid.push(1);
    }
    let needed = k_max + grid.iter().copied().max().unwrap_or(1);
    if blocks < needed {
        return Err(BlockError::InsufficientBlocks { needed, found: blocks, horizon: decomp.horizon() });
    }
    let sums = block_sums(decomp, kind, blocks)?;
    let work: Vec<(usize, usize)> = (0..=k_max).flat_map(|k| grid.iter().map(move |&i0| (k, i0))).collect();
    let cells = exec.map(&work, |&(k, i0)| scan_cell(&sums, k, i0, blocks));
    let verdict = cells
        .iter()
        .find(|c| c.stable)
        .and_then(|c| c.full().map(|(eps, _)| ScanVerdict::WitnessFound { k: c.k, epsilon: eps.clone(), i0: c.i0 }))
        .unwrap_or(ScanVerdict::NoWitnessAtHorizon);
    Ok(SubstantialReport {
        kind,
        horizon_blocks: blocks,
        k_max,
        i0_grid: grid,
        cells,
        verdict,
        analytic_override: None,
    })
}

impl<T: Scalar> SubstantialReport<T> {
    pub fn with_analytic_override(mut self, value: Option<bool>) -> Self {
        self.analytic_override = value;
        self
    }

    pub fn witness_found(&self) -> bool {
        matches!(self.verdict, ScanVerdict::WitnessFound { .. })
    }

    /// The analytic status when known, otherwise the scanned verdict.
    pub fn effective(&self) -> bool {
        self.analytic_override.unwrap_or_else(|| self.witness_found())
    }

    pub fn cell(&self, k: usize, i0: usize) -> Option<&ScanCell<T>> {
        self.cells.iter().find(|c| c.k == k && c.i0 == i0)
    }

    /// `(k, min, argmin)` at the full horizon for one `i0`.
    pub fn per_k(&self, i0: usize) -> Vec<(usize, Option<(T, usize)>)> {
        self.cells.iter().filter(|c| c.i0 == i0).map(|c| (c.k, c.full().cloned())).collect()
    }

    pub fn to_json(&self) -> Value {
        let min_json = |m: &Option<(T, usize)>| match m {
            Some((v, i)) => json!({ "min_window": v.render(), "argmin_i": i }),
            None => Value::Null,
        };
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|c| {
                json!({
                    "k": c.k,
                    "i0": c.i0,
                    "stable": c.stable,
                    "sub_horizons": c.horizons.iter().map(|h| json!({
                        "horizon": h.horizon,
                        "min": min_json(&h.min),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        let verdict = match &self.verdict {
            ScanVerdict::WitnessFound { k, epsilon, i0 } => {
                json!({ "result": "witness_found", "k": k, "epsilon": epsilon.render(), "i0": i0 })
            }
            ScanVerdict::NoWitnessAtHorizon => json!({ "result": "no_witness_at_horizon" }),
        };
        json!({
            "kind": self.kind.label(),
            "horizon_blocks": self.horizon_blocks,
            "k_max": self.k_max,
            "i0_grid": self.i0_grid,
            "per_k": cells,
            "verdict": verdict,
            "analytic_override": self.analytic_override,
        })
    }

    /// `kind,k,i0,min_window,argmin_i` at the full horizon.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        for c in &self.cells {
            let (min, arg) = match c.full() {
                Some((v, i)) => (v.render(), i.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([self.kind.label().to_string(), c.k.to_string(), c.i0.to_string(), min, arg])?;
        }
        Ok(())
    }
}

pub const SCAN_CSV_HEADER: [&str; 5] = ["kind", "k", "i0", "min_window", "argmin_i"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZrHint {
    Empty,
    Real,
    Singleton,
}

impl ZrHint {
    pub const CAVEAT: &'static str = "finite-horizon heuristic, not a decision";
}

impl fmt::Display for ZrHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZrHint::Empty => "hint: Z_R = ∅",
            ZrHint::Real => "hint: Z_R = ℝ",
            ZrHint::Singleton => "hint: Z_R singleton",
        })
    }
}

pub fn classify_zr_hint<T: Scalar>(
    positive: &SubstantialReport<T>,
    negative: &SubstantialReport<T>,
    fixing_evidence: bool,
) -> ZrHint {
    if !fixing_evidence {
        ZrHint::Empty
    } else if positive.effective() && negative.effective() {
        ZrHint::Real
    } else {
        ZrHint::Singleton
    }
}

/// Whether a finite trace looks like it fixes the series: not truncated,
/// switching with errors bounded by the consumed terms, and a block number
/// that stopped growing over the second half.
pub fn fixing_evidence<T: Scalar>(trace: &RearrangementTrace<T>) -> bool {
    let seq = trace.block_number_sequence();
    if trace.truncated().is_some() || seq.len() < 2 {
        return false;
    }
    let half = seq.len() / 2;
    let first_half_max = seq[..half].iter().copied().max().unwrap_or(0);
    crate::rearrange::convergence_report(trace).converging_evidence && trace.max_block_number() <= first_half_max
}
