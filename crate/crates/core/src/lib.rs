//! Type-R rearrangements of conditionally divergent series.
//!
//! - [`series`]: deterministic term generators (built-in and user-defined)
//! - [`blocks`]: maximal same-sign block decomposition with cached sums
//! - [`permutation`]: permutation prefixes with an online block-number
//!   counter and the type-R order check
//! - [`sandwich`]: the two-sided bound at negative block ends
//! - [`rearrange`]: the greedy type-R rearrangement toward a target
//! - [`scan`]: finite-horizon scans for the substantial properties and the
//!   reachable-sum classification hint
//! - [`exec`]: parallel/sequential execution of independent work items

pub mod blocks;
pub mod exec;
mod harmonic;
pub mod permutation;
pub mod rearrange;
pub mod sandwich;
pub mod scalar;
pub mod scan;
pub mod series;

pub use blocks::{decompose_blocks, decompose_until_blocks, Block, BlockDecomposition, BlockError};
pub use exec::Execution;
pub use permutation::{is_type_r, PermutationError, PermutationPrefix, TypeRVerdict};
pub use rearrange::{
    block_growth_profile, convergence_report, greedy_batch, greedy_rearrange, read_trace_csv, ConvergenceReport,
    GreedyOptions, RearrangeError, RearrangementTrace, Truncation,
};
pub use sandwich::{decomposition_for_trace, verify_sandwich, SandwichError, SandwichReport, SandwichStatus};
pub use scalar::{Arithmetic, Class, Exact, Scalar};
pub use scan::{
    classify_zr_hint, default_i0_grid, fixing_evidence, scan_substantial, window_sums, ScanVerdict, SubstantialReport,
    ZrHint,
};
pub use series::{make_escalating_blocks, make_square_blocks, SeriesError, SeriesFile, SeriesSpec};
