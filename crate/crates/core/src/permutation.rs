//! Permutation prefixes and the block number sequence.
//!
//! The block number after step `t` is the number of maximal runs of
//! consecutive integers in `{σ(0), ..., σ(t)}`. The chosen set is kept as a
//! canonical interval cover (start -> inclusive end), so each push costs
//! O(log #intervals) and changes the count by -1, 0 or +1.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::scalar::Class;
use crate::series::{SeriesError, SeriesSpec};

type Interval = (usize, usize);

#[derive(Debug, Error)]
pub enum PermutationError {
    #[error("index {index} already chosen (at step {step})")]
    Duplicate { index: usize, step: usize },
    #[error("line {line}: `{text}` is not a non-negative integer index")]
    Malformed { line: usize, text: String },
    #[error("one-based input contains index 0 at line {line}")]
    ZeroInOneBased { line: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PermutationPrefix {
    images: Vec<usize>,
    intervals: BTreeMap<usize, usize>,
    block_counts: Vec<usize>,
    max_block: usize,
}

impl PermutationPrefix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_images<I: IntoIterator<Item = usize>>(images: I) -> Result<Self, PermutationError> {
        let mut prefix = Self::new();
        for idx in images {
            prefix.push_index(idx)?;
        }
        Ok(prefix)
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Current interval cover as inclusive `(start, end)` pairs, ascending.
    pub fn merged_intervals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.intervals.iter().map(|(&s, &e)| (s, e))
    }

    pub fn block_count(&self) -> usize {
        self.intervals.len()
    }

    pub fn block_number_sequence(&self) -> &[usize] {
        &self.block_counts
    }

    /// Largest block number seen so far (0 for the empty prefix).
    pub fn max_block_number(&self) -> usize {
        self.max_block
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.intervals.range(..=idx).next_back().is_some_and(|(_, &end)| end >= idx)
    }

    /// Stored intervals ending at `idx - 1` and starting at `idx + 1`.
    fn neighbours(&self, idx: usize) -> (Option<Interval>, Option<Interval>) {
        let left = idx
            .checked_sub(1)
            .and_then(|p| self.intervals.range(..=p).next_back())
            .filter(|(_, &end)| end + 1 == idx)
            .map(|(&s, &e)| (s, e));
        let right = idx.checked_add(1).and_then(|n| self.intervals.get(&n).map(|&e| (n, e)));
        (left, right)
    }

    fn duplicate(&self, idx: usize) -> PermutationError {
        let step = self.images.iter().position(|&i| i == idx).unwrap_or(0);
        PermutationError::Duplicate { index: idx, step }
    }

    /// Change in block count that pushing `idx` would cause.
    pub fn block_count_delta(&self, idx: usize) -> Result<i8, PermutationError> {
        if self.contains(idx) {
            return Err(self.duplicate(idx));
        }
        Ok(match self.neighbours(idx) {
            (None, None) => 1,
            (Some(_), Some(_)) => -1,
            _ => 0,
        })
    }

    pub fn push_index(&mut self, idx: usize) -> Result<(), PermutationError> {
        if self.contains(idx) {
            return Err(self.duplicate(idx));
        }
        match self.neighbours(idx) {
            (None, None) => {
                self.intervals.insert(idx, idx);
            }
            (Some((ls, _)), None) => {
                self.intervals.insert(ls, idx);
            }
            (None, Some((rs, re))) => {
                self.intervals.remove(&rs);
                self.intervals.insert(idx, re);
            }
            (Some((ls, _)), Some((rs, re))) => {
                self.intervals.remove(&rs);
                self.intervals.insert(ls, re);
            }
        }
        self.images.push(idx);
        let count = self.intervals.len();
        self.block_counts.push(count);
        self.max_block = self.max_block.max(count);
        Ok(())
    }

    /// Reads newline-delimited indices; blank lines and `#` comments are skipped.
    pub fn read_indices<R: BufRead>(reader: R, one_based: bool) -> Result<Vec<usize>, PermutationError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let value: usize =
                text.parse().map_err(|_| PermutationError::Malformed { line: i + 1, text: text.to_string() })?;
            if one_based {
                if value == 0 {
                    return Err(PermutationError::ZeroInOneBased { line: i + 1 });
                }
                out.push(value - 1);
            } else {
                out.push(value);
            }
        }
        Ok(out)
    }

    pub fn write_indices<W: Write>(&self, mut out: W, one_based: bool) -> std::io::Result<()> {
        let shift = usize::from(one_based);
        for &idx in &self.images {
            writeln!(out, "{}", idx + shift)?;
        }
        Ok(())
    }

    /// `step,chosen_index,block_count`; `one_based` shifts steps and indices.
    pub fn write_block_sequence_csv<W: Write>(
        &self,
        mut out: W,
        one_based: bool,
        header: Option<&str>,
    ) -> Result<(), PermutationError> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        let shift = usize::from(one_based);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "chosen_index", "block_count"])?;
        for (t, (&idx, &count)) in self.images.iter().zip(&self.block_counts).enumerate() {
            w.write_record([(t + shift).to_string(), (idx + shift).to_string(), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of the type-R order check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeRVerdict {
    TypeR,
    /// Positions `i < j` of the same class with `σ(i) > σ(j)`.
    Violation {
        first: usize,
        second: usize,
    },
}

impl TypeRVerdict {
    pub fn is_type_r(&self) -> bool {
        matches!(self, TypeRVerdict::TypeR)
    }
}

/// Checks that same-class indices are chosen in increasing order, given the
/// class of each chosen index.
///
/// Reports the earliest position `j` that breaks the order, paired with the
/// earliest same-class position before it holding a larger index.
pub fn type_r_by_class(images: &[usize], classes: &[Class]) -> TypeRVerdict {
    debug_assert_eq!(images.len(), classes.len());
    let mut last: [Option<usize>; 2] = [None, None];
    for (j, (&idx, &class)) in images.iter().zip(classes).enumerate() {
        let slot = usize::from(class == Class::Negative);
        if let Some(prev) = last[slot] {
            if idx < prev {
                let first = (0..j).find(|&i| classes[i] == class && images[i] > idx).unwrap_or(j);
                return TypeRVerdict::Violation { first, second: j };
            }
        }
        last[slot] = Some(idx);
    }
    TypeRVerdict::TypeR
}

pub fn is_type_r(prefix: &PermutationPrefix, spec: &SeriesSpec) -> Result<TypeRVerdict, SeriesError> {
    let classes = prefix.images().iter().map(|&idx| spec.classify(idx)).collect::<Result<Vec<_>, _>>()?;
    Ok(type_r_by_class(prefix.images(), &classes))
}
