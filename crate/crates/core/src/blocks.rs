//! Maximal same-sign blocks of a series prefix.
//!
//! Indices `[0, horizon)` split into alternating runs `P_i = [p_i, q_i]`
//! (terms `> 0`) and `N_i = [n_i, m_i]` (terms `<= 0`). Labels are 1-based
//! per kind. Block sums, block-end partial sums and per-kind cumulative
//! sums are cached at construction so range queries are O(1).

use std::io::Write;

use thiserror::Error;

use crate::scalar::{Class, Scalar};
use crate::series::{SeriesError, SeriesSpec};

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("block {kind}_{index} is not a complete block ({available} complete {kind} blocks)")]
    OutOfRange { kind: Class, index: usize, available: usize },
    #[error("empty block range {kind}_{first}..{kind}_{last}")]
    InvalidRange { kind: Class, first: usize, last: usize },
    #[error("need {needed} complete blocks of each kind, only {found} reachable within {horizon} terms")]
    InsufficientBlocks { needed: usize, found: usize, horizon: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub class: Class,
    /// 1-based label within its kind.
    pub label: usize,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub sum: T,
    /// Partial sum of the series through `end`.
    pub partial_sum: T,
    /// False for a trailing block that may continue past the horizon.
    pub complete: bool,
}

impl<T> Block<T> {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }
}

#[derive(Clone, Debug)]
pub struct BlockDecomposition<T> {
    blocks: Vec<Block<T>>,
    /// Positions in `blocks` of the positive / negative blocks.
    by_kind: [Vec<usize>; 2],
    /// `cumulative[k][i]` = sum of the first `i` complete blocks of kind `k`.
    cumulative: [Vec<T>; 2],
    horizon: usize,
}

fn slot(kind: Class) -> usize {
    match kind {
        Class::Positive => 0,
        Class::Negative => 1,
    }
}

/// Incremental construction from a stream of terms.
#[derive(Debug)]
pub struct DecompositionBuilder<T> {
    blocks: Vec<Block<T>>,
    running: T,
    len: usize,
    started: [usize; 2],
    complete: [usize; 2],
}

impl<T: Scalar> Default for DecompositionBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> DecompositionBuilder<T> {
    pub fn new() -> Self {
        DecompositionBuilder { blocks: Vec::new(), running: T::zero(), len: 0, started: [0, 0], complete: [0, 0] }
    }

    pub fn push(&mut self, term: T) {
        let class = term.classify();
        let index = self.len;
        match self.blocks.last_mut() {
            Some(last) if last.class == class => {
                last.end = index;
                last.sum.add_assign_ref(&term);
            }
            _ => {
                if let Some(last) = self.blocks.last_mut() {
                    last.partial_sum = self.running.clone();
                    last.complete = true;
                    self.complete[slot(last.class)] += 1;
                }
                self.started[slot(class)] += 1;
                let label = self.started[slot(class)];
                self.blocks.push(Block {
                    class,
                    label,
                    start: index,
                    end: index,
                    sum: term.clone(),
                    partial_sum: T::zero(),
                    complete: false,
                });
            }
        }
        self.running.add_assign_ref(&term);
        self.len += 1;
    }

    /// Complete blocks of `kind` so far (the open trailing block excluded).
    pub fn complete_blocks(&self, kind: Class) -> usize {
        self.complete[slot(kind)]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `next` is the class of the term just past the horizon, when known;
    /// the trailing block is complete iff it is the opposite class.
    pub fn finish(mut self, next: Option<Class>) -> BlockDecomposition<T> {
        if let Some(last) = self.blocks.last_mut() {
            last.partial_sum = self.running.clone();
            last.complete = next.is_some_and(|c| c != last.class);
        }
        let mut by_kind = [Vec::new(), Vec::new()];
        for (pos, block) in self.blocks.iter().enumerate() {
            by_kind[slot(block.class)].push(pos);
        }
        let cumulative = [0, 1].map(|k| {
            let mut acc = T::zero();
            let mut out = vec![T::zero()];
            for &pos in &by_kind[k] {
                let block = &self.blocks[pos];
                if !block.complete {
                    break;
                }
                acc.add_assign_ref(&block.sum);
                out.push(acc.clone());
            }
            out
        });
        BlockDecomposition { blocks: self.blocks, by_kind, cumulative, horizon: self.len }
    }
}

/// Decomposes `a_0, ..., a_{horizon-1}`.
pub fn decompose_blocks<T: Scalar>(spec: &SeriesSpec, horizon: usize) -> Result<BlockDecomposition<T>, BlockError> {
    if horizon == 0 {
        return Err(BlockError::EmptyHorizon);
    }
    let mut builder = DecompositionBuilder::new();
    for n in 0..horizon {
        builder.push(spec.eval_term::<T>(n)?);
    }
    Ok(builder.finish(spec.classify(horizon).ok()))
}

/// Decomposes just far enough to hold `min_blocks` complete blocks of each
/// kind, giving up after `max_terms` terms. The horizon is located from
/// term classes alone, so a shortfall is reported without summing values.
pub fn decompose_until_blocks<T: Scalar>(
    spec: &SeriesSpec,
    min_blocks: usize,
    max_terms: usize,
) -> Result<BlockDecomposition<T>, BlockError> {
    let mut complete = [0usize; 2];
    let mut current: Option<Class> = None;
    let mut n = 0;
    let shortfall = |complete: [usize; 2], n| BlockError::InsufficientBlocks {
        needed: min_blocks,
        found: complete[0].min(complete[1]),
        horizon: n,
    };
    // a block is complete once the next term has the other class
    while complete[0].min(complete[1]) < min_blocks {
        if n >= max_terms {
            return Err(shortfall(complete, n));
        }
        let class = match spec.classify(n) {
            Ok(c) => c,
            Err(SeriesError::Uncertified { .. }) => return Err(shortfall(complete, n)),
            Err(e) => return Err(e.into()),
        };
        if let Some(prev) = current.filter(|&p| p != class) {
            complete[slot(prev)] += 1;
        }
        current = Some(class);
        n += 1;
    }
    // the last term read opened a fresh block; stop just before it
    decompose_blocks(spec, n.saturating_sub(1).max(1))
}

impl<T: Scalar> BlockDecomposition<T> {
    pub fn from_terms<I: IntoIterator<Item = T>>(terms: I, next: Option<Class>) -> Self {
        let mut builder = DecompositionBuilder::new();
        for t in terms {
            builder.push(t);
        }
        builder.finish(next)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// All blocks in index order, trailing incomplete block included.
    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn starts_with(&self) -> Option<Class> {
        self.blocks.first().map(|b| b.class)
    }

    pub fn complete_count(&self, kind: Class) -> usize {
        self.cumulative[slot(kind)].len() - 1
    }

    /// Complete blocks of one kind, in order.
    pub fn complete_blocks(&self, kind: Class) -> impl Iterator<Item = &Block<T>> + '_ {
        self.by_kind[slot(kind)].iter().take(self.complete_count(kind)).map(move |&pos| &self.blocks[pos])
    }

    /// Complete block `kind_i` (1-based).
    pub fn block(&self, kind: Class, i: usize) -> Result<&Block<T>, BlockError> {
        let available = self.complete_count(kind);
        if i == 0 || i > available {
            return Err(BlockError::OutOfRange { kind, index: i, available });
        }
        Ok(&self.blocks[self.by_kind[slot(kind)][i - 1]])
    }

    /// `S_[kind_i, kind_j]`: the sum over blocks `i..=j` of one kind.
    pub fn block_sum(&self, kind: Class, i: usize, j: usize) -> Result<T, BlockError> {
        if i == 0 || i > j {
            return Err(BlockError::InvalidRange { kind, first: i, last: j });
        }
        let available = self.complete_count(kind);
        if j > available {
            return Err(BlockError::OutOfRange { kind, index: j, available });
        }
        let cum = &self.cumulative[slot(kind)];
        Ok(cum[j].sub_ref(&cum[i - 1]))
    }

    /// `S_[kind_1, kind_j]` with the empty range (`j == 0`) read as zero.
    pub fn leading_sum(&self, kind: Class, j: usize) -> Result<T, BlockError> {
        let available = self.complete_count(kind);
        if j > available {
            return Err(BlockError::OutOfRange { kind, index: j, available });
        }
        Ok(self.cumulative[slot(kind)][j].clone())
    }

    /// `S_{q_i}` (kind P) or `S_{m_i}` (kind N).
    pub fn partial_sum_at(&self, kind: Class, i: usize) -> Result<T, BlockError> {
        Ok(self.block(kind, i)?.partial_sum.clone())
    }

    /// Block containing term `index`, if within the horizon.
    pub fn block_of(&self, index: usize) -> Option<&Block<T>> {
        let pos = self.blocks.partition_point(|b| b.start <= index);
        pos.checked_sub(1).map(|p| &self.blocks[p]).filter(|b| b.contains(index))
    }

    /// One row per block: `kind,index,start,end,block_sum,partial_sum_at,complete`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: Option<&str>) -> Result<(), BlockError> {
        if let Some(h) = header {
            writeln!(out, "# {h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "index", "start", "end", "block_sum", "partial_sum_at", "complete"])?;
        for b in &self.blocks {
            w.write_record([
                b.class.label().to_string(),
                b.label.to_string(),
                b.start.to_string(),
                b.end.to_string(),
                b.sum.render(),
                b.partial_sum.render(),
                b.complete.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
