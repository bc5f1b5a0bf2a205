//! Partitions as ordered lists of disjoint blocks, plus the small set algebra
//! the samplers are written in.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An ordered list of disjoint, non-empty blocks of observation indices.
///
/// Elements inside a block are kept in ascending order, so `block[0]` is the
/// block minimum. A partition need not cover every observation; the empty
/// partition is a legal value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

/// Label-order normalised encoding of a [`Partition`]: blocks sorted by their
/// minimum element, elements ascending. Two partitions are set-equal iff their
/// canonical forms are identical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalPartition(Vec<Vec<usize>>);

impl CanonicalPartition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.0
    }

    pub fn into_partition(self) -> Partition {
        Partition { blocks: self.0 }
    }
}

impl fmt::Display for CanonicalPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_blocks(f, &self.0)
    }
}

fn write_blocks(f: &mut fmt::Formatter<'_>, blocks: &[Vec<usize>]) -> fmt::Result {
    for (k, block) in blocks.iter().enumerate() {
        if k > 0 {
            f.write_str(";")?;
        }
        for (m, x) in block.iter().enumerate() {
            if m > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", x + 1)?;
        }
    }
    Ok(())
}

impl Partition {
    /// Builds a partition from arbitrary blocks. Blocks are sorted internally;
    /// empty blocks are rejected, as are overlapping ones.
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(blocks.len());
        for mut block in blocks {
            if block.is_empty() {
                return Err(Error::Precondition("partition blocks must be non-empty".into()));
            }
            block.sort_unstable();
            for &x in &block {
                if !seen.insert(x) {
                    return Err(Error::Precondition(format!(
                        "element {x} appears in more than one block"
                    )));
                }
            }
            out.push(block);
        }
        Ok(Self { blocks: out })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Every observation of `0..n` in its own block.
    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// One block holding `0..n`.
    pub fn single_block(n: usize) -> Self {
        if n == 0 {
            return Self::empty();
        }
        Self {
            blocks: vec![(0..n).collect()],
        }
    }

    /// Builds a partition from per-observation labels; blocks appear in order
    /// of first occurrence.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let k = *index.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[k].push(i);
        }
        Self { blocks }
    }

    pub(crate) fn from_sorted_blocks_unchecked(blocks: Vec<Vec<usize>>) -> Self {
        let p = Self { blocks };
        debug_assert!(p.check_invariants());
        p
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of non-empty blocks, `|z|`.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of covered observations, `|∪z|`.
    pub fn num_covered(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Covered observations in ascending order.
    pub fn covered(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    pub fn covers(&self, i: usize) -> bool {
        self.blocks.iter().any(|b| b.binary_search(&i).is_ok())
    }

    /// Index of the block containing `i`.
    pub fn block_index_of(&self, i: usize) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.binary_search(&i).is_ok())
            .ok_or(Error::NotCovered(i))
    }

    /// The unique block containing `i`.
    pub fn block_of(&self, i: usize) -> Result<&[usize]> {
        self.block_index_of(i).map(|k| self.blocks[k].as_slice())
    }

    /// Removes the elements of `set` from every block, dropping blocks that
    /// become empty. Surviving blocks keep their order.
    pub fn remove_set(&self, set: &[usize]) -> Partition {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|x| !set.contains(x)).collect::<Vec<_>>())
            .filter(|b| !b.is_empty())
            .collect();
        Partition::from_sorted_blocks_unchecked(blocks)
    }

    /// Appends the blocks of `other` after those of `self`. The two
    /// partitions must cover disjoint sets.
    pub fn concat(&self, other: &Partition) -> Result<Partition> {
        for b in &other.blocks {
            for &x in b {
                if self.covers(x) {
                    return Err(Error::Precondition(format!(
                        "concat operands overlap at element {x}"
                    )));
                }
            }
        }
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().cloned());
        Ok(Partition::from_sorted_blocks_unchecked(blocks))
    }

    /// `{ A ∩ B : A ∈ self, B ∈ other, A ∩ B ≠ ∅ }`. Both operands must cover
    /// the same set. Output blocks are ordered by their minimum element.
    pub fn coarsest_common_refinement(&self, other: &Partition) -> Result<Partition> {
        if self.covered() != other.covered() {
            return Err(Error::Precondition(
                "refinement operands cover different sets".into(),
            ));
        }
        let other_label: HashMap<usize, usize> = other
            .blocks
            .iter()
            .enumerate()
            .flat_map(|(k, b)| b.iter().map(move |&x| (x, k)))
            .collect();
        let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, b) in self.blocks.iter().enumerate() {
            for &x in b {
                groups.entry((k, other_label[&x])).or_default().push(x);
            }
        }
        let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Partition::from_sorted_blocks_unchecked(blocks))
    }

    /// Replaces every index `i` by `perm[i]`. `perm` must be a bijection on
    /// `0..perm.len()` and every covered index must be in range.
    pub fn relabel(&self, perm: &[usize]) -> Result<Partition> {
        let mut hit = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut hit[p], true) {
                return Err(Error::Precondition("relabelling map is not a bijection".into()));
            }
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut nb = Vec::with_capacity(b.len());
            for &x in b {
                let y = *perm.get(x).ok_or(Error::NotCovered(x))?;
                nb.push(y);
            }
            nb.sort_unstable();
            blocks.push(nb);
        }
        Ok(Partition::from_sorted_blocks_unchecked(blocks))
    }

    pub fn canonical(&self) -> CanonicalPartition {
        let mut blocks = self.blocks.clone();
        blocks.sort_unstable_by_key(|b| b[0]);
        CanonicalPartition(blocks)
    }

    /// Restricted-growth labels for a partition covering exactly `0..n`:
    /// blocks numbered by order of their minimum element.
    pub fn canonical_labels(&self, n: usize) -> Result<Vec<usize>> {
        let mut labels = vec![usize::MAX; n];
        for (k, b) in self.canonical().0.iter().enumerate() {
            for &x in b {
                if x >= n {
                    return Err(Error::Precondition(format!("element {x} outside 0..{n}")));
                }
                labels[x] = k;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::NotCovered(i));
        }
        Ok(labels)
    }

    /// Whether `self` is a full partition of `0..n`.
    pub fn is_full(&self, n: usize) -> bool {
        self.num_covered() == n && self.blocks.iter().flatten().all(|&x| x < n)
    }

    pub(crate) fn check_invariants(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.blocks.iter().all(|b| {
            !b.is_empty() && b.windows(2).all(|w| w[0] < w[1]) && b.iter().all(|x| seen.insert(*x))
        })
    }
}

impl fmt::Display for Partition {
    /// Semicolon-separated blocks of comma-separated 1-based indices.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_blocks(f, &self.blocks)
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Partition::empty());
        }
        let mut blocks = Vec::new();
        for part in s.split(';') {
            let mut block = Vec::new();
            for tok in part.split(',') {
                let v: usize = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad partition element {tok:?}")))?;
                if v == 0 {
                    return Err(Error::Parse("partition elements are 1-based".into()));
                }
                block.push(v - 1);
            }
            blocks.push(block);
        }
        Partition::new(blocks)
    }
}

/// Iteration order used by the reconfiguration kernels: descending size, ties
/// broken by ascending first element. `rank` gives the position of each index
/// under the current relabelling (identity when `None`).
pub fn iteration_order(mut blocks: Vec<Vec<usize>>, rank: Option<&[usize]>) -> Vec<Vec<usize>> {
    let key = |x: usize| rank.map_or(x, |r| r[x]);
    for b in &mut blocks {
        b.sort_unstable_by_key(|&x| key(x));
    }
    blocks.sort_by(|a, b| b.len().cmp(&a.len()).then(key(a[0]).cmp(&key(b[0]))));
    blocks
}
