//! Mutable working partitions with per-block sufficient statistics.
//!
//! Blocks live in numbered slots so that statistics can be indexed densely.
//! The list order of blocks is the order of `active`; it only matters for
//! reproducing random draws.

use crate::error::{Error, Result};
use crate::model::{PartitionModel, Target};
use crate::partition::Partition;

const UNCOVERED: usize = usize::MAX;

/// Slot-based block structure over observations `0..n`, some of which may be
/// uncovered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    active: Vec<usize>,
    free: Vec<usize>,
    covered: usize,
}

impl Assignment {
    pub fn empty(n: usize) -> Self {
        Self {
            labels: vec![UNCOVERED; n],
            members: Vec::new(),
            active: Vec::new(),
            free: Vec::new(),
            covered: 0,
        }
    }

    pub fn from_partition(z: &Partition, n: usize) -> Result<Self> {
        let mut asg = Self::empty(n);
        for block in z.blocks() {
            if let Some(&x) = block.iter().find(|&&x| x >= n) {
                return Err(Error::Precondition(format!("element {x} outside 0..{n}")));
            }
            asg.attach(block, None);
        }
        Ok(asg)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Maximum number of slots ever needed for `n` observations.
    pub fn slot_capacity(n: usize) -> usize {
        n + 1
    }

    #[inline]
    pub fn slot_of(&self, i: usize) -> Option<usize> {
        let l = self.labels[i];
        (l != UNCOVERED).then_some(l)
    }

    #[inline]
    pub fn members(&self, slot: usize) -> &[usize] {
        &self.members[slot]
    }

    #[inline]
    pub fn size(&self, slot: usize) -> usize {
        self.members[slot].len()
    }

    /// Active slots in list order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn num_blocks(&self) -> usize {
        self.active.len()
    }

    pub fn num_covered(&self) -> usize {
        self.covered
    }

    pub fn is_active(&self, slot: usize) -> bool {
        slot < self.members.len() && !self.members[slot].is_empty()
    }

    /// The slot a fresh block would occupy.
    pub fn next_slot(&self) -> usize {
        self.free.last().copied().unwrap_or(self.members.len())
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        let (la, lb) = (self.labels[a], self.labels[b]);
        la != UNCOVERED && la == lb
    }

    pub fn to_partition(&self) -> Partition {
        Partition::from_sorted_blocks_unchecked(
            self.active.iter().map(|&s| self.members[s].clone()).collect(),
        )
    }

    /// Canonical restricted-growth labels of a fully covered assignment.
    pub fn canonical_labels(&self) -> Option<Vec<usize>> {
        if self.covered != self.labels.len() {
            return None;
        }
        let mut map = vec![UNCOVERED; self.members.len()];
        let mut next = 0;
        Some(
            self.labels
                .iter()
                .map(|&l| {
                    if map[l] == UNCOVERED {
                        map[l] = next;
                        next += 1;
                    }
                    map[l]
                })
                .collect(),
        )
    }

    /// Where `set` currently lives: `Ok(Some(slot))` if inside one block,
    /// `Ok(None)` if entirely uncovered.
    pub fn locate(&self, set: &[usize]) -> Result<Option<usize>> {
        let first = *set
            .first()
            .ok_or_else(|| Error::Precondition("moved set must be non-empty".into()))?;
        let l = self.labels[first];
        if set.iter().all(|&x| self.labels[x] == l) {
            Ok((l != UNCOVERED).then_some(l))
        } else {
            Err(Error::Precondition(
                "moved set must lie in one block or be uncovered".into(),
            ))
        }
    }

    pub(crate) fn detach(&mut self, set: &[usize], slot: usize) {
        let block = &mut self.members[slot];
        block.retain(|x| !set.contains(x));
        for &x in set {
            self.labels[x] = UNCOVERED;
        }
        self.covered -= set.len();
        if block.is_empty() {
            let pos = self.active.iter().position(|&s| s == slot).expect("active slot");
            self.active.remove(pos);
            self.free.push(slot);
        }
    }

    /// Attaches an uncovered `set` to `slot`, or to a fresh slot when `None`.
    pub(crate) fn attach(&mut self, set: &[usize], slot: Option<usize>) -> usize {
        let slot = match slot {
            Some(s) => s,
            None => {
                let s = match self.free.pop() {
                    Some(s) => s,
                    None => {
                        self.members.push(Vec::new());
                        self.members.len() - 1
                    }
                };
                self.active.push(s);
                s
            }
        };
        let block = &mut self.members[slot];
        for &x in set {
            debug_assert_eq!(self.labels[x], UNCOVERED);
            self.labels[x] = slot;
            let pos = block.binary_search(&x).unwrap_err();
            block.insert(pos, x);
        }
        self.covered += set.len();
        slot
    }
}

/// A working partition bound to a model, with its sufficient statistics.
#[derive(Debug)]
pub struct State<'m, M: PartitionModel> {
    model: &'m M,
    asg: Assignment,
    stats: M::Stats,
}

impl<M: PartitionModel> Clone for State<'_, M> {
    fn clone(&self) -> Self {
        Self {
            model: self.model,
            asg: self.asg.clone(),
            stats: self.stats.clone(),
        }
    }
}

impl<'m, M: PartitionModel> State<'m, M> {
    pub fn empty(model: &'m M) -> Self {
        Self {
            model,
            asg: Assignment::empty(model.num_observations()),
            stats: model.empty_stats(),
        }
    }

    /// State for a possibly partial partition of the model's observations.
    pub fn from_partition(model: &'m M, z: &Partition) -> Result<Self> {
        let mut state = Self::empty(model);
        let n = model.num_observations();
        for block in z.blocks() {
            if let Some(&x) = block.iter().find(|&&x| x >= n) {
                return Err(Error::Precondition(format!("element {x} outside 0..{n}")));
            }
            state.move_set(block, Target::New)?;
        }
        Ok(state)
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    pub fn assignment(&self) -> &Assignment {
        &self.asg
    }

    pub fn stats(&self) -> &M::Stats {
        &self.stats
    }

    pub fn partition(&self) -> Partition {
        self.asg.to_partition()
    }

    /// `log q` of the covered observations, from the statistics.
    pub fn log_joint(&self) -> f64 {
        self.model.log_likelihood(&self.stats, &self.asg) + self.log_prior()
    }

    pub fn log_prior(&self) -> f64 {
        let asg = &self.asg;
        self.model
            .crp()
            .log_density(asg.active().iter().map(|&s| asg.size(s)))
    }

    /// `log q(z') − log q(z)` for moving `set` into `target`, computed
    /// incrementally.
    pub fn delta_log_joint(&self, set: &[usize], target: Target) -> Result<f64> {
        let source = self.asg.locate(set)?;
        self.check_target(target)?;
        let mv = self.model.prepare_move(&self.asg, set);
        Ok(self.delta_prepared(set.len(), &mv, source, target))
    }

    pub(crate) fn check_target(&self, target: Target) -> Result<()> {
        match target {
            Target::Block(s) if !self.asg.is_active(s) => Err(Error::Precondition(format!(
                "target slot {s} is not an active block"
            ))),
            _ => Ok(()),
        }
    }

    pub(crate) fn prepare(&self, set: &[usize]) -> M::Move {
        self.model.prepare_move(&self.asg, set)
    }

    pub(crate) fn delta_prepared(
        &self,
        moved: usize,
        mv: &M::Move,
        source: Option<usize>,
        target: Target,
    ) -> f64 {
        if let (Some(s), Target::Block(t)) = (source, target) {
            if s == t {
                return 0.0;
            }
        }
        let lik = self
            .model
            .delta_log_likelihood(&self.stats, &self.asg, mv, source, target);
        let prior = self.model.crp().delta(
            self.asg.num_covered(),
            moved,
            source.map(|s| self.asg.size(s)),
            match target {
                Target::Block(t) => Some(self.asg.size(t)),
                Target::New => None,
            },
        );
        lik + prior
    }

    /// Moves `set` into `target`; returns the slot it now occupies.
    pub fn move_set(&mut self, set: &[usize], target: Target) -> Result<usize> {
        let source = self.asg.locate(set)?;
        self.check_target(target)?;
        let mv = self.model.prepare_move(&self.asg, set);
        Ok(self.apply_prepared(set, &mv, source, target))
    }

    pub(crate) fn apply_prepared(
        &mut self,
        set: &[usize],
        mv: &M::Move,
        source: Option<usize>,
        target: Target,
    ) -> usize {
        if let (Some(s), Target::Block(t)) = (source, target) {
            if s == t {
                return s;
            }
        }
        if let Some(s) = source {
            self.model.detach(&mut self.stats, mv, s);
            self.asg.detach(set, s);
        }
        let slot = match target {
            Target::Block(t) => t,
            Target::New => self.asg.next_slot(),
        };
        self.model.attach(&mut self.stats, mv, slot);
        let placed = self.asg.attach(
            set,
            match target {
                Target::Block(t) => Some(t),
                Target::New => None,
            },
        );
        debug_assert_eq!(placed, slot);
        placed
    }

    /// Uncovers `set`, which must lie in a single block.
    pub fn uncover(&mut self, set: &[usize]) -> Result<()> {
        if let Some(s) = self.asg.locate(set)? {
            let mv = self.model.prepare_move(&self.asg, set);
            self.model.detach(&mut self.stats, &mv, s);
            self.asg.detach(set, s);
        }
        Ok(())
    }

    /// Whether the maintained statistics equal a rebuild from scratch.
    pub fn stats_match_rebuild(&self) -> bool {
        self.model.stats_from_scratch(&self.asg) == self.stats
    }
}
