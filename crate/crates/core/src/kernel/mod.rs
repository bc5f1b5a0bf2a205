//! Metropolis–Hastings proposal kernels over partitions.
//!
//! Split–merge (with random or informed launch states) and the
//! reconfiguration family (plain, informed, and with joint block moves).
//! Kernels are deterministic given their inputs and a [`Driver`]; the
//! orchestrator owns relabelling and context selection.

mod driver;
mod reconfigure;
mod split_merge;

pub use driver::{ChoiceKind, ChoicePoint, Driver, RandomDriver, ReplayDriver, ScriptedDriver, Step};
pub use reconfigure::{reconfigure, reverse_log_prob, Variant};
pub use split_merge::{split_merge, Launch, SmPath};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PartitionModel, Target};
use crate::partition::Partition;
use crate::state::State;
use crate::sweep::{apply, prepared_weights, SweepResult};

/// Which sampler drives a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Gibbs,
    Sm,
    Bsm,
    Srm,
    Sarm,
    Arm,
}

impl Sampler {
    pub const ALL: [Sampler; 6] = [
        Sampler::Gibbs,
        Sampler::Sm,
        Sampler::Bsm,
        Sampler::Srm,
        Sampler::Sarm,
        Sampler::Arm,
    ];

    /// Whether the kernel needs a context drawn from the chain history.
    pub fn is_adaptive(self) -> bool {
        matches!(self, Sampler::Bsm | Sampler::Sarm | Sampler::Arm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Sampler::Gibbs => "gibbs",
            Sampler::Sm => "sm",
            Sampler::Bsm => "bsm",
            Sampler::Srm => "srm",
            Sampler::Sarm => "sarm",
            Sampler::Arm => "arm",
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sampler::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown sampler {s:?}")))
    }
}

/// Background information for the adaptive kernels: two observations and
/// two reference partitions, oriented so that `za` joins `i, j` and `zb`
/// separates them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposalContext {
    i: usize,
    j: usize,
    za: Vec<usize>,
    zb: Vec<usize>,
}

impl ProposalContext {
    /// From per-observation labels of two full partitions. The pair must
    /// disagree on `(i, j)`; the partitions are swapped if needed.
    pub fn from_labels(i: usize, j: usize, a: Vec<usize>, b: Vec<usize>) -> Result<Self> {
        if i == j || i >= a.len() || j >= a.len() || a.len() != b.len() {
            return Err(Error::Precondition(format!(
                "invalid context pair ({i}, {j}) over {} observations",
                a.len()
            )));
        }
        let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
        match (sa, sb) {
            (true, false) => Ok(Self { i, j, za: a, zb: b }),
            (false, true) => Ok(Self { i, j, za: b, zb: a }),
            _ => Err(Error::Precondition(format!(
                "reference partitions agree on ({i}, {j})"
            ))),
        }
    }

    pub fn new(i: usize, j: usize, a: &Partition, b: &Partition, n: usize) -> Result<Self> {
        Self::from_labels(i, j, a.canonical_labels(n)?, b.canonical_labels(n)?)
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn za_labels(&self) -> &[usize] {
        &self.za
    }

    pub fn zb_labels(&self) -> &[usize] {
        &self.zb
    }

    pub fn za(&self) -> Partition {
        Partition::from_labels(&self.za)
    }

    pub fn zb(&self) -> Partition {
        Partition::from_labels(&self.zb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Split,
    Merge,
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
        })
    }
}

/// Result of one proposal and its accept/reject decision.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveOutcome {
    pub proposal: Partition,
    pub kind: MoveKind,
    pub log_t_fwd: f64,
    pub log_t_rev: f64,
    pub log_q_old: f64,
    pub log_q_new: f64,
    pub accept_prob: f64,
    pub accepted: bool,
}

/// Log of the Metropolis–Hastings acceptance probability.
pub fn log_accept_ratio(log_q_old: f64, log_q_new: f64, log_t_fwd: f64, log_t_rev: f64) -> Result<f64> {
    if [log_q_old, log_q_new, log_t_fwd, log_t_rev].iter().any(|v| v.is_nan()) {
        return Err(Error::NotANumber("acceptance ratio inputs"));
    }
    if log_t_rev == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let r = log_t_rev - log_t_fwd + log_q_new - log_q_old;
    Ok(if r.is_nan() { f64::NEG_INFINITY } else { r.min(0.0) })
}

/// Accepts with probability `min(1, T_rev q_new / (T_fwd q_old))`; always
/// consumes exactly one uniform.
pub fn mh_accept<R: Rng + ?Sized>(
    log_q_old: f64,
    log_q_new: f64,
    log_t_fwd: f64,
    log_t_rev: f64,
    rng: &mut R,
) -> Result<bool> {
    let log_a = log_accept_ratio(log_q_old, log_q_new, log_t_fwd, log_t_rev)?;
    let u: f64 = rng.random();
    Ok(u < log_a.exp())
}

/// One proposal of `sampler` from `state`, accepted or rejected in place.
///
/// `ctx` is required for the adaptive kernels and supplies `i, j` for them;
/// `rank` orders all iteration inside the kernel.
#[allow(clippy::too_many_arguments)]
pub fn propose<'m, M: PartitionModel, R: Rng + ?Sized>(
    sampler: Sampler,
    state: &mut State<'m, M>,
    i: usize,
    j: usize,
    ctx: Option<&ProposalContext>,
    l: usize,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    let (i, j) = match ctx {
        Some(c) => (c.i, c.j),
        None => (i, j),
    };
    if sampler.is_adaptive() && ctx.is_none() {
        return Err(Error::Precondition(format!("{sampler} needs a proposal context")));
    }
    let log_q_old = state.log_joint();
    let (new_state, kind, log_t_fwd, log_t_rev) = match sampler {
        Sampler::Gibbs => {
            return Err(Error::Precondition("gibbs has no proposal kernel".into()));
        }
        Sampler::Sm | Sampler::Bsm => {
            let launch = match ctx {
                Some(c) if sampler == Sampler::Bsm => Launch::Informed(c),
                _ => Launch::Random,
            };
            let path = split_merge(state, i, j, launch, l, rank, &mut RandomDriver(&mut *rng))?
                .expect("random driver never abandons");
            (path.state, path.kind, path.log_t_fwd, path.log_t_rev)
        }
        Sampler::Srm | Sampler::Sarm | Sampler::Arm => {
            let variant = match sampler {
                Sampler::Srm => Variant::Simple,
                Sampler::Sarm => Variant::Informed,
                _ => Variant::Full,
            };
            let kind = if state.assignment().same_block(i, j) {
                MoveKind::Split
            } else {
                MoveKind::Merge
            };
            let c = if variant == Variant::Simple { None } else { ctx };
            let (new_state, log_t_fwd) =
                reconfigure(variant, state, i, j, c, rank, &mut RandomDriver(&mut *rng))?
                    .expect("random driver never abandons");
            let log_t_rev = reverse_log_prob(variant, &new_state, state, i, j, c, rank)?;
            (new_state, kind, log_t_fwd, log_t_rev)
        }
    };
    let log_q_new = new_state.log_joint();
    let accept_prob = log_accept_ratio(log_q_old, log_q_new, log_t_fwd, log_t_rev)?.exp();
    let accepted = mh_accept(log_q_old, log_q_new, log_t_fwd, log_t_rev, rng)?;
    let proposal = new_state.partition();
    if accepted {
        *state = new_state;
    }
    Ok(MoveOutcome {
        proposal,
        kind,
        log_t_fwd,
        log_t_rev,
        log_q_old,
        log_q_new,
        accept_prob,
        accepted,
    })
}

pub fn sm_propose<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    i: usize,
    j: usize,
    l: usize,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    propose(Sampler::Sm, state, i, j, None, l, rank, rng)
}

pub fn bsm_propose<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    ctx: &ProposalContext,
    l: usize,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    propose(Sampler::Bsm, state, ctx.i, ctx.j, Some(ctx), l, rank, rng)
}

pub fn srm_propose<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    i: usize,
    j: usize,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    propose(Sampler::Srm, state, i, j, None, 0, rank, rng)
}

pub fn sarm_propose<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    ctx: &ProposalContext,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    propose(Sampler::Sarm, state, ctx.i, ctx.j, Some(ctx), 0, rank, rng)
}

pub fn arm_propose<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    ctx: &ProposalContext,
    rank: &[usize],
    rng: &mut R,
) -> Result<MoveOutcome> {
    propose(Sampler::Arm, state, ctx.i, ctx.j, Some(ctx), 0, rank, rng)
}

/// A sweep whose choice is delegated to `driver`. `hint` is only evaluated
/// when the driver steers toward a target.
pub(crate) fn driven_sweep<M: PartitionModel>(
    state: &mut State<'_, M>,
    set: &[usize],
    candidates: &[Target],
    driver: &mut dyn Driver,
    hint: impl FnOnce(&State<'_, M>, &[usize]) -> Option<usize>,
) -> Result<Option<SweepResult>> {
    let p = prepared_weights(state, set, candidates)?;
    let hint = driver.target().and_then(|t| hint(state, t));
    let point = ChoicePoint {
        kind: ChoiceKind::Sweep {
            asg: state.assignment(),
            set,
            candidates,
        },
        probs: &p.weights.probs,
        hint,
    };
    match driver.pick(&point) {
        Some(k) if k < candidates.len() => Ok(Some(apply(state, set, candidates, p, k))),
        _ => Ok(None),
    }
}

/// Whether the blocks of `state` are exactly the level sets of `labels`.
pub(crate) fn matches_labels<M: PartitionModel>(state: &State<'_, M>, labels: &[usize]) -> bool {
    use std::collections::HashMap;
    let asg = state.assignment();
    if asg.num_covered() != labels.len() {
        return false;
    }
    let mut fwd: HashMap<usize, usize> = HashMap::new();
    let mut back: HashMap<usize, usize> = HashMap::new();
    (0..labels.len()).all(|u| {
        let s = asg.slot_of(u).expect("fully covered");
        *fwd.entry(s).or_insert(labels[u]) == labels[u] && *back.entry(labels[u]).or_insert(s) == s
    })
}

/// Labels of a fully covered state, one per observation.
pub(crate) fn slot_labels<M: PartitionModel>(state: &State<'_, M>) -> Vec<usize> {
    let asg = state.assignment();
    (0..asg.len())
        .map(|u| asg.slot_of(u).expect("fully covered"))
        .collect()
}
