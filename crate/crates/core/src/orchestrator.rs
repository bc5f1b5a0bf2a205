//! Multi-chain ensemble: warm-up, history window, context selection and the
//! interlaced kernel + Gibbs iteration.
//!
//! Chains advance in lockstep. Within an iteration every chain reads the
//! history as it stood at the start of the iteration; new states are
//! appended afterwards in chain order. Each chain owns its random stream, so
//! results do not depend on how chains are spread across threads.

use std::collections::VecDeque;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{propose, MoveKind, ProposalContext, Sampler};
use crate::model::{ModelParams, PartitionModel};
use crate::partition::Partition;
use crate::state::State;
use crate::sweep::gibbs_sweep;

pub const WARMUP_SWEEPS: usize = 50;

/// Stream offset between restarts; chains of one restart use consecutive
/// streams.
const RESTART_STREAM_STRIDE: u64 = 1_000_003;

/// Attempts at drawing a disagreeing partner or pair before scanning.
const REJECTION_TRIES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sampler: Sampler,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: f64,
    pub seed: u64,
    pub restarts: usize,
    pub params: ModelParams,
    /// Intermediate restricted sweeps for split–merge.
    pub l: usize,
    /// Follow every kernel move by a full Gibbs sweep.
    pub interlace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sampler: Sampler::Arm,
            chains: 8,
            iterations: 1000,
            burn_in: 0.5,
            seed: 0,
            restarts: 1,
            params: ModelParams::default(),
            l: 5,
            interlace: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.chains < 1 || self.iterations < 1 || self.restarts < 1 {
            return Err(Error::InvalidParameter(
                "chains, iterations and restarts must all be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} outside [0, 1)",
                self.burn_in
            )));
        }
        if self.sampler.is_adaptive() && self.chains < 2 {
            return Err(Error::InvalidParameter(format!(
                "{} draws its context from other chains and needs at least 2",
                self.sampler
            )));
        }
        Ok(())
    }
}

/// An immutable stored state.
#[derive(Debug)]
pub struct Snapshot {
    labels: Vec<usize>,
    hash: u64,
}

impl Snapshot {
    fn new(labels: Vec<usize>) -> Self {
        let mut h = DefaultHasher::new();
        labels.hash(&mut h);
        Self {
            hash: h.finish(),
            labels,
        }
    }

    /// Canonical labels: blocks numbered by first appearance.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn same_content(&self, other: &Snapshot) -> bool {
        self.hash == other.hash && self.labels == other.labels
    }
}

/// Per-chain states for iterations `⌊t/2⌋..=t`.
#[derive(Debug, Default)]
pub struct History {
    chains: Vec<VecDeque<(usize, Arc<Snapshot>)>>,
}

impl History {
    fn new(chains: usize) -> Self {
        Self {
            chains: vec![VecDeque::new(); chains],
        }
    }

    fn push(&mut self, chain: usize, t: usize, snap: Arc<Snapshot>) {
        self.chains[chain].push_back((t, snap));
    }

    fn prune(&mut self, t: usize) {
        let lower = t / 2;
        for c in &mut self.chains {
            while c.front().is_some_and(|&(t0, _)| t0 < lower) {
                c.pop_front();
            }
        }
    }

    pub fn chain_len(&self, chain: usize) -> usize {
        self.chains[chain].len()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Oldest iteration still stored.
    pub fn lower_bound(&self) -> Option<usize> {
        self.chains.iter().filter_map(|c| c.front().map(|e| e.0)).min()
    }

    fn entry(&self, mut k: usize) -> &Arc<Snapshot> {
        for c in &self.chains {
            if k < c.len() {
                return &c[k].1;
            }
            k -= c.len();
        }
        panic!("history index out of range")
    }

    fn global_index(&self, chain: usize, k: usize) -> usize {
        self.chains[..chain].iter().map(VecDeque::len).sum::<usize>() + k
    }
}

/// Draws a context for `chain`: one state from its own history, a second
/// state with different content uniformly from the whole window, then an
/// ordered pair uniformly among those the two states disagree on.
pub fn select_context<R: Rng + ?Sized>(
    history: &History,
    chain: usize,
    rng: &mut R,
) -> Result<ProposalContext> {
    let own = history.chain_len(chain);
    if own == 0 {
        return Err(Error::Precondition(format!("chain {chain} has no history")));
    }
    let k = rng.random_range(0..own);
    let first_global = history.global_index(chain, k);
    let a = history.entry(first_global).clone();
    let total = history.len();
    if total < 2 {
        return Err(Error::NoDisagreement);
    }
    let mut b = None;
    for _ in 0..REJECTION_TRIES {
        let mut g = rng.random_range(0..total - 1);
        if g >= first_global {
            g += 1;
        }
        let cand = history.entry(g);
        if !cand.same_content(&a) {
            b = Some(cand.clone());
            break;
        }
    }
    let b = match b {
        Some(b) => b,
        None => {
            let differing: Vec<usize> = (0..total)
                .filter(|&g| g != first_global && !history.entry(g).same_content(&a))
                .collect();
            if differing.is_empty() {
                return Err(Error::NoDisagreement);
            }
            history.entry(differing[rng.random_range(0..differing.len())]).clone()
        }
    };
    let (i, j) = disagreeing_pair(a.labels(), b.labels(), rng)?;
    ProposalContext::from_labels(i, j, a.labels().to_vec(), b.labels().to_vec())
}

/// Uniform ordered pair `(i, j)`, `i ≠ j`, on which exactly one of the two
/// label vectors puts `i` and `j` together.
fn disagreeing_pair<R: Rng + ?Sized>(a: &[usize], b: &[usize], rng: &mut R) -> Result<(usize, usize)> {
    let n = a.len();
    let disagree = |i: usize, j: usize| (a[i] == a[j]) != (b[i] == b[j]);
    if n < 2 {
        return Err(Error::NoDisagreement);
    }
    for _ in 0..REJECTION_TRIES {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if disagree(i, j) {
            return Ok((i, j));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && disagree(i, j))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoDisagreement);
    }
    Ok(pairs[rng.random_range(0..pairs.len())])
}

/// What happened in one chain during one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    /// No kernel: the Gibbs sampler.
    Gibbs,
    Split,
    Merge,
    /// No context could be formed; only the Gibbs sweep ran.
    Skip,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepKind::Gibbs => "gibbs",
            StepKind::Split => "split",
            StepKind::Merge => "merge",
            StepKind::Skip => "skip",
        })
    }
}

impl std::str::FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(StepKind::Gibbs),
            "split" => Ok(StepKind::Split),
            "merge" => Ok(StepKind::Merge),
            "skip" => Ok(StepKind::Skip),
            _ => Err(Error::Parse(format!("unknown step kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub chain: usize,
    pub log_q: f64,
    pub blocks: usize,
    pub kind: StepKind,
    pub accepted: bool,
    pub log_t_fwd: f64,
    pub log_t_rev: f64,
    pub kernel_ns: u64,
    pub gibbs_ns: u64,
    /// Canonical labels of the chain state after the iteration.
    pub labels: Vec<usize>,
}

struct Chain<'m, M: PartitionModel> {
    state: State<'m, M>,
    rng: ChaCha8Rng,
}

fn chain_rng(seed: u64, restart: usize, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64 * RESTART_STREAM_STRIDE + chain as u64);
    rng
}

fn canonical_labels<M: PartitionModel>(state: &State<'_, M>) -> Vec<usize> {
    state
        .assignment()
        .canonical_labels()
        .expect("chain states cover every observation")
}

/// Sweep order and kernel rank from a fresh uniform relabelling.
fn relabel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut rank = vec![0; n];
    for (r, &u) in order.iter().enumerate() {
        rank[u] = r;
    }
    (order, rank)
}

/// S chains advancing in lockstep.
pub struct Ensemble<'m, M: PartitionModel> {
    config: RunConfig,
    chains: Vec<Chain<'m, M>>,
    history: History,
    t: usize,
}

impl<'m, M: PartitionModel> Ensemble<'m, M> {
    /// All-singleton chains followed by [`WARMUP_SWEEPS`] Gibbs sweeps. The
    /// warm-up states are the first entries of the history.
    pub fn new(model: &'m M, config: &RunConfig, restart: usize) -> Result<Self> {
        config.validate()?;
        let n = model.num_observations();
        if n == 0 {
            return Err(Error::Data("model has no observations".into()));
        }
        let mut history = History::new(config.chains);
        let mut chains = Vec::with_capacity(config.chains);
        for c in 0..config.chains {
            let mut chain = Chain {
                state: State::from_partition(model, &Partition::singletons(n))?,
                rng: chain_rng(config.seed, restart, c),
            };
            history.push(c, 0, Arc::new(Snapshot::new(canonical_labels(&chain.state))));
            for t in 1..=WARMUP_SWEEPS {
                let (order, _) = relabel(n, &mut chain.rng);
                gibbs_sweep(&mut chain.state, &order, &mut chain.rng)?;
                history.push(c, t, Arc::new(Snapshot::new(canonical_labels(&chain.state))));
            }
            chains.push(chain);
        }
        history.prune(WARMUP_SWEEPS);
        Ok(Self {
            config: config.clone(),
            chains,
            history,
            t: WARMUP_SWEEPS,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Iterations completed, warm-up included.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.chains.iter().map(|c| c.state.partition()).collect()
    }

    /// One iteration of every chain, run on the current rayon pool.
    pub fn step(&mut self) -> Result<Vec<StepRecord>> {
        let history = &self.history;
        let config = &self.config;
        let t = self.t + 1;
        let records: Vec<StepRecord> = self
            .chains
            .par_iter_mut()
            .enumerate()
            .map(|(c, chain)| step_chain(chain, c, t, history, config))
            .collect::<Result<_>>()?;
        for r in &records {
            self.history
                .push(r.chain, t, Arc::new(Snapshot::new(r.labels.clone())));
        }
        self.history.prune(t);
        self.t = t;
        Ok(records)
    }
}

fn step_chain<M: PartitionModel>(
    chain: &mut Chain<'_, M>,
    c: usize,
    t: usize,
    history: &History,
    config: &RunConfig,
) -> Result<StepRecord> {
    let n = chain.state.assignment().len();
    let rng = &mut chain.rng;
    let (order, rank) = relabel(n, rng);
    let mut kind = StepKind::Gibbs;
    let mut accepted = false;
    let (mut log_t_fwd, mut log_t_rev) = (f64::NAN, f64::NAN);
    let mut kernel_ns = 0;
    let sampler = config.sampler;

    if sampler != Sampler::Gibbs && n >= 2 {
        let start = Instant::now();
        let pick = if sampler.is_adaptive() {
            match select_context(history, c, rng) {
                Ok(ctx) => Some((ctx.i(), ctx.j(), Some(ctx))),
                Err(Error::NoDisagreement) => None,
                Err(e) => return Err(e),
            }
        } else {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            Some((i, j, None))
        };
        match pick {
            None => kind = StepKind::Skip,
            Some((i, j, ctx)) => {
                let out = propose(sampler, &mut chain.state, i, j, ctx.as_ref(), config.l, &rank, rng)?;
                kind = match out.kind {
                    MoveKind::Split => StepKind::Split,
                    MoveKind::Merge => StepKind::Merge,
                };
                accepted = out.accepted;
                log_t_fwd = out.log_t_fwd;
                log_t_rev = out.log_t_rev;
            }
        }
        kernel_ns = start.elapsed().as_nanos() as u64;
    }

    let mut gibbs_ns = 0;
    if sampler == Sampler::Gibbs || config.interlace || kind == StepKind::Skip {
        let start = Instant::now();
        gibbs_sweep(&mut chain.state, &order, rng)?;
        gibbs_ns = start.elapsed().as_nanos() as u64;
    }

    Ok(StepRecord {
        iteration: t - WARMUP_SWEEPS,
        chain: c,
        log_q: chain.state.log_joint(),
        blocks: chain.state.assignment().num_blocks(),
        kind,
        accepted,
        log_t_fwd,
        log_t_rev,
        kernel_ns,
        gibbs_ns,
        labels: canonical_labels(&chain.state),
    })
}
