//! Exact enumeration for small instances: all set partitions, exact
//! posteriors, and exhaustive walks over every choice a kernel can make.
//!
//! The likelihoods here are recomputed from raw data block by block, with
//! no sufficient-statistics machinery shared with [`crate::model`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{
    reconfigure, split_merge, ChoiceKind, ChoicePoint, Launch, ProposalContext, ScriptedDriver,
    Variant,
};
use crate::orchestrator::{Ensemble, RunConfig};
use crate::model::{log_joint, BernoulliMixture, InfiniteRelational, PartitionModel, Target};
use crate::partition::{CanonicalPartition, Partition};
use crate::state::{Assignment, State};

pub const MAX_ENUMERATION: usize = 12;
pub const MAX_POSTERIOR: usize = 10;
pub const MAX_LEAVES: usize = 10_000_000;

/// Bell numbers by the triangle recurrence.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().expect("non-empty")];
        for &x in &row {
            next.push(next.last().expect("non-empty") + x);
        }
        row = next;
    }
    row[0]
}

/// All partitions of `{0..n-1}` in restricted-growth-string order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if !(1..=MAX_ENUMERATION).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "enumeration needs 1 <= n <= {MAX_ENUMERATION}, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(bell(n) as usize);
    let mut rgs = vec![0usize; n];
    // max[k] = largest label among rgs[..k]
    let mut max = vec![0usize; n];
    loop {
        out.push(Partition::from_labels(&rgs));
        let mut k = n - 1;
        loop {
            if k == 0 {
                return Ok(out);
            }
            if rgs[k] <= max[k] {
                rgs[k] += 1;
                break;
            }
            k -= 1;
        }
        for m in k + 1..n {
            max[m] = max[m - 1].max(rgs[m - 1]);
            rgs[m] = 0;
        }
    }
}

/// A second, deliberately naive evaluation of `log q(z)`. Partial
/// partitions are scored on the observations they cover.
pub trait DirectLikelihood {
    fn direct_log_likelihood(&self, z: &Partition) -> f64;
    fn alpha(&self) -> f64;

    fn direct_log_joint(&self, z: &Partition) -> f64 {
        let n = z.num_covered();
        if n == 0 {
            return 0.0;
        }
        let a = self.alpha();
        let prior = ln_gamma(a) + z.num_blocks() as f64 * a.ln() - ln_gamma(a + n as f64)
            + z.blocks().iter().map(|b| ln_gamma(b.len() as f64)).sum::<f64>();
        prior + self.direct_log_likelihood(z)
    }
}

fn beta_term(ones: u64, zeros: u64, bp: f64, bm: f64) -> f64 {
    ln_beta(ones as f64 + bp, zeros as f64 + bm) - ln_beta(bp, bm)
}

impl DirectLikelihood for BernoulliMixture {
    fn direct_log_likelihood(&self, z: &Partition) -> f64 {
        let p = self.params();
        let data = self.data();
        let mut total = 0.0;
        for block in z.blocks() {
            for f in 0..data.num_features() {
                let ones = block.iter().filter(|&&o| data.get(f, o) == 1).count() as u64;
                total += beta_term(ones, block.len() as u64 - ones, p.beta_plus, p.beta_minus);
            }
        }
        total
    }

    fn alpha(&self) -> f64 {
        self.params().alpha
    }
}

impl DirectLikelihood for InfiniteRelational {
    fn direct_log_likelihood(&self, z: &Partition) -> f64 {
        let p = self.params();
        let g = self.data();
        let blocks = z.blocks();
        let mut total = 0.0;
        for (a, ba) in blocks.iter().enumerate() {
            for bb in &blocks[a..] {
                let (mut ones, mut dyads) = (0u64, 0u64);
                for (x, &u) in ba.iter().enumerate() {
                    let others: &[usize] = if std::ptr::eq(ba, bb) { &ba[x + 1..] } else { bb };
                    for &v in others {
                        dyads += 1;
                        ones += g.has_edge(u, v) as u64;
                    }
                }
                total += beta_term(ones, dyads - ones, p.beta_plus, p.beta_minus);
            }
        }
        total
    }

    fn alpha(&self) -> f64 {
        self.params().alpha
    }
}

/// Every partition of the model's observations with its exact posterior
/// probability, in restricted-growth-string order.
#[derive(Clone, Debug)]
pub struct PartitionTable {
    n: usize,
    entries: Vec<(Partition, f64)>,
    index: HashMap<CanonicalPartition, usize>,
}

impl PartitionTable {
    fn from_log_weights(n: usize, parts: Vec<Partition>, log_w: Vec<f64>) -> Self {
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        let index = parts.iter().enumerate().map(|(k, z)| (z.canonical(), k)).collect();
        let entries = parts.into_iter().zip(w.into_iter().map(|x| x / sum)).collect();
        Self { n, entries, index }
    }

    pub fn num_observations(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(Partition, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Position of `z` in the table, if it is a full partition of the
    /// table's observations.
    pub fn position(&self, z: &Partition) -> Option<usize> {
        self.index.get(&z.canonical()).copied()
    }

    pub fn probability(&self, z: &Partition) -> Option<f64> {
        self.position(z).map(|k| self.entries[k].1)
    }

    pub fn mode(&self) -> &Partition {
        let best = self
            .entries
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one partition");
        &best.0
    }

    /// Half the L1 distance between `counts / Σ counts` and the table.
    pub fn total_variation(&self, counts: &[u64]) -> Result<f64> {
        if counts.len() != self.entries.len() {
            return Err(Error::Precondition("one count per partition required".into()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Precondition("no samples".into()));
        }
        Ok(0.5
            * counts
                .iter()
                .zip(&self.entries)
                .map(|(&c, (_, p))| (c as f64 / total as f64 - p).abs())
                .sum::<f64>())
    }

    /// `partition,probability` rows, partitions written 1-based.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("partition,probability\n");
        for (z, p) in &self.entries {
            let _ = writeln!(s, "\"{}\",{p:.17e}", z.canonical());
        }
        s
    }
}

fn check_posterior_size(n: usize) -> Result<()> {
    if n > MAX_POSTERIOR || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "exact posterior needs 1 <= n <= {MAX_POSTERIOR}, got {n}"
        )));
    }
    Ok(())
}

/// Exact posterior from the model's own `log q`.
pub fn exact_posterior<M: PartitionModel>(model: &M) -> Result<PartitionTable> {
    let n = model.num_observations();
    check_posterior_size(n)?;
    let parts = enumerate_partitions(n)?;
    let log_w = parts.iter().map(|z| log_joint(model, z)).collect::<Result<Vec<_>>>()?;
    Ok(PartitionTable::from_log_weights(n, parts, log_w))
}

/// Exact posterior from the direct likelihood.
pub fn direct_posterior<M: PartitionModel + DirectLikelihood>(model: &M) -> Result<PartitionTable> {
    let n = model.num_observations();
    check_posterior_size(n)?;
    let parts = enumerate_partitions(n)?;
    let log_w = parts.iter().map(|z| model.direct_log_joint(z)).collect();
    Ok(PartitionTable::from_log_weights(n, parts, log_w))
}

/// A kernel with its fixed inputs, for exhaustive path enumeration.
#[derive(Clone, Copy, Debug)]
pub enum PathKernel<'c> {
    Sm { l: usize },
    Bsm { ctx: &'c ProposalContext, l: usize },
    Srm,
    Sarm { ctx: &'c ProposalContext },
    Arm { ctx: &'c ProposalContext },
}

/// One complete path through a kernel's choice tree.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub choices: Vec<usize>,
    pub partition: Partition,
    /// `Σ log` of the probabilities of the choices taken.
    pub log_path: f64,
    /// The probability the kernel itself accumulated for its proposal.
    pub log_t: f64,
    /// The path probability recomputed from the direct likelihood.
    pub log_check: f64,
}

/// The partition obtained from `asg` by moving `set` to `target`.
fn moved(asg: &Assignment, set: &[usize], target: Target) -> Partition {
    let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..asg.len() {
        if set.contains(&u) {
            continue;
        }
        if let Some(s) = asg.slot_of(u) {
            blocks.entry(s).or_default().push(u);
        }
    }
    let dest = match target {
        Target::Block(s) => s,
        Target::New => usize::MAX,
    };
    blocks.entry(dest).or_default().extend_from_slice(set);
    Partition::new(blocks.into_values().filter(|b| !b.is_empty()).collect())
        .expect("disjoint by construction")
}

/// Log probability of choice `k` at `point`, from the direct likelihood.
fn direct_choice_log_prob<M: DirectLikelihood>(model: &M, point: &ChoicePoint<'_>, k: usize) -> f64 {
    match point.kind {
        ChoiceKind::Uniform => point.probs[k].ln(),
        ChoiceKind::Sweep {
            asg,
            set,
            candidates,
        } => {
            let lw: Vec<f64> = candidates
                .iter()
                .map(|&t| model.direct_log_joint(&moved(asg, set, t)))
                .collect();
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = lw.iter().map(|w| (w - max).exp()).sum();
            lw[k] - max - sum.ln()
        }
    }
}

/// Walks every path of `kernel` from `state` for the pair `(i, j)`.
///
/// For split–merge the reported `log_t` is the kernel's own transition term
/// (the final sweep for a split, 0 for a merge), which is not the path
/// probability: several launch paths end in the same proposal.
pub fn enumerate_kernel_paths<M: PartitionModel + DirectLikelihood>(
    kernel: PathKernel<'_>,
    state: &State<'_, M>,
    i: usize,
    j: usize,
    rank: &[usize],
) -> Result<Vec<Leaf>> {
    let model = state.model();
    let mut leaves = Vec::new();
    let mut prefix = Some(Vec::new());
    while let Some(p) = prefix {
        if leaves.len() >= MAX_LEAVES {
            return Err(Error::TooManyLeaves(MAX_LEAVES));
        }
        let mut driver =
            ScriptedDriver::with_inspector(p, |pt, k| direct_choice_log_prob(model, pt, k));
        let out = match kernel {
            PathKernel::Sm { l } | PathKernel::Bsm { l, .. } => {
                let launch = match kernel {
                    PathKernel::Bsm { ctx, .. } => Launch::Informed(ctx),
                    _ => Launch::Random,
                };
                split_merge(state, i, j, launch, l, rank, &mut driver)?
                    .map(|path| (path.state.partition(), path.log_t_fwd))
            }
            PathKernel::Srm | PathKernel::Sarm { .. } | PathKernel::Arm { .. } => {
                let (variant, ctx) = match kernel {
                    PathKernel::Sarm { ctx } => (Variant::Informed, Some(ctx)),
                    PathKernel::Arm { ctx } => (Variant::Full, Some(ctx)),
                    _ => (Variant::Simple, None),
                };
                reconfigure(variant, state, i, j, ctx, rank, &mut driver)?
                    .map(|(st, log_t)| (st.partition(), log_t))
            }
        };
        let Some((partition, log_t)) = out else {
            return Err(Error::Precondition("kernel abandoned a scripted path".into()));
        };
        let steps = driver.steps();
        leaves.push(Leaf {
            choices: driver.choices(),
            partition,
            log_path: steps.iter().map(|s| s.probs[s.chosen].ln()).sum(),
            log_t,
            log_check: steps.iter().map(|s| s.check.expect("inspected")).sum(),
        });
        prefix = driver.next_prefix();
    }
    Ok(leaves)
}

/// Whether no two leaves end in the same partition.
pub fn is_injective(leaves: &[Leaf]) -> bool {
    let mut seen = std::collections::HashSet::new();
    leaves.iter().all(|l| seen.insert(l.partition.canonical()))
}

/// Proposal distribution implied by the leaves: path probabilities summed
/// per final partition.
pub fn proposal_distribution(leaves: &[Leaf]) -> HashMap<CanonicalPartition, f64> {
    let mut out = HashMap::new();
    for l in leaves {
        *out.entry(l.partition.canonical()).or_insert(0.0) += l.log_path.exp();
    }
    out
}

/// Empirical against exact frequency of one partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub partition: String,
    pub count: u64,
    pub empirical: f64,
    pub exact: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub samples: u64,
    pub rows: Vec<FrequencyRow>,
    pub total_variation: f64,
    pub max_deviation: f64,
}

impl FrequencyReport {
    pub fn new(table: &PartitionTable, counts: &[u64]) -> Result<Self> {
        let total_variation = table.total_variation(counts)?;
        let samples: u64 = counts.iter().sum();
        let rows: Vec<FrequencyRow> = table
            .entries()
            .iter()
            .zip(counts)
            .map(|((z, p), &c)| {
                let empirical = c as f64 / samples as f64;
                FrequencyRow {
                    partition: z.canonical().to_string(),
                    count: c,
                    empirical,
                    exact: *p,
                    deviation: (empirical - p).abs(),
                }
            })
            .collect();
        let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
        Ok(Self {
            samples,
            rows,
            total_variation,
            max_deviation,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("partition,count,empirical,exact,deviation\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "\"{}\",{},{},{},{}",
                r.partition, r.count, r.empirical, r.exact, r.deviation
            );
        }
        s
    }
}

/// Runs `config` and tallies every post-warm-up state of every chain
/// against the exact posterior.
pub fn verify_exact<M: PartitionModel>(model: &M, config: &RunConfig) -> Result<FrequencyReport> {
    let table = exact_posterior(model)?;
    let mut counts = vec![0u64; table.len()];
    for restart in 0..config.restarts {
        let mut ensemble = Ensemble::new(model, config, restart)?;
        for _ in 0..config.iterations {
            for rec in ensemble.step()? {
                let z = Partition::from_labels(&rec.labels);
                let k = table.position(&z).expect("every full partition is tabulated");
                counts[k] += 1;
            }
        }
    }
    FrequencyReport::new(&table, &counts)
}
