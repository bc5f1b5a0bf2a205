//! Gibbs-sweep primitives: joint reassignment of a set `C` to one block of a
//! candidate list, drawn with probability proportional to `q`.
//!
//! A candidate is either an existing block (by slot) or [`Target::New`]. When
//! `C` already sits in a block, that block's candidate means "stay", i.e. the
//! remainder of the block with `C` put back.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{PartitionModel, Target};
use crate::state::{Assignment, State};

/// Normalised candidate distribution for one sweep.
#[derive(Clone, Debug)]
pub struct Weights {
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Weights {
    /// Normalises unnormalised log weights with log-sum-exp.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::Precondition("candidate list is empty".into()));
        }
        if log_w.iter().any(|w| w.is_nan()) {
            return Err(Error::NotANumber("candidate weights"));
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Precondition("all candidates have zero weight".into()));
        }
        let scaled: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
        let sum: f64 = scaled.iter().sum();
        let log_sum = sum.ln();
        let log_probs = log_w.iter().map(|w| (w - max) - log_sum).collect();
        let probs = scaled.iter().map(|p| p / sum).collect();
        Ok(Self { log_probs, probs })
    }

    /// Inverse-CDF lookup for a uniform `u ∈ [0, 1)`. Zero-probability
    /// candidates are never returned.
    pub fn lookup(&self, u: f64) -> usize {
        inverse_cdf(&self.probs, u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.lookup(rng.random::<f64>())
    }
}

pub(crate) fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the accumulated mass
    last
}

/// The realised outcome of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepResult {
    /// Index into the candidate list.
    pub index: usize,
    /// Slot the moved set occupies afterwards.
    pub slot: usize,
    /// Log of the normalised weight of the chosen candidate.
    pub log_prob: f64,
}

/// Candidates for an unrestricted sweep: every block in list order, then
/// a fresh block. If `set` is the whole of its block, staying and opening a
/// fresh block are the same outcome, so the fresh block is omitted.
pub fn full_candidates(asg: &Assignment, set: &[usize]) -> Result<Vec<Target>> {
    let source = asg.locate(set)?;
    let mut out: Vec<Target> = asg.active().iter().map(|&s| Target::Block(s)).collect();
    let alone = source.is_some_and(|s| asg.size(s) == set.len());
    if !alone {
        out.push(Target::New);
    }
    Ok(out)
}

/// Normalised weights of moving `set` into each candidate.
pub fn candidate_weights<M: PartitionModel>(
    state: &State<'_, M>,
    set: &[usize],
    candidates: &[Target],
) -> Result<Weights> {
    prepared_weights(state, set, candidates).map(|p| p.weights)
}

pub(crate) struct Prepared<Mv> {
    pub(crate) weights: Weights,
    mv: Mv,
    source: Option<usize>,
}

pub(crate) fn prepared_weights<M: PartitionModel>(
    state: &State<'_, M>,
    set: &[usize],
    candidates: &[Target],
) -> Result<Prepared<M::Move>> {
    let source = state.assignment().locate(set)?;
    check_candidates(state, source, set, candidates)?;
    let mv = state.prepare(set);
    let log_w: Vec<f64> = candidates
        .iter()
        .map(|&t| state.delta_prepared(set.len(), &mv, source, t))
        .collect();
    Ok(Prepared {
        weights: Weights::from_log_weights(&log_w)?,
        mv,
        source,
    })
}

fn check_candidates<M: PartitionModel>(
    state: &State<'_, M>,
    source: Option<usize>,
    set: &[usize],
    candidates: &[Target],
) -> Result<()> {
    let asg = state.assignment();
    for (k, &t) in candidates.iter().enumerate() {
        state.check_target(t)?;
        if candidates[..k].contains(&t) {
            return Err(Error::Precondition("duplicate candidate".into()));
        }
        // a fresh block duplicates "stay" when the set fills its block
        if t == Target::New {
            if let Some(s) = source {
                if asg.size(s) == set.len() && candidates.contains(&Target::Block(s)) {
                    return Err(Error::Precondition(
                        "fresh block duplicates the stay candidate".into(),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Moves `set` into `candidates[index]` and reports the probability a
/// restricted sweep would have assigned to that choice.
pub fn forced_sweep<M: PartitionModel>(
    state: &mut State<'_, M>,
    set: &[usize],
    candidates: &[Target],
    index: usize,
) -> Result<SweepResult> {
    let p = prepared_weights(state, set, candidates)?;
    if index >= candidates.len() {
        return Err(Error::Precondition(format!(
            "forced index {index} outside {} candidates",
            candidates.len()
        )));
    }
    Ok(apply(state, set, candidates, p, index))
}

/// Draws a candidate for `set` with one uniform and moves it there.
pub fn restricted_sweep<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    set: &[usize],
    candidates: &[Target],
    rng: &mut R,
) -> Result<SweepResult> {
    let p = prepared_weights(state, set, candidates)?;
    let index = p.weights.sample(rng);
    Ok(apply(state, set, candidates, p, index))
}

/// Restricted sweep over all blocks plus a fresh one.
pub fn full_sweep_step<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    set: &[usize],
    rng: &mut R,
) -> Result<SweepResult> {
    let candidates = full_candidates(state.assignment(), set)?;
    restricted_sweep(state, set, &candidates, rng)
}

/// One full Gibbs sweep: every observation in `order` gets an unrestricted
/// single-site update.
pub fn gibbs_sweep<M: PartitionModel, R: Rng + ?Sized>(
    state: &mut State<'_, M>,
    order: &[usize],
    rng: &mut R,
) -> Result<()> {
    for &h in order {
        full_sweep_step(state, &[h], rng)?;
    }
    Ok(())
}

pub(crate) fn apply<M: PartitionModel>(
    state: &mut State<'_, M>,
    set: &[usize],
    candidates: &[Target],
    p: Prepared<M::Move>,
    index: usize,
) -> SweepResult {
    let slot = state.apply_prepared(set, &p.mv, p.source, candidates[index]);
    SweepResult {
        index,
        slot,
        log_prob: p.weights.log_probs[index],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InfiniteRelational, ModelParams, NetworkDataset};
    use crate::partition::Partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> InfiniteRelational {
        let g = NetworkDataset::from_edges(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        InfiniteRelational::new(g, ModelParams::default()).unwrap()
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let w = Weights::from_log_weights(&[-1e6, -1e6 + 1.0]).unwrap();
        // absolute precision is bounded by the spacing of doubles near 1e6
        assert!((w.probs[0] - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-9);
        assert!((w.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(Weights::from_log_weights(&[]).is_err());
        assert!(Weights::from_log_weights(&[f64::NAN]).is_err());
    }

    #[test]
    fn single_candidate_is_certain() {
        let m = toy();
        let mut s = State::from_partition(&m, &Partition::singletons(4)).unwrap();
        let own = s.assignment().slot_of(1).unwrap();
        let r = forced_sweep(&mut s, &[1], &[Target::Block(own)], 0).unwrap();
        assert_eq!(r.log_prob, 0.0);
    }

    #[test]
    fn singleton_has_no_duplicate_fresh_block() {
        let m = toy();
        let s = State::from_partition(&m, &Partition::singletons(4)).unwrap();
        let c = full_candidates(s.assignment(), &[1]).unwrap();
        assert_eq!(c.len(), 4);
        assert!(!c.contains(&Target::New));
        let own = s.assignment().slot_of(1).unwrap();
        assert!(candidate_weights(&s, &[1], &[Target::Block(own), Target::New]).is_err());
    }

    #[test]
    fn weights_match_brute_force() {
        let m = toy();
        let z = Partition::singletons(4);
        let s = State::from_partition(&m, &z).unwrap();
        let c = full_candidates(s.assignment(), &[1]).unwrap();
        let w = candidate_weights(&s, &[1], &c).unwrap();
        let outcomes: Vec<f64> = c
            .iter()
            .map(|&t| {
                let mut s2 = s.clone();
                s2.move_set(&[1], t).unwrap();
                crate::model::log_joint(&m, &s2.partition()).unwrap()
            })
            .collect();
        let direct = Weights::from_log_weights(&outcomes).unwrap();
        for (a, b) in w.probs.iter().zip(&direct.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_reproduces_restricted() {
        let m = toy();
        let z: Partition = "1,2;3;4".parse().unwrap();
        let base = State::from_partition(&m, &z).unwrap();
        let c = full_candidates(base.assignment(), &[1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        for k in 0..c.len() {
            let mut s = base.clone();
            total += forced_sweep(&mut s, &[1], &c, k).unwrap().log_prob.exp();
        }
        assert!((total - 1.0).abs() < 1e-12);
        for _ in 0..20 {
            let mut a = base.clone();
            let r = restricted_sweep(&mut a, &[1], &c, &mut rng).unwrap();
            let mut b = base.clone();
            let f = forced_sweep(&mut b, &[1], &c, r.index).unwrap();
            assert_eq!(r, f);
            assert_eq!(a.partition(), b.partition());
        }
    }
}
