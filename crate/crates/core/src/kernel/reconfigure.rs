use std::collections::HashMap;

use super::{driven_sweep, matches_labels, slot_labels, Driver, ProposalContext, ReplayDriver};
use crate::error::{Error, Result};
use crate::model::{PartitionModel, Target};
use crate::partition::iteration_order;
use crate::state::State;
use crate::sweep::full_candidates;

/// Members of the reconfiguration family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Seeds `{i}, {j}`; no context.
    Simple,
    /// Seeds from the context refinement, no block moves.
    Informed,
    /// Seeds from the context refinement, remaining refinement blocks moved
    /// jointly before the per-observation pass.
    Full,
}

/// Blocks of the refinement of `set` by every label vector in `keys`,
/// ordered by minimum element.
pub(crate) fn refine_within(set: &[usize], keys: &[&[usize]]) -> Vec<Vec<usize>> {
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for &x in set {
        groups.entry(keys.iter().map(|k| k[x]).collect()).or_default().push(x);
    }
    let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.sort_unstable_by_key(|b| b[0]);
    blocks
}

struct Walk<'a> {
    i: usize,
    j: usize,
    insider: &'a [bool],
    settled: &'a [bool],
}

impl Walk<'_> {
    /// The candidate that keeps the construction on course for `target`.
    ///
    /// The set's earmark `e` must end up with `i`, with `j`, or with some
    /// observation whose final block is already determined: one already
    /// processed, or an outsider not yet processed (it will stay put).
    /// Otherwise it has to start a block of its own.
    fn hint<M: PartitionModel>(
        &self,
        st: &State<'_, M>,
        target: &[usize],
        set: &[usize],
        candidates: &[Target],
        outsider: bool,
    ) -> Option<usize> {
        let asg = st.assignment();
        let pos = |t: Target| candidates.iter().position(|&c| c == t);
        let e = set[0];
        let want = target[e];
        if want == target[self.i] {
            return pos(Target::Block(asg.slot_of(self.i)?));
        }
        if want == target[self.j] {
            return pos(Target::Block(asg.slot_of(self.j)?));
        }
        if outsider {
            return pos(Target::Block(asg.slot_of(e)?));
        }
        for (k, &c) in candidates.iter().enumerate() {
            if let Target::Block(x) = c {
                let anchored = asg.members(x).iter().any(|&u| {
                    target[u] == want && !set.contains(&u) && (self.settled[u] || !self.insider[u])
                });
                if anchored {
                    return Some(k);
                }
            }
        }
        pos(Target::New).or_else(|| pos(Target::Block(asg.slot_of(e)?)))
    }
}

/// Builds a reconfiguration proposal from `state` for the pair `(i, j)`,
/// taking every choice from `driver`. Returns the proposal and the log of
/// the product of realised sweep probabilities, or `None` if the driver
/// abandoned the construction or its target was not reached.
pub fn reconfigure<'m, M: PartitionModel>(
    variant: Variant,
    state: &State<'m, M>,
    i: usize,
    j: usize,
    ctx: Option<&ProposalContext>,
    rank: &[usize],
    driver: &mut dyn Driver,
) -> Result<Option<(State<'m, M>, f64)>> {
    let asg = state.assignment();
    let n = asg.len();
    if i == j || i >= n || j >= n {
        return Err(Error::Precondition(format!("invalid pair ({i}, {j})")));
    }
    if asg.num_covered() != n {
        return Err(Error::Precondition("state must cover every observation".into()));
    }
    if rank.len() != n {
        return Err(Error::Precondition("rank must have one entry per observation".into()));
    }
    let z0 = slot_labels(state);
    let split = z0[i] == z0[j];
    let insider: Vec<bool> = z0.iter().map(|&l| l == z0[i] || l == z0[j]).collect();
    let inside: Vec<usize> = (0..n).filter(|&u| insider[u]).collect();

    let refinement = match variant {
        Variant::Simple => inside.iter().map(|&u| vec![u]).collect(),
        Variant::Informed | Variant::Full => {
            let c = ctx.ok_or_else(|| {
                Error::Precondition("informed reconfiguration needs a context".into())
            })?;
            refine_within(&inside, &[c.za_labels(), c.zb_labels(), &z0])
        }
    };
    let ci = refinement.iter().find(|b| b.contains(&i)).expect("i is inside").clone();
    let cj = refinement.iter().find(|b| b.contains(&j)).expect("j is inside").clone();
    debug_assert!(!ci.contains(&j), "the split reference separates i and j");

    let mut st = state.clone();
    st.uncover(asg.members(z0[i]))?;
    if !split {
        st.uncover(asg.members(z0[j]))?;
    }
    if split {
        st.move_set(&ci, Target::New)?;
        st.move_set(&cj, Target::New)?;
    } else {
        let mut both = ci.clone();
        both.extend_from_slice(&cj);
        st.move_set(&both, Target::New)?;
    }

    let mut settled = vec![false; n];
    settled[i] = true;
    settled[j] = true;
    let mut log_t = 0.0;

    if variant == Variant::Full {
        let rest: Vec<Vec<usize>> = refinement
            .into_iter()
            .filter(|b| !b.contains(&i) && !b.contains(&j))
            .collect();
        for a in iteration_order(rest, Some(rank)) {
            let candidates = full_candidates(st.assignment(), &a)?;
            let walk = Walk {
                i,
                j,
                insider: &insider,
                settled: &settled,
            };
            let r = driven_sweep(&mut st, &a, &candidates, driver, |s, t| {
                walk.hint(s, t, &a, &candidates, false)
            })?;
            let Some(r) = r else { return Ok(None) };
            log_t += r.log_prob;
            settled[a[0]] = true;
        }
    }

    let mut order: Vec<usize> = (0..n).filter(|&h| !settled[h]).collect();
    order.sort_unstable_by_key(|&h| rank[h]);
    for h in order {
        let a = st.assignment();
        let candidates = if insider[h] {
            full_candidates(a, &[h])?
        } else {
            let own = a.slot_of(h).expect("outsiders stay covered");
            let originals = a.members(own).iter().filter(|&&u| z0[u] == z0[h]).count();
            if originals == 1 && a.size(own) >= 2 {
                vec![Target::Block(own)]
            } else {
                let bj = Target::Block(a.slot_of(j).expect("seeded"));
                if split {
                    let bi = Target::Block(a.slot_of(i).expect("seeded"));
                    vec![bi, bj, Target::Block(own)]
                } else {
                    vec![bj, Target::Block(own)]
                }
            }
        };
        let walk = Walk {
            i,
            j,
            insider: &insider,
            settled: &settled,
        };
        let outsider = !insider[h];
        let r = driven_sweep(&mut st, &[h], &candidates, driver, |s, t| {
            walk.hint(s, t, &[h], &candidates, outsider)
        })?;
        let Some(r) = r else { return Ok(None) };
        log_t += r.log_prob;
        settled[h] = true;
    }

    if let Some(t) = driver.target() {
        if !matches_labels(&st, t) {
            return Ok(None);
        }
    }
    Ok(Some((st, log_t)))
}

/// `log T(original | proposal)`: the complementary move from `proposal`
/// with the same pair and context, forced toward `original`. Minus infinity
/// when `original` is not reachable.
pub fn reverse_log_prob<M: PartitionModel>(
    variant: Variant,
    proposal: &State<'_, M>,
    original: &State<'_, M>,
    i: usize,
    j: usize,
    ctx: Option<&ProposalContext>,
    rank: &[usize],
) -> Result<f64> {
    let target = slot_labels(original);
    let mut driver = ReplayDriver::new(&target);
    Ok(reconfigure(variant, proposal, i, j, ctx, rank, &mut driver)?
        .map_or(f64::NEG_INFINITY, |(_, log_t)| log_t))
}
