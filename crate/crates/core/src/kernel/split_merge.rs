use super::reconfigure::refine_within;
use super::{driven_sweep, slot_labels, ChoiceKind, ChoicePoint, Driver, MoveKind, ProposalContext};
use crate::error::{Error, Result};
use crate::model::{PartitionModel, Target};
use crate::state::State;
use crate::sweep::forced_sweep;

/// How the launch state is seeded.
#[derive(Clone, Copy, Debug)]
pub enum Launch<'c> {
    /// `{i}`, `{j}`, then every other member assigned to one of them by a
    /// fair coin.
    Random,
    /// The blocks of `i` and `j` in the refinement of the two reference
    /// partitions, restricted to the affected observations. The rest start
    /// unassigned and are placed by the first restricted sweep.
    Informed(&'c ProposalContext),
}

/// A split–merge proposal: the candidate state and both transition
/// probabilities (one of which is 1 by construction).
pub struct SmPath<'m, M: PartitionModel> {
    pub state: State<'m, M>,
    pub kind: MoveKind,
    pub log_t_fwd: f64,
    pub log_t_rev: f64,
}

/// Split–merge proposal for `(i, j)` with `l` intermediate restricted sweeps.
///
/// The reference partitions only seed the launch state, so the launch
/// distribution is the same from either end of a split/merge pair.
#[allow(clippy::too_many_arguments)]
pub fn split_merge<'m, M: PartitionModel>(
    state: &State<'m, M>,
    i: usize,
    j: usize,
    launch: Launch<'_>,
    l: usize,
    rank: &[usize],
    driver: &mut dyn Driver,
) -> Result<Option<SmPath<'m, M>>> {
    let asg = state.assignment();
    let n = asg.len();
    if i == j || i >= n || j >= n {
        return Err(Error::Precondition(format!("invalid pair ({i}, {j})")));
    }
    if asg.num_covered() != n {
        return Err(Error::Precondition("state must cover every observation".into()));
    }
    let z0 = slot_labels(state);
    let (si, sj) = (z0[i], z0[j]);
    let split = si == sj;
    let inside: Vec<usize> = (0..n).filter(|&u| z0[u] == si || z0[u] == sj).collect();
    let mut rest: Vec<usize> = inside.iter().copied().filter(|&u| u != i && u != j).collect();
    rest.sort_unstable_by_key(|&h| rank[h]);

    let (seed_i, seed_j) = match launch {
        Launch::Random => (vec![i], vec![j]),
        Launch::Informed(c) => {
            let r = refine_within(&inside, &[c.za_labels(), c.zb_labels()]);
            let pick = |x: usize| r.iter().find(|b| b.contains(&x)).expect("inside").clone();
            (pick(i), pick(j))
        }
    };
    if seed_i.contains(&j) {
        return Err(Error::Precondition("launch seeds must separate i and j".into()));
    }

    let mut st = state.clone();
    st.uncover(asg.members(si))?;
    if !split {
        st.uncover(asg.members(sj))?;
    }
    let bi = st.move_set(&seed_i, Target::New)?;
    let bj = st.move_set(&seed_j, Target::New)?;

    if let Launch::Random = launch {
        for &h in &rest {
            let point = ChoicePoint {
                kind: ChoiceKind::Uniform,
                probs: &[0.5, 0.5],
                hint: None,
            };
            let Some(k) = driver.pick(&point) else {
                return Ok(None);
            };
            st.move_set(&[h], Target::Block(if k == 0 { bi } else { bj }))?;
        }
    }

    let pair = [Target::Block(bi), Target::Block(bj)];
    for _ in 0..l {
        for &h in &rest {
            if driven_sweep(&mut st, &[h], &pair, driver, |_, _| None)?.is_none() {
                return Ok(None);
            }
        }
    }

    if split {
        let mut log_t = 0.0;
        for &h in &rest {
            let Some(r) = driven_sweep(&mut st, &[h], &pair, driver, |_, _| None)? else {
                return Ok(None);
            };
            log_t += r.log_prob;
        }
        Ok(Some(SmPath {
            state: st,
            kind: MoveKind::Split,
            log_t_fwd: log_t,
            log_t_rev: 0.0,
        }))
    } else {
        let mut log_t = 0.0;
        for &h in &rest {
            let k = if z0[h] == si { 0 } else { 1 };
            log_t += forced_sweep(&mut st, &[h], &pair, k)?.log_prob;
        }
        let mut merged = state.clone();
        merged.move_set(asg.members(sj), Target::Block(si))?;
        Ok(Some(SmPath {
            state: merged,
            kind: MoveKind::Merge,
            log_t_fwd: 0.0,
            log_t_rev: log_t,
        }))
    }
}
