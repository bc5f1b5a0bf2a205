//! Conjugate partition models.
//!
//! A model evaluates `log q(z) = log p(Y | z) + log p_CRP(z)` for partitions
//! of (a subset of) its observations, and the change in that quantity when a
//! set of observations is reassigned jointly. The CRP part is shared; each
//! likelihood supplies its own sufficient statistics.

mod crp;
mod mixture;
mod relational;

pub use crp::{crp_log_density, CrpTable};
pub use mixture::{BernoulliMixture, FeatureDataset};
pub use relational::{InfiniteRelational, NetworkDataset};

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::state::{Assignment, State};

/// CRP concentration and Beta pseudo-counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta_plus: 1.0,
            beta_minus: 1.0,
        }
    }
}

impl ModelParams {
    pub fn new(alpha: f64, beta_plus: f64, beta_minus: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta_plus,
            beta_minus,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta_plus", self.beta_plus),
            ("beta_minus", self.beta_minus),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where a set of observations is sent by a joint reassignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    /// An existing block, identified by its slot in the [`Assignment`].
    Block(usize),
    /// A fresh block.
    New,
}

/// A conjugate likelihood over partitions with incrementally maintained
/// sufficient statistics.
///
/// `prepare_move` summarises a set of observations relative to the current
/// assignment; the summary stays valid while that set is detached and
/// re-attached elsewhere.
pub trait PartitionModel: Send + Sync {
    type Stats: Clone + Debug + PartialEq + Send + Sync;
    type Move;

    fn num_observations(&self) -> usize;
    fn params(&self) -> &ModelParams;
    fn crp(&self) -> &CrpTable;

    fn empty_stats(&self) -> Self::Stats;
    fn prepare_move(&self, asg: &Assignment, set: &[usize]) -> Self::Move;

    /// Change in `log p(Y | z)` when the prepared set moves from `source`
    /// (`None` if uncovered) to `target`. `source` and `target` differ.
    fn delta_log_likelihood(
        &self,
        stats: &Self::Stats,
        asg: &Assignment,
        mv: &Self::Move,
        source: Option<usize>,
        target: Target,
    ) -> f64;

    fn detach(&self, stats: &mut Self::Stats, mv: &Self::Move, source: usize);
    fn attach(&self, stats: &mut Self::Stats, mv: &Self::Move, target: usize);

    /// `log p(Y | z)` over the covered observations, from the statistics.
    fn log_likelihood(&self, stats: &Self::Stats, asg: &Assignment) -> f64;

    /// Statistics for `asg` computed directly from the data.
    fn stats_from_scratch(&self, asg: &Assignment) -> Self::Stats;
}

/// `log q(z)` for a partition covering every observation of the model.
pub fn log_joint<M: PartitionModel>(model: &M, z: &Partition) -> Result<f64> {
    let n = model.num_observations();
    if !z.is_full(n) {
        return Err(Error::Precondition(format!(
            "partition covers {} observations, model has {n}",
            z.num_covered()
        )));
    }
    Ok(State::from_partition(model, z)?.log_joint())
}

/// Lookup table for `log B(k⁺ + β⁺, k⁻ + β⁻) − log B(β⁺, β⁻)`.
#[derive(Clone, Debug)]
pub(crate) struct BetaTable {
    plus: Vec<f64>,
    minus: Vec<f64>,
    both: Vec<f64>,
    base: f64,
}

impl BetaTable {
    pub(crate) fn new(params: &ModelParams, max_count: usize) -> Self {
        let table = |shift: f64, len: usize| -> Vec<f64> {
            (0..len).map(|k| ln_gamma(k as f64 + shift)).collect()
        };
        let (bp, bm) = (params.beta_plus, params.beta_minus);
        Self {
            plus: table(bp, max_count + 1),
            minus: table(bm, max_count + 1),
            both: table(bp + bm, max_count + 1),
            base: ln_gamma(bp) + ln_gamma(bm) - ln_gamma(bp + bm),
        }
    }

    #[inline]
    pub(crate) fn term(&self, ones: u64, zeros: u64) -> f64 {
        let (a, b) = (ones as usize, zeros as usize);
        self.plus[a] + self.minus[b] - self.both[a + b] - self.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::ln_beta;

    #[test]
    fn beta_table_matches_closed_form() {
        let params = ModelParams::new(1.0, 0.7, 2.5).unwrap();
        let t = BetaTable::new(&params, 20);
        for (a, b) in [(0, 0), (3, 1), (7, 9), (0, 12)] {
            let want = ln_beta(a as f64 + 0.7, b as f64 + 2.5) - ln_beta(0.7, 2.5);
            assert!((t.term(a, b) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn params_must_be_positive() {
        assert!(ModelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, f64::NAN).is_err());
    }
}
