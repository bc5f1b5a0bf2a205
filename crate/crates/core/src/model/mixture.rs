use std::path::Path;

use super::{BetaTable, CrpTable, ModelParams, PartitionModel, Target};
use crate::error::{Error, Result};
use crate::state::Assignment;

/// Binary feature matrix, `d` features × `n` observations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureDataset {
    d: usize,
    n: usize,
    // observation-major: columns[j * d + i] = A_ij
    columns: Vec<u8>,
}

impl FeatureDataset {
    /// From rows (one per feature) of 0/1 values.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Data("feature rows have unequal lengths".into()));
        }
        let mut columns = vec![0u8; d * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::Data(format!("entry ({i},{j}) is {v}, expected 0 or 1")));
                }
                columns[j * d + i] = v;
            }
        }
        Ok(Self { d, n, columns })
    }

    pub fn num_features(&self) -> usize {
        self.d
    }

    pub fn num_observations(&self) -> usize {
        self.n
    }

    /// Feature vector of observation `j`.
    pub fn column(&self, j: usize) -> &[u8] {
        &self.columns[j * self.d..(j + 1) * self.d]
    }

    pub fn get(&self, feature: usize, obs: usize) -> u8 {
        self.columns[obs * self.d + feature]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.d)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Same data with observations permuted: new observation `perm[j]` is old `j`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut columns = vec![0u8; self.columns.len()];
        for (j, &pj) in perm.iter().enumerate() {
            columns[pj * self.d..(pj + 1) * self.d].copy_from_slice(self.column(j));
        }
        Self {
            d: self.d,
            n: self.n,
            columns,
        }
    }

    /// Comma-separated 0/1 values, one line per feature, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.d * self.n * 2);
        for row in self.rows() {
            let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| match t.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Data(format!(
                        "line {}: expected 0 or 1, found {other:?}",
                        ln + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Beta–Bernoulli mixture: every (feature, block) pair has its own
/// Beta-distributed success probability, integrated out.
#[derive(Clone, Debug)]
pub struct BernoulliMixture {
    data: FeatureDataset,
    params: ModelParams,
    crp: CrpTable,
    beta: BetaTable,
}

/// Per-slot count of ones for each feature, `cap × d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixtureStats {
    ones: Vec<u32>,
}

pub struct MixtureMove {
    size: u32,
    ones: Vec<u32>,
}

impl BernoulliMixture {
    pub fn new(data: FeatureDataset, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let n = data.num_observations();
        Ok(Self {
            crp: CrpTable::new(params.alpha, n),
            beta: BetaTable::new(&params, n),
            data,
            params,
        })
    }

    pub fn data(&self) -> &FeatureDataset {
        &self.data
    }

    #[inline]
    fn block_term(&self, ones: &[u32], size: u32) -> f64 {
        ones.iter()
            .map(|&o| self.beta.term(o as u64, (size - o) as u64))
            .sum()
    }

    fn slot_ones<'a>(&self, stats: &'a MixtureStats, slot: usize) -> &'a [u32] {
        let d = self.data.num_features();
        &stats.ones[slot * d..(slot + 1) * d]
    }
}

impl PartitionModel for BernoulliMixture {
    type Stats = MixtureStats;
    type Move = MixtureMove;

    fn num_observations(&self) -> usize {
        self.data.num_observations()
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn crp(&self) -> &CrpTable {
        &self.crp
    }

    fn empty_stats(&self) -> MixtureStats {
        let cap = Assignment::slot_capacity(self.num_observations());
        MixtureStats {
            ones: vec![0; cap * self.data.num_features()],
        }
    }

    fn prepare_move(&self, _asg: &Assignment, set: &[usize]) -> MixtureMove {
        let mut ones = vec![0u32; self.data.num_features()];
        for &j in set {
            for (o, &v) in ones.iter_mut().zip(self.data.column(j)) {
                *o += v as u32;
            }
        }
        MixtureMove {
            size: set.len() as u32,
            ones,
        }
    }

    fn delta_log_likelihood(
        &self,
        stats: &MixtureStats,
        asg: &Assignment,
        mv: &MixtureMove,
        source: Option<usize>,
        target: Target,
    ) -> f64 {
        let c = mv.size;
        let mut delta = 0.0;
        if let Some(s) = source {
            let size = asg.size(s) as u32;
            for (&o, &co) in self.slot_ones(stats, s).iter().zip(&mv.ones) {
                delta += self.beta.term((o - co) as u64, (size - c - (o - co)) as u64)
                    - self.beta.term(o as u64, (size - o) as u64);
            }
        }
        match target {
            Target::Block(t) => {
                let size = asg.size(t) as u32;
                for (&o, &co) in self.slot_ones(stats, t).iter().zip(&mv.ones) {
                    delta += self.beta.term((o + co) as u64, (size + c - o - co) as u64)
                        - self.beta.term(o as u64, (size - o) as u64);
                }
            }
            Target::New => delta += self.block_term(&mv.ones, c),
        }
        delta
    }

    fn detach(&self, stats: &mut MixtureStats, mv: &MixtureMove, source: usize) {
        let d = self.data.num_features();
        for (o, &co) in stats.ones[source * d..(source + 1) * d].iter_mut().zip(&mv.ones) {
            *o -= co;
        }
    }

    fn attach(&self, stats: &mut MixtureStats, mv: &MixtureMove, target: usize) {
        let d = self.data.num_features();
        for (o, &co) in stats.ones[target * d..(target + 1) * d].iter_mut().zip(&mv.ones) {
            *o += co;
        }
    }

    fn log_likelihood(&self, stats: &MixtureStats, asg: &Assignment) -> f64 {
        asg.active()
            .iter()
            .map(|&s| self.block_term(self.slot_ones(stats, s), asg.size(s) as u32))
            .sum()
    }

    fn stats_from_scratch(&self, asg: &Assignment) -> MixtureStats {
        let mut stats = self.empty_stats();
        let d = self.data.num_features();
        for &s in asg.active() {
            for &j in asg.members(s) {
                for (o, &v) in stats.ones[s * d..(s + 1) * d].iter_mut().zip(self.data.column(j)) {
                    *o += v as u32;
                }
            }
        }
        stats
    }
}
