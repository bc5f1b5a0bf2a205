use super::{BetaTable, CrpTable, ModelParams, PartitionModel, Target};
use crate::error::{Error, Result};
use crate::state::Assignment;

/// Simple undirected graph: symmetric 0/1 adjacency with zero diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkDataset {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl NetworkDataset {
    /// Builds `1[(A + Aᵀ) > 0]` with the diagonal removed from 0-based pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Data(format!("edge ({u},{v}) outside 0..{n}")));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for nb in &mut adj {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { n, adj })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Unordered edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (u, nb) in self.adj.iter().enumerate() {
            out.extend(nb.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// Same graph with vertex `u` renamed `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges: Vec<_> = self.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Self::from_edges(self.n, &edges).expect("permutation keeps vertices in range")
    }

    /// Whitespace-separated 1-based edge list.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# vertices {}\n", self.n);
        for (u, v) in self.edges() {
            out.push_str(&format!("{} {}\n", u + 1, v + 1));
        }
        out
    }
}

/// Infinite relational model for undirected graphs: one Beta-distributed edge
/// probability per unordered block pair, diagonal included, integrated out.
#[derive(Clone, Debug)]
pub struct InfiniteRelational {
    data: NetworkDataset,
    params: ModelParams,
    crp: CrpTable,
    beta: BetaTable,
    cap: usize,
}

/// Edge counts between slots (symmetric, `cap × cap`); the diagonal holds
/// within-block edges counted once per unordered dyad.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationalStats {
    edges: Vec<u32>,
}

pub struct RelationalMove {
    size: u64,
    // edges from the moved set to each slot, excluding the set itself
    to_slot: Vec<u32>,
    internal: u64,
}

impl InfiniteRelational {
    pub fn new(data: NetworkDataset, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let n = data.num_vertices();
        Ok(Self {
            crp: CrpTable::new(params.alpha, n),
            beta: BetaTable::new(&params, n * n / 2 + 1),
            cap: Assignment::slot_capacity(n),
            data,
            params,
        })
    }

    pub fn data(&self) -> &NetworkDataset {
        &self.data
    }

    #[inline]
    fn cross(&self, a: u64, b: u64, e: u64) -> f64 {
        let total = a * b;
        if total == 0 {
            0.0
        } else {
            self.beta.term(e, total - e)
        }
    }

    #[inline]
    fn within(&self, a: u64, e: u64) -> f64 {
        let total = a * a.saturating_sub(1) / 2;
        if total == 0 {
            0.0
        } else {
            self.beta.term(e, total - e)
        }
    }

    #[inline]
    fn e(&self, stats: &RelationalStats, a: usize, b: usize) -> u64 {
        stats.edges[a * self.cap + b] as u64
    }

    fn bump(&self, stats: &mut RelationalStats, a: usize, b: usize, by: i64) {
        let idx = a * self.cap + b;
        stats.edges[idx] = (stats.edges[idx] as i64 + by) as u32;
        if a != b {
            let idx = b * self.cap + a;
            stats.edges[idx] = (stats.edges[idx] as i64 + by) as u32;
        }
    }
}

impl PartitionModel for InfiniteRelational {
    type Stats = RelationalStats;
    type Move = RelationalMove;

    fn num_observations(&self) -> usize {
        self.data.num_vertices()
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn crp(&self) -> &CrpTable {
        &self.crp
    }

    fn empty_stats(&self) -> RelationalStats {
        RelationalStats {
            edges: vec![0; self.cap * self.cap],
        }
    }

    fn prepare_move(&self, asg: &Assignment, set: &[usize]) -> RelationalMove {
        let mut to_slot = vec![0u32; self.cap];
        let mut internal = 0u64;
        let mask = (set.len() > 16).then(|| {
            let mut m = vec![false; self.data.num_vertices()];
            for &u in set {
                m[u] = true;
            }
            m
        });
        let inside = |v: usize| match &mask {
            Some(m) => m[v],
            None => set.contains(&v),
        };
        for &u in set {
            for &v in self.data.neighbors(u) {
                if inside(v) {
                    internal += 1;
                } else if let Some(s) = asg.slot_of(v) {
                    to_slot[s] += 1;
                }
            }
        }
        RelationalMove {
            size: set.len() as u64,
            to_slot,
            internal: internal / 2,
        }
    }

    fn delta_log_likelihood(
        &self,
        stats: &RelationalStats,
        asg: &Assignment,
        mv: &RelationalMove,
        source: Option<usize>,
        target: Target,
    ) -> f64 {
        let c = mv.size;
        let to = |k: usize| mv.to_slot[k] as u64;
        let target = match target {
            Target::Block(t) => Some(t),
            Target::New => None,
        };
        let ms = source.map_or(0, |s| asg.size(s) as u64);
        let mt = target.map_or(0, |t| asg.size(t) as u64);
        let (mut old, mut new) = (0.0, 0.0);

        for &k in asg.active() {
            if Some(k) == source || Some(k) == target {
                continue;
            }
            let mk = asg.size(k) as u64;
            if let Some(s) = source {
                let esk = self.e(stats, s, k);
                old += self.cross(ms, mk, esk);
                new += self.cross(ms - c, mk, esk - to(k));
            }
            let etk = target.map_or(0, |t| self.e(stats, t, k));
            old += self.cross(mt, mk, etk);
            new += self.cross(mt + c, mk, etk + to(k));
        }
        if let Some(s) = source {
            let ess = self.e(stats, s, s);
            old += self.within(ms, ess);
            new += self.within(ms - c, ess - to(s) - mv.internal);
            let est = target.map_or(0, |t| self.e(stats, s, t));
            let to_t = target.map_or(0, to);
            old += self.cross(ms, mt, est);
            new += self.cross(ms - c, mt + c, est - to_t + to(s));
        }
        match target {
            Some(t) => {
                let ett = self.e(stats, t, t);
                old += self.within(mt, ett);
                new += self.within(mt + c, ett + to(t) + mv.internal);
            }
            None => new += self.within(c, mv.internal),
        }
        new - old
    }

    fn detach(&self, stats: &mut RelationalStats, mv: &RelationalMove, source: usize) {
        for k in 0..self.cap {
            let x = mv.to_slot[k] as i64;
            if k == source {
                self.bump(stats, source, source, -(x + mv.internal as i64));
            } else if x != 0 {
                self.bump(stats, source, k, -x);
            }
        }
    }

    fn attach(&self, stats: &mut RelationalStats, mv: &RelationalMove, target: usize) {
        for k in 0..self.cap {
            let x = mv.to_slot[k] as i64;
            if k == target {
                self.bump(stats, target, target, x + mv.internal as i64);
            } else if x != 0 {
                self.bump(stats, target, k, x);
            }
        }
    }

    fn log_likelihood(&self, stats: &RelationalStats, asg: &Assignment) -> f64 {
        let active = asg.active();
        let mut total = 0.0;
        for (a, &k) in active.iter().enumerate() {
            let mk = asg.size(k) as u64;
            total += self.within(mk, self.e(stats, k, k));
            for &l in &active[a + 1..] {
                total += self.cross(mk, asg.size(l) as u64, self.e(stats, k, l));
            }
        }
        total
    }

    fn stats_from_scratch(&self, asg: &Assignment) -> RelationalStats {
        let mut stats = self.empty_stats();
        for (u, v) in self.data.edges() {
            if let (Some(a), Some(b)) = (asg.slot_of(u), asg.slot_of(v)) {
                self.bump(&mut stats, a, b, 1);
            }
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_joint;
    use crate::partition::Partition;
    use crate::state::State;

    fn toy() -> InfiniteRelational {
        let g = NetworkDataset::from_edges(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        InfiniteRelational::new(g, ModelParams::default()).unwrap()
    }

    #[test]
    fn symmetrises_and_drops_loops() {
        let g = NetworkDataset::from_edges(3, &[(0, 1), (1, 0), (2, 2)]).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn singletons_likelihood() {
        // each of the 6 dyads contributes B(N⁺+1, N⁻+1)/B(1,1) = 1/2
        let m = toy();
        let z = Partition::singletons(4);
        let state = State::from_partition(&m, &z).unwrap();
        let lik = state.log_joint() - state.log_prior();
        assert!((lik - 6.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn within_block_edges_count() {
        // ({1,2,3,4}): 6 dyads, 4 edges → B(5,3)/B(1,1) = 4!2!/7! = 1/105
        let m = toy();
        let z = Partition::single_block(4);
        let state = State::from_partition(&m, &z).unwrap();
        let lik = state.log_joint() - state.log_prior();
        assert!((lik - (1.0f64 / 105.0).ln()).abs() < 1e-12);
        assert!((log_joint(&m, &z).unwrap() - state.log_joint()).abs() < 1e-15);
    }

    #[test]
    fn incremental_stats_match_rebuild() {
        let m = toy();
        let mut state = State::from_partition(&m, &"1,2;3,4".parse().unwrap()).unwrap();
        state.move_set(&[2], Target::New).unwrap();
        assert!(state.stats_match_rebuild());
        let s = state.assignment().slot_of(0).unwrap();
        state.move_set(&[3], Target::Block(s)).unwrap();
        assert!(state.stats_match_rebuild());
        state.uncover(&[0, 1, 3]).unwrap();
        assert!(state.stats_match_rebuild());
    }
}
