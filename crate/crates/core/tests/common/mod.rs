#![allow(dead_code)]

use partition_mcmc::model::{BernoulliMixture, FeatureDataset, InfiniteRelational, ModelParams, NetworkDataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with edge probability one half.
pub fn random_irm(n: usize, seed: u64) -> InfiniteRelational {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(0.5) {
                edges.push((u, v));
            }
        }
    }
    let g = NetworkDataset::from_edges(n, &edges).unwrap();
    InfiniteRelational::new(g, ModelParams::new(0.8, 1.0, 1.5).unwrap()).unwrap()
}

pub fn random_bmm(n: usize, d: usize, seed: u64) -> BernoulliMixture {
    let mut r = rng(seed);
    let rows: Vec<Vec<u8>> = (0..d)
        .map(|_| (0..n).map(|_| r.random_bool(0.5) as u8).collect())
        .collect();
    let data = FeatureDataset::from_rows(&rows).unwrap();
    BernoulliMixture::new(data, ModelParams::new(1.3, 0.7, 1.0).unwrap()).unwrap()
}

pub fn random_rank(n: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(r);
    rank
}
